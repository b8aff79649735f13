use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use resdiff_core::attack::plan_network_attack;
use resdiff_core::diffusion::{msd_diffusion, msd_noncooperative, msd_partition_delta, to_db};
use resdiff_core::network::Topology;
use resdiff_core::scenario::{run, write_outputs, Algorithm, FSpec, MetricsLog, Scenario, ScenarioConfig};
use resdiff_core::Error;

#[derive(Parser)]
#[command(name = "resdiff", version, about = "Diffusion LMS under Byzantine attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics, summary and topologies.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also run the noncooperative and DLMSAW baselines on the same data.
        #[arg(long)]
        baselines: bool,
    },
    /// Final MSD of R-DLMSAW for each F, plus baselines.
    SweepF {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list, e.g. 0,1,3,5.
        #[arg(long = "f")]
        f_values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Greedy dominating set of a topology file.
    PlanAttack {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Closed-form steady-state MSD.
    MsdTheory {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        /// Noise variance, or `lo:hi` for values spread evenly over a range.
        #[arg(long)]
        sigma: String,
        /// Block sizes of a partition of the agents, e.g. 50,50.
        #[arg(long)]
        partition: Option<String>,
    },
    /// Parse and resolve a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CombinatorialGuard { .. } | Error::SingularRecovery(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>, baselines: bool) -> Result<String, Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let mut variants = vec![cfg.clone()];
    if baselines {
        for alg in [Algorithm::Noncoop, Algorithm::Dlmsaw] {
            if alg != cfg.algorithm {
                let mut c = cfg.clone();
                c.algorithm = alg;
                variants.push(c);
            }
        }
    }
    let logs: Vec<MetricsLog> = variants
        .par_iter()
        .map(|c| Scenario::build(c, seed).and_then(|s| run(&s)))
        .collect::<Result<_, _>>()?;
    let main = &logs[0];
    write_outputs(main, out)?;

    let mut msd_by_alg = serde_json::Map::new();
    for log in &logs {
        msd_by_alg.insert(log.summary.algorithm.clone(), log.summary.final_msd_db.into());
    }
    let mut summary = serde_json::to_value(&main.summary).map_err(Error::from)?;
    summary["final_msd_db_by_algorithm"] = serde_json::Value::Object(msd_by_alg);
    write_file(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(Error::from)?,
    )?;

    let s = &main.summary;
    let mut msg = String::new();
    let _ = writeln!(msg, "{}: final msd {:.2} dB", s.algorithm, s.final_msd_db);
    for log in &logs[1..] {
        let _ = writeln!(msg, "{}: final msd {:.2} dB", log.summary.algorithm, log.summary.final_msd_db);
    }
    let _ = writeln!(
        msg,
        "theory: noncooperative {:.2} dB, diffusion {:.2} dB",
        s.theory_msd_noncooperative_db, s.theory_msd_diffusion_db
    );
    let victims: Vec<_> = s.victims().collect();
    if !victims.is_empty() {
        let captured = victims.iter().filter(|v| v.attack_success == Some(true)).count();
        let _ = writeln!(msg, "attack: {captured}/{} victims captured", victims.len());
    }
    let _ = write!(msg, "wrote {}", out.display());
    Ok(msg)
}

#[derive(Serialize)]
struct SweepRow {
    algorithm: &'static str,
    f: Option<usize>,
    msd_db: f64,
    n_pruned_attack_links: usize,
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, Failure> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(usage(format!("--{flag} needs at least one value")));
    }
    items
        .into_iter()
        .map(|s| s.parse().map_err(|_| usage(format!("--{flag}: cannot parse `{s}`"))))
        .collect()
}

fn cmd_sweep_f(config: &Path, f_values: &str, out: &Path, seed: Option<u64>) -> Result<String, Failure> {
    let fs: Vec<usize> = parse_list("f", f_values)?;
    let cfg = ScenarioConfig::load(config)?;
    let mut points: Vec<(Algorithm, Option<usize>)> = vec![(Algorithm::Noncoop, None), (Algorithm::Dlmsaw, None)];
    points.extend(fs.iter().map(|&f| (Algorithm::Rdlmsaw, Some(f))));
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(alg, f)| {
            let mut c = cfg.clone();
            c.algorithm = alg;
            if let Some(f) = f {
                c.f = FSpec::Global(f as i64);
            }
            let log = run(&Scenario::build(&c, seed)?)?;
            Ok(SweepRow {
                algorithm: alg.name(),
                f,
                msd_db: log.summary.final_msd_db,
                n_pruned_attack_links: log.summary.pruned_attack_links,
            })
        })
        .collect::<Result<_, Error>>()?;

    std::fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let mut csv = String::from("algorithm,f,msd_db,n_pruned_attack_links\n");
    let mut table = String::from("algorithm  f   msd_db   pruned_attack_links\n");
    for r in &rows {
        let f = r.f.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{:.16e},{}", r.algorithm, f, r.msd_db, r.n_pruned_attack_links);
        let _ = writeln!(table, "{:<10} {:<3} {:>8.2} {:>4}", r.algorithm, f, r.msd_db, r.n_pruned_attack_links);
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    let _ = write!(table, "wrote {}", out.join("sweep.csv").display());
    Ok(table)
}

fn cmd_plan_attack(graph: &Path) -> Result<String, Failure> {
    let text = std::fs::read_to_string(graph).map_err(|e| usage(format!("{}: {e}", graph.display())))?;
    let topology = Topology::from_json(&text)?;
    let members = plan_network_attack(&topology);
    if !topology.is_dominating_set(&members)? {
        return Err(usage("planner produced a set that does not dominate the graph"));
    }
    let json = serde_json::json!({ "members": members, "size": members.len() });
    Ok(serde_json::to_string_pretty(&json).map_err(Error::from)?)
}

fn noise_profile(sigma: &str, n: usize) -> Result<Vec<f64>, Failure> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("--sigma: cannot parse `{s}`")))
    };
    let (lo, hi) = match sigma.split_once(':') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let v = parse(sigma)?;
            (v, v)
        }
    };
    if !(lo > 0.0 && lo <= hi) {
        return Err(usage(format!("--sigma: need 0 < lo <= hi, got {lo}:{hi}")));
    }
    if n == 1 {
        return Ok(vec![(lo + hi) / 2.0]);
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

fn cmd_msd_theory(mu: f64, m: usize, n: usize, sigma: &str, partition: Option<&str>) -> Result<String, Failure> {
    if n == 0 || m == 0 {
        return Err(usage("--m and --n must be positive"));
    }
    let noise = noise_profile(sigma, n)?;
    let ncop = msd_noncooperative(mu, m, &noise)?;
    let diff = msd_diffusion(mu, m, &noise)?;
    let mut out = String::new();
    let _ = writeln!(out, "quantity          linear          dB");
    let _ = writeln!(out, "msd_ncop          {ncop:<15.6e} {:.2}", to_db(ncop));
    let _ = write!(out, "msd_diff          {diff:<15.6e} {:.2}", to_db(diff));
    if let Some(blocks_arg) = partition {
        let sizes: Vec<usize> = parse_list("partition", blocks_arg)?;
        if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
            return Err(usage(format!("--partition: block sizes must be positive and sum to {n}")));
        }
        let mut blocks = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for s in sizes {
            blocks.push(noise[start..start + s].to_vec());
            start += s;
        }
        let delta = msd_partition_delta(mu, m, &blocks)?;
        let after = diff + delta;
        let _ = write!(out, "\nmsd_after         {after:<15.6e} {:.2}", to_db(after));
        let _ = write!(out, "\ndelta             {delta:<15.6e}");
    }
    Ok(out)
}

fn cmd_validate(config: &Path) -> Result<String, Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let seed = cfg.seed.unwrap_or(0);
    let scn = Scenario::build(&cfg, Some(seed))?;
    Ok(format!(
        "ok: {} agents, {} edges, {} compromised, algorithm {}, {} rounds",
        scn.n_agents(),
        scn.topology.edges().len(),
        scn.topology.compromised().len(),
        cfg.algorithm.name(),
        cfg.rounds
    ))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            baselines,
        } => cmd_run(config, out, *seed, *baselines),
        Command::SweepF {
            config,
            f_values,
            out,
            seed,
        } => cmd_sweep_f(config, f_values, out, *seed),
        Command::PlanAttack { graph } => cmd_plan_attack(graph),
        Command::MsdTheory {
            mu,
            m,
            n,
            sigma,
            partition,
        } => cmd_msd_theory(*mu, *m, *n, sigma, partition.as_deref()),
        Command::Validate { config } => cmd_validate(config),
    };
    match result {
        Ok(text) => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
