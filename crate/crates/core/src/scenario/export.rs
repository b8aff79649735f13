//! CSV and JSON artifacts of a simulation run.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::metrics::MetricsLog;
use crate::error::Result;

/// Round-trip float formatting with 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(log: &MetricsLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "round",
        "msd_linear",
        "msd_db",
        "mean_victim_target_dist",
        "mean_attacker_precision",
    ])?;
    for r in &log.rounds {
        w.write_record([
            r.round.to_string(),
            num(r.msd_linear),
            num(r.msd_db),
            opt(r.mean_victim_target_dist),
            opt(r.mean_attacker_precision),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_agents_csv<W: Write>(log: &MetricsLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = log.summary.dim;
    let mut header = vec!["round".to_string(), "agent".into(), "err_sq".into()];
    header.extend((1..=dim).map(|m| format!("w_{m}")));
    w.write_record(&header)?;
    for r in &log.agents {
        let mut row = vec![r.round.to_string(), r.agent.to_string(), num(r.err_sq)];
        row.extend(r.w.iter().map(|&x| num(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.json`, `metrics.csv`, `agents.csv`,
/// `topology_initial.json` and `topology_final.json` into `dir`.
pub fn write_outputs(log: &MetricsLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics_csv(log, fs::File::create(dir.join("metrics.csv"))?)?;
    write_agents_csv(log, fs::File::create(dir.join("agents.csv"))?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&log.summary)?)?;
    fs::write(dir.join("topology_initial.json"), log.initial_topology.to_json())?;
    fs::write(dir.join("topology_final.json"), log.final_topology.to_json())?;
    if !log.snapshots.is_empty() {
        fs::write(dir.join("weights.json"), serde_json::to_string_pretty(&log.snapshots)?)?;
    }
    Ok(())
}
