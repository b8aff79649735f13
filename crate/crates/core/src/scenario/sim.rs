//! Scenario resolution and the synchronous round loop.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::{
    Algorithm, AttackKind, CompromisedSpec, FPlan, ScenarioConfig, TopologySpec, Assignment,
};
use super::metrics::{
    empirical_msd, AgentRecord, AgentSummary, MetricsLog, RoundRecord, Summary, TrailingMean, TrailingVectorMean, WeightSnapshot,
};
use crate::attack::{plan_network_attack, recover_state, StrongAttacker, TargetTrajectory, WeakAttacker};
use crate::diffusion::{
    gather, lms_step, msd_diffusion, msd_noncooperative, to_db, AgentState, MessageBoard, StreamSample, Vector,
    WeightRow,
};
use crate::error::{Error, Result};
use crate::network::{random_geometric_with_gap, EdgeWeights, Topology};
use crate::resilient::{CostWindow, ResilientAgent};

/// A configuration with its graph, tasks, variances and adversaries resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub topology: Topology,
    pub positions: Option<Vec<[f64; 2]>>,
    /// Task index per agent.
    pub tasks: Vec<usize>,
    pub task_targets: Vec<TargetTrajectory>,
    pub sigma_u_sq: Vec<f64>,
    pub sigma_v_sq: Vec<f64>,
    pub f_plan: FPlan,
    /// Attacked agent -> compromised neighbors.
    pub victims: BTreeMap<usize, Vec<usize>>,
    pub attack_target: Option<TargetTrajectory>,
}

enum Adversary {
    Strong(StrongAttacker),
    Weak(WeakAttacker),
}

impl Scenario {
    /// Resolves `cfg`. The seed comes from `seed_override`, then from the
    /// config; having neither is an error.
    pub fn build(cfg: &ScenarioConfig, seed_override: Option<u64>) -> Result<Self> {
        cfg.validate()?;
        let seed = seed_override
            .or(cfg.seed)
            .ok_or_else(|| Error::config("seed", "no seed in the config and none given explicitly"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let (base, positions) = match &cfg.topology {
            TopologySpec::Geometric {
                n_agents,
                radius,
                gap,
                max_attempts,
            } => {
                let g = random_geometric_with_gap(*n_agents, *radius, *gap, *max_attempts, &mut rng)?;
                (g.topology, Some(g.positions))
            }
            TopologySpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                (Topology::from_json(&text)?, None)
            }
            TopologySpec::Inline {
                n_agents,
                edges,
                compromised,
                positions,
            } => (
                Topology::new(*n_agents, edges.iter().map(|e| (e[0], e[1])), compromised.iter().copied())?,
                positions.clone(),
            ),
        };
        let n = base.n_agents();

        let n_tasks = cfg.tasks.centers.len();
        let tasks = match &cfg.tasks.assignment {
            Assignment::Explicit(list) => {
                if list.len() != n {
                    return Err(Error::config(
                        "tasks.assignment",
                        format!("{} entries for {n} agents", list.len()),
                    ));
                }
                list.clone()
            }
            Assignment::Rule(_) => spatial_split(n, n_tasks, positions.as_deref()),
        };
        let task_targets = cfg
            .tasks
            .centers
            .iter()
            .map(|c| TargetTrajectory {
                base: Vector::from(c.clone()),
                motion: cfg.tasks.motion,
            })
            .collect();

        let [ulo, uhi] = cfg.sigma_u();
        let [vlo, vhi] = cfg.sigma_v();
        let mut sigma_u_sq = Vec::with_capacity(n);
        let mut sigma_v_sq = Vec::with_capacity(n);
        for _ in 0..n {
            sigma_u_sq.push(draw_in(&mut rng, ulo, uhi));
            sigma_v_sq.push(draw_in(&mut rng, vlo, vhi));
        }

        let attack = &cfg.attack;
        let compromised: BTreeSet<usize> = match (&attack.kind, &attack.compromised) {
            (AttackKind::None, _) => BTreeSet::new(),
            (_, CompromisedSpec::List { agents }) => agents.iter().copied().collect(),
            (_, CompromisedSpec::DominatingSet) => plan_network_attack(&base),
            (_, CompromisedSpec::OneLocal { count }) => base.spread_set(*count)?,
            (_, CompromisedSpec::Topology) => base.compromised().clone(),
        };
        let topology = base
            .with_compromised(compromised.iter().copied())
            .map_err(|e| Error::config("attack.compromised", e.to_string()))?;
        if !compromised.is_empty() && compromised.len() == n {
            return Err(Error::config("attack.compromised", "no normal agents left"));
        }

        let mut victims: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &a in &compromised {
            for &k in topology.adjacent(a)? {
                if !compromised.contains(&k) {
                    victims.entry(k).or_default().push(a);
                }
            }
        }
        let attack_target = (attack.kind != AttackKind::None).then(|| TargetTrajectory {
            base: Vector::from(attack.target.clone()),
            motion: attack.motion,
        });

        let f_plan = cfg.f_plan(n)?;
        Ok(Scenario {
            config: cfg.clone(),
            seed,
            topology,
            positions,
            tasks,
            task_targets,
            sigma_u_sq,
            sigma_v_sq,
            f_plan,
            victims,
            attack_target,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.topology.n_agents()
    }

    pub fn is_normal(&self, k: usize) -> bool {
        !self.topology.is_compromised(k)
    }

    pub fn normal_agents(&self) -> Vec<usize> {
        (0..self.n_agents()).filter(|&k| self.is_normal(k)).collect()
    }

    pub fn target_at(&self, k: usize, round: usize) -> Vector {
        self.task_targets[self.tasks[k]].at(round)
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, round: usize, rng: &mut R) -> StreamSample {
        draw_sample(&self.target_at(k, round), self.sigma_u_sq[k], self.sigma_v_sq[k], rng)
    }

    /// Independent data stream of agent `k`.
    pub fn data_rng(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64 + 1);
        rng
    }

    fn adversaries(&self) -> Result<BTreeMap<usize, Adversary>> {
        let attack = &self.config.attack;
        let Some(target) = &self.attack_target else {
            return Ok(BTreeMap::new());
        };
        let mut by_attacker: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&k, attackers) in &self.victims {
            for &a in attackers {
                by_attacker.entry(a).or_default().push(k);
            }
        }
        // weight initialization draws come after all setup draws
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0);
        rng.set_word_pos(1 << 40);
        let mut out = BTreeMap::new();
        for (a, ks) in by_attacker {
            let adv = match attack.kind {
                AttackKind::Strong => {
                    let mut s = StrongAttacker::new(a, attack.r, attack.start_round)?;
                    s.compensate = attack.compensate;
                    s.strict = attack.strict;
                    for k in ks {
                        s.add_target(&self.topology, k, target.clone())?;
                    }
                    Adversary::Strong(s)
                }
                AttackKind::Weak => {
                    let mut w = WeakAttacker::new(a, attack.r, attack.mu_a(), attack.start_round)?;
                    w.compensate = attack.compensate;
                    for k in ks {
                        w.add_victim(&self.topology, k, target.clone(), attack.weight_init, &mut rng)?;
                    }
                    Adversary::Weak(w)
                }
                AttackKind::None => unreachable!("no target without an attack"),
            };
            out.insert(a, adv);
        }
        Ok(out)
    }
}

fn draw_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    Uniform::new_inclusive(lo, hi).expect("validated range").sample(rng)
}

/// Splits agents into `n_tasks` equal groups by x-coordinate, or by id when
/// positions are unknown.
fn spatial_split(n: usize, n_tasks: usize, positions: Option<&[[f64; 2]]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(p) = positions {
        order.sort_by(|&a, &b| p[a][0].total_cmp(&p[b][0]).then(a.cmp(&b)));
    }
    let mut tasks = vec![0; n];
    for (rank, k) in order.into_iter().enumerate() {
        tasks[k] = rank * n_tasks / n.max(1);
    }
    tasks
}

/// `u ~ N(0, sigma_u_sq I)`, `d = u . w0 + v` with `v ~ N(0, sigma_v_sq)`.
pub fn draw_sample<R: Rng + ?Sized>(w0: &Vector, sigma_u_sq: f64, sigma_v_sq: f64, rng: &mut R) -> StreamSample {
    let nu = Normal::new(0.0, sigma_u_sq.sqrt()).expect("finite variance");
    let nv = Normal::new(0.0, sigma_v_sq.sqrt()).expect("finite variance");
    let u: Vector = (0..w0.len()).map(|_| nu.sample(rng)).collect();
    let d = u.dot(w0) + nv.sample(rng);
    StreamSample { d, u }
}

pub fn generate_sample<R: Rng + ?Sized>(scenario: &Scenario, k: usize, round: usize, rng: &mut R) -> StreamSample {
    scenario.sample(k, round, rng)
}

pub fn target_at(scenario: &Scenario, k: usize, round: usize) -> Vector {
    scenario.target_at(k, round)
}

pub fn run_simulation(cfg: &ScenarioConfig) -> Result<MetricsLog> {
    run(&Scenario::build(cfg, None)?)
}

fn norm(v: &Vector) -> f64 {
    v.dot(v).sqrt()
}

struct Tracker {
    error: TrailingMean,
    bias: TrailingVectorMean,
    attack: Option<TrailingMean>,
    converged: Option<usize>,
    captured: Option<usize>,
}

pub fn run(scn: &Scenario) -> Result<MetricsLog> {
    let cfg = &scn.config;
    let n = scn.n_agents();
    let dim = cfg.dim();
    let top = &scn.topology;
    let hoods: Vec<Vec<usize>> = (0..n).map(|k| top.neighbors(k)).collect::<Result<_>>()?;
    let normal = scn.normal_agents();

    let mut agents: Vec<Option<ResilientAgent>> = Vec::with_capacity(n);
    for k in 0..n {
        if !scn.is_normal(k) {
            agents.push(None);
            continue;
        }
        let state = AgentState::new(k, dim, &hoods[k], cfg.mu, cfg.nu)?;
        let f = match (&scn.f_plan, cfg.algorithm) {
            (FPlan::Fixed(per), Algorithm::Rdlmsaw) => per[k],
            _ => 0,
        };
        let mut agent = ResilientAgent::new(state, f)?;
        agent.window = CostWindow::new(cfg.resilience.window)?;
        agent.min_window = cfg.resilience.min_window;
        if cfg.algorithm == Algorithm::Rdlmsaw && scn.f_plan == FPlan::Auto {
            agent = agent.with_auto_f(cfg.resilience.f_epoch, cfg.resilience.f_margin)?;
        }
        agents.push(Some(agent));
    }
    let mut rogue: BTreeMap<usize, Vector> = top.compromised().iter().map(|&a| (a, Vector::zeros(dim))).collect();
    let mut adversaries = scn.adversaries()?;
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|k| scn.data_rng(k)).collect();

    let mut rows: Vec<WeightRow> = (0..n).map(WeightRow::one_hot).collect();
    let mut board = MessageBoard::new(n);
    let window = cfg.convergence.window;
    let threshold = cfg.convergence.threshold;
    let mut trackers: BTreeMap<usize, Tracker> = normal
        .iter()
        .map(|&k| {
            let attacked = scn.victims.contains_key(&k);
            (
                k,
                Tracker {
                    error: TrailingMean::new(window),
                    bias: TrailingVectorMean::new(window),
                    attack: attacked.then(|| TrailingMean::new(window)),
                    converged: None,
                    captured: None,
                },
            )
        })
        .collect();
    let mut msd_tail = TrailingMean::new(window);
    let snapshot_at: BTreeSet<usize> = cfg.snapshot_rounds.iter().copied().collect();

    let mut log_rounds = Vec::with_capacity(cfg.rounds);
    let mut log_agents = Vec::new();
    let mut precision: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    let mut snapshots = Vec::new();

    let current_w = |agents: &[Option<ResilientAgent>], rogue: &BTreeMap<usize, Vector>, k: usize| -> Vector {
        match &agents[k] {
            Some(a) => a.state.w.clone(),
            None => rogue[&k].clone(),
        }
    };

    for round in 0..cfg.rounds {
        let samples: Vec<StreamSample> = (0..n).map(|k| scn.sample(k, round, &mut rngs[k])).collect();
        let psi: Vec<Vector> = (0..n)
            .map(|k| lms_step(&current_w(&agents, &rogue, k), cfg.mu, &samples[k]))
            .collect::<Result<_>>()?;
        board.clear();
        for (k, p) in psi.iter().enumerate() {
            board.publish(k, p.clone());
        }

        let mut round_precision = Vec::new();
        if cfg.algorithm != Algorithm::Noncoop {
            for (&a, adv) in adversaries.iter_mut() {
                match adv {
                    Adversary::Strong(s) => {
                        if !s.is_active(round) {
                            continue;
                        }
                        for &k in s.targets.keys() {
                            let w_prev = recover_state(&psi[k], &samples[k], cfg.mu)?;
                            let honest: Vec<&Vector> =
                                hoods[k].iter().filter(|&&l| scn.is_normal(l)).map(|&l| &psi[l]).collect();
                            let msg = s.craft_checked(k, &w_prev, round, &honest)?;
                            board.send(a, k, msg);
                        }
                    }
                    Adversary::Weak(w) => {
                        let ks: Vec<usize> = w.victims.keys().copied().collect();
                        for k in ks {
                            let Some(step) = w.step(k, &psi[k], round)? else {
                                continue;
                            };
                            if w.is_active(round) {
                                board.send(a, k, step.message);
                            }
                            let actual = agents[k].as_ref().expect("victims are normal").state.w.clone();
                            let p = norm(&(&step.w_hat_prev - &actual));
                            precision.entry((a, k)).or_default().push((round, p));
                            round_precision.push(p);
                        }
                    }
                }
            }
            for adv in adversaries.values_mut() {
                if let Adversary::Weak(w) = adv {
                    let ks: Vec<usize> = w.victims.keys().copied().collect();
                    for k in ks {
                        w.observe(k, gather(&board, k, &hoods[k])?)?;
                    }
                }
            }
        }

        for k in 0..n {
            match agents[k].as_mut() {
                None => {
                    rogue.insert(k, psi[k].clone());
                }
                Some(agent) => match cfg.algorithm {
                    Algorithm::Noncoop => agent.state.w = psi[k].clone(),
                    Algorithm::Dlmsaw | Algorithm::Rdlmsaw => {
                        agent.observe(&samples[k])?;
                        rows[k] = agent.combine(&hoods[k], &board)?.weights;
                    }
                },
            }
        }

        // metrics
        let ws: Vec<Vector> = normal.iter().map(|&k| current_w(&agents, &rogue, k)).collect();
        let targets: Vec<Vector> = normal.iter().map(|&k| scn.target_at(k, round)).collect();
        let msd = empirical_msd(&ws, &targets)?;
        msd_tail.push(msd);
        let goal = scn.attack_target.as_ref().map(|t| t.at(round));
        let mut victim_dist = Vec::new();
        for (i, &k) in normal.iter().enumerate() {
            let tr = trackers.get_mut(&k).expect("tracker per normal agent");
            let dev = &ws[i] - &targets[i];
            tr.error.push(norm(&dev));
            tr.bias.push(dev);
            if tr.converged.is_none() && tr.error.is_full() && tr.error.fast_mean() < threshold {
                tr.converged = Some(round);
            }
            if let (Some(t), Some(g)) = (tr.attack.as_mut(), goal.as_ref()) {
                let dist = norm(&(&ws[i] - g));
                victim_dist.push(dist);
                t.push(dist);
                if tr.captured.is_none() && t.is_full() && t.fast_mean() < threshold {
                    tr.captured = Some(round);
                }
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        log_rounds.push(RoundRecord {
            round,
            msd_linear: msd,
            msd_db: to_db(msd),
            mean_victim_target_dist: mean(&victim_dist),
            mean_attacker_precision: mean(&round_precision),
        });
        if round % cfg.agent_stride == 0 || round + 1 == cfg.rounds {
            for (i, &k) in normal.iter().enumerate() {
                let e = &ws[i] - &targets[i];
                log_agents.push(AgentRecord {
                    round,
                    agent: k,
                    err_sq: e.dot(&e),
                    w: ws[i].to_vec(),
                });
            }
        }
        if snapshot_at.contains(&round) {
            snapshots.push(WeightSnapshot {
                round,
                rows: rows.clone(),
            });
        }
    }

    let mut weights = EdgeWeights::new();
    for &(a, b) in top.edges() {
        weights.insert((a, b), rows[b].get(a));
        weights.insert((b, a), rows[a].get(b));
    }
    let final_topology = top.prune_links(&weights, cfg.prune_threshold)?;
    let attack_edges: Vec<(usize, usize)> = top
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| top.is_compromised(a) != top.is_compromised(b))
        .collect();
    let pruned_attack_links = attack_edges.iter().filter(|&&(a, b)| !final_topology.has_edge(a, b)).count();

    let normal_noise: Vec<f64> = normal.iter().map(|&k| scn.sigma_v_sq[k]).collect();
    let agent_summaries = (0..n)
        .map(|k| {
            let w = current_w(&agents, &rogue, k);
            let attackers = scn.victims.get(&k).cloned().unwrap_or_default();
            match trackers.get(&k) {
                None => AgentSummary {
                    agent: k,
                    task: scn.tasks[k],
                    compromised: true,
                    attackers,
                    f: 0,
                    trailing_error: None,
                    trailing_bias: None,
                    converged_round: None,
                    trailing_attack_distance: None,
                    captured_round: None,
                    attack_success: None,
                    weight_on_attackers: None,
                    final_w: w.to_vec(),
                },
                Some(tr) => {
                    let attack_dist = tr.attack.as_ref().map(TrailingMean::mean);
                    AgentSummary {
                        agent: k,
                        task: scn.tasks[k],
                        compromised: false,
                        f: agents[k].as_ref().map_or(0, |a| a.f),
                        trailing_error: Some(tr.error.mean()),
                        trailing_bias: tr.bias.mean().as_ref().map(norm),
                        converged_round: tr.converged,
                        trailing_attack_distance: attack_dist,
                        captured_round: tr.captured,
                        attack_success: attack_dist.map(|d| d < threshold),
                        weight_on_attackers: (!attackers.is_empty())
                            .then(|| attackers.iter().map(|&a| rows[k].get(a)).sum()),
                        attackers,
                        final_w: w.to_vec(),
                    }
                }
            }
        })
        .collect();
    let final_msd = msd_tail.mean();
    let summary = Summary {
        algorithm: cfg.algorithm.name().to_string(),
        seed: scn.seed,
        rounds: cfg.rounds,
        n_agents: n,
        dim,
        compromised: top.compromised().iter().copied().collect(),
        final_msd_linear: final_msd,
        final_msd_db: to_db(final_msd),
        theory_msd_noncooperative_db: to_db(msd_noncooperative(cfg.mu, dim, &normal_noise)?),
        theory_msd_diffusion_db: to_db(msd_diffusion(cfg.mu, dim, &normal_noise)?),
        attack_links: attack_edges.len(),
        pruned_attack_links,
        agents: agent_summaries,
    };

    Ok(MetricsLog {
        rounds: log_rounds,
        agents: log_agents,
        precision,
        snapshots,
        final_weights: rows,
        initial_topology: top.clone(),
        final_topology,
        summary,
    })
}
