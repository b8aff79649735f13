//! Adapt-then-combine diffusion LMS with adaptive relative-variance weights.
//!
//! One round has two phases separated by a barrier: every agent adapts its
//! previous estimate with its own sample and publishes the intermediate
//! estimate `psi` on the [`MessageBoard`]; afterwards each agent combines the
//! messages addressed to it. Adversaries write per-receiver overrides between
//! the two phases.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Topology;

pub type Vector = Array1<f64>;

/// Floor applied to every smoothed variance before it is inverted.
pub const GAMMA_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

/// One streaming observation `d = u . w0 + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub d: f64,
    pub u: Vector,
}

impl StreamSample {
    pub fn new(d: f64, u: impl Into<Vector>) -> Self {
        StreamSample { d, u: u.into() }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub w: Vector,
    /// Smoothed squared distance per neighbor (self included), starting at 0.
    pub gamma_sq: BTreeMap<usize, f64>,
    pub mu: f64,
    pub nu: f64,
}

impl AgentState {
    /// Zero initial estimate, zero variance trackers for each member of `neighborhood`.
    pub fn new(id: usize, dim: usize, neighborhood: &[usize], mu: f64, nu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("step size must be non-negative, got {mu}")));
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Domain(format!("forgetting factor must be in (0,1], got {nu}")));
        }
        Ok(AgentState {
            id,
            w: Vector::zeros(dim),
            gamma_sq: neighborhood.iter().map(|&l| (l, 0.0)).collect(),
            mu,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Combination weights `a_lk` used by one agent `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub weights: BTreeMap<usize, f64>,
}

impl WeightRow {
    pub fn one_hot(l: usize) -> Self {
        WeightRow {
            weights: BTreeMap::from([(l, 1.0)]),
        }
    }

    pub fn get(&self, l: usize) -> f64 {
        self.weights.get(&l).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&l, &a)| (l, a))
    }

    /// Non-negative entries summing to one, supported on `allowed`.
    pub fn is_simplex_on(&self, allowed: &[usize]) -> bool {
        let sum: f64 = self.weights.values().sum();
        (sum - 1.0).abs() <= SIMPLEX_TOL
            && self
                .weights
                .iter()
                .all(|(l, &a)| a >= 0.0 && a.is_finite() && (a == 0.0 || allowed.contains(l)))
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}

/// `w + mu * u^T (d - u w)`.
pub fn lms_step(w: &Vector, mu: f64, sample: &StreamSample) -> Result<Vector> {
    check_dim(w.len(), sample.dim())?;
    let err = sample.d - sample.u.dot(w);
    let mut psi = w.clone();
    psi.scaled_add(mu * err, &sample.u);
    Ok(psi)
}

/// Adaptation step; the state itself is left untouched.
pub fn lms_adapt(state: &AgentState, sample: &StreamSample) -> Result<Vector> {
    lms_step(&state.w, state.mu, sample)
}

pub fn squared_distance(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `gamma_lk <- (1 - nu) gamma_lk + nu |psi_l - w_prev|^2`; returns the new value.
pub fn update_gamma(state: &mut AgentState, l: usize, psi_l: &Vector, w_prev: &Vector) -> Result<f64> {
    check_dim(w_prev.len(), psi_l.len())?;
    let (agent, nu) = (state.id, state.nu);
    let g = state
        .gamma_sq
        .get_mut(&l)
        .ok_or(Error::InvalidNeighbor { agent, neighbor: l })?;
    *g = (1.0 - nu) * *g + nu * squared_distance(psi_l, w_prev);
    Ok(*g)
}

/// Inverse-variance weights over the key set of `gamma_sq`.
pub fn adaptive_weights(gamma_sq: &BTreeMap<usize, f64>) -> Result<WeightRow> {
    if gamma_sq.is_empty() {
        return Err(Error::NoNeighbors);
    }
    let inv: Vec<(usize, f64)> = gamma_sq
        .iter()
        .map(|(&l, &g)| (l, 1.0 / g.max(GAMMA_FLOOR)))
        .collect();
    let total: f64 = inv.iter().map(|(_, x)| x).sum();
    Ok(WeightRow {
        weights: inv.into_iter().map(|(l, x)| (l, x / total)).collect(),
    })
}

/// Weighted sum of the intermediate estimates.
pub fn combine(weights: &WeightRow, psis: &BTreeMap<usize, Vector>) -> Result<Vector> {
    let mut out: Option<Vector> = None;
    for (l, a) in weights.iter() {
        if a == 0.0 {
            continue;
        }
        let psi = psis.get(&l).ok_or(Error::MissingMessage(l))?;
        match out.as_mut() {
            Some(acc) => {
                check_dim(acc.len(), psi.len())?;
                acc.scaled_add(a, psi);
            }
            None => out = Some(psi * a),
        }
    }
    out.ok_or(Error::NoNeighbors)
}

/// Steady-state network MSD of noncooperative LMS, `(mu M / 2) mean(sigma_v^2)`.
pub fn msd_noncooperative(mu: f64, dim: usize, noise_vars: &[f64]) -> Result<f64> {
    if noise_vars.is_empty() {
        return Err(Error::EmptyInput("noise variances"));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {mu}")));
    }
    let mean = noise_vars.iter().sum::<f64>() / noise_vars.len() as f64;
    Ok(mu * dim as f64 / 2.0 * mean)
}

/// Steady-state MSD of a connected diffusion network: N-fold below noncooperative.
pub fn msd_diffusion(mu: f64, dim: usize, noise_vars: &[f64]) -> Result<f64> {
    Ok(msd_noncooperative(mu, dim, noise_vars)? / noise_vars.len() as f64)
}

/// MSD after splitting a connected network into the given blocks, minus the
/// MSD of the intact network.
pub fn msd_partition_delta(mu: f64, dim: usize, partition: &[Vec<f64>]) -> Result<f64> {
    let n: usize = partition.iter().map(Vec::len).sum();
    if partition.is_empty() || n == 0 {
        return Err(Error::EmptyInput("partition"));
    }
    if partition.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput("partition block"));
    }
    let nf = n as f64;
    let sum: f64 = partition
        .iter()
        .map(|block| (1.0 / block.len() as f64 - 1.0 / nf) * block.iter().sum::<f64>())
        .sum();
    Ok(mu * dim as f64 / (2.0 * nf) * sum)
}

pub fn to_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// Intermediate estimates exchanged during one round. Honest agents broadcast a
/// single `psi`; per-receiver overrides model Byzantine senders.
#[derive(Debug, Clone, Default)]
pub struct MessageBoard {
    broadcast: Vec<Option<Vector>>,
    overrides: BTreeMap<(usize, usize), Vector>,
}

impl MessageBoard {
    pub fn new(n_agents: usize) -> Self {
        MessageBoard {
            broadcast: vec![None; n_agents],
            overrides: BTreeMap::new(),
        }
    }

    pub fn clear(&mut self) {
        self.broadcast.iter_mut().for_each(|m| *m = None);
        self.overrides.clear();
    }

    pub fn publish(&mut self, sender: usize, psi: Vector) {
        self.broadcast[sender] = Some(psi);
    }

    pub fn send(&mut self, sender: usize, receiver: usize, psi: Vector) {
        self.overrides.insert((sender, receiver), psi);
    }

    pub fn broadcast_of(&self, sender: usize) -> Option<&Vector> {
        self.broadcast.get(sender).and_then(Option::as_ref)
    }

    /// What `receiver` sees from `sender` this round.
    pub fn message(&self, sender: usize, receiver: usize) -> Result<&Vector> {
        self.overrides
            .get(&(sender, receiver))
            .or_else(|| self.broadcast_of(sender))
            .ok_or(Error::IncompleteMessages {
                from: sender,
                to: receiver,
            })
    }
}

/// Adaptation phase for every agent.
pub fn adapt_all(states: &[AgentState], samples: &[StreamSample]) -> Result<Vec<Vector>> {
    if states.len() != samples.len() {
        return Err(Error::Shape {
            expected: states.len(),
            actual: samples.len(),
        });
    }
    states.iter().zip(samples).map(|(s, x)| lms_adapt(s, x)).collect()
}

/// Messages addressed to `k` from each member of `neighborhood`.
pub fn gather(board: &MessageBoard, k: usize, neighborhood: &[usize]) -> Result<BTreeMap<usize, Vector>> {
    neighborhood
        .iter()
        .map(|&l| board.message(l, k).map(|m| (l, m.clone())))
        .collect()
}

/// Updates every variance tracker of agent `k` against the previous estimate.
pub fn update_all_gammas(state: &mut AgentState, psis: &BTreeMap<usize, Vector>) -> Result<()> {
    let w_prev = state.w.clone();
    for (&l, psi) in psis {
        update_gamma(state, l, psi, &w_prev)?;
    }
    Ok(())
}

/// Combination phase of DLMSAW for one agent; replaces `state.w`.
pub fn dlmsaw_combine(state: &mut AgentState, neighborhood: &[usize], board: &MessageBoard) -> Result<WeightRow> {
    let psis = gather(board, state.id, neighborhood)?;
    update_all_gammas(state, &psis)?;
    let weights = adaptive_weights(&state.gamma_sq)?;
    state.w = combine(&weights, &psis)?;
    Ok(weights)
}

/// One full DLMSAW round over an attack-free network.
pub fn dlmsaw_round(
    states: &mut [AgentState],
    topology: &Topology,
    samples: &[StreamSample],
) -> Result<Vec<WeightRow>> {
    let psis = adapt_all(states, samples)?;
    let mut board = MessageBoard::new(states.len());
    for (k, psi) in psis.into_iter().enumerate() {
        board.publish(k, psi);
    }
    let mut rows = Vec::with_capacity(states.len());
    for state in states.iter_mut() {
        let hood = topology.neighbors(state.id)?;
        rows.push(dlmsaw_combine(state, &hood, &board)?);
    }
    Ok(rows)
}
