use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::diffusion::{to_db, Vector, WeightRow};
use crate::error::{Error, Result};
use crate::network::Topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub msd_linear: f64,
    pub msd_db: f64,
    /// Mean distance of attacked agents to the attacker's desired state.
    pub mean_victim_target_dist: Option<f64>,
    /// Mean `|w_hat - w|` over weak attackers' victims.
    pub mean_attacker_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub round: usize,
    pub agent: usize,
    pub err_sq: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub round: usize,
    pub rows: Vec<WeightRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: usize,
    pub task: usize,
    pub compromised: bool,
    pub attackers: Vec<usize>,
    pub f: usize,
    /// Trailing-window mean of `|w - w0|`; absent for compromised agents.
    pub trailing_error: Option<f64>,
    /// Norm of the trailing-window mean of `w - w0`.
    pub trailing_bias: Option<f64>,
    pub converged_round: Option<usize>,
    /// Trailing-window mean distance to the attacker's desired state.
    pub trailing_attack_distance: Option<f64>,
    pub captured_round: Option<usize>,
    pub attack_success: Option<bool>,
    /// Total final combination weight on compromised neighbors.
    pub weight_on_attackers: Option<f64>,
    pub final_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub seed: u64,
    pub rounds: usize,
    pub n_agents: usize,
    pub dim: usize,
    pub compromised: Vec<usize>,
    /// Trailing-window mean of the network MSD.
    pub final_msd_linear: f64,
    pub final_msd_db: f64,
    pub theory_msd_noncooperative_db: f64,
    pub theory_msd_diffusion_db: f64,
    pub attack_links: usize,
    pub pruned_attack_links: usize,
    pub agents: Vec<AgentSummary>,
}

impl Summary {
    pub fn normal_agents(&self) -> impl Iterator<Item = &AgentSummary> {
        self.agents.iter().filter(|a| !a.compromised)
    }

    pub fn victims(&self) -> impl Iterator<Item = &AgentSummary> {
        self.normal_agents().filter(|a| !a.attackers.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub rounds: Vec<RoundRecord>,
    pub agents: Vec<AgentRecord>,
    /// `|w_hat - w|` per round, keyed by `(attacker, victim)`.
    pub precision: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
    pub snapshots: Vec<WeightSnapshot>,
    pub final_weights: Vec<WeightRow>,
    pub initial_topology: Topology,
    pub final_topology: Topology,
    pub summary: Summary,
}

/// Mean over normal agents of `|w0_k - w_k|^2`.
pub fn empirical_msd(states: &[Vector], targets: &[Vector]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyInput("agent states"));
    }
    if states.len() != targets.len() {
        return Err(Error::Shape {
            expected: states.len(),
            actual: targets.len(),
        });
    }
    let total: f64 = states
        .iter()
        .zip(targets)
        .map(|(w, t)| (w - t).mapv(|x| x * x).sum())
        .sum();
    Ok(total / states.len() as f64)
}

pub fn msd_db(msd: f64) -> f64 {
    to_db(msd)
}

/// Running mean of the last `capacity` values.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TrailingMean {
    capacity: usize,
    values: VecDeque<f64>,
    sum: f64,
}

impl TrailingMean {
    pub(crate) fn new(capacity: usize) -> Self {
        TrailingMean {
            capacity,
            values: VecDeque::with_capacity(capacity),
            sum: 0.0,
        }
    }

    pub(crate) fn push(&mut self, x: f64) {
        if self.values.len() == self.capacity {
            if let Some(old) = self.values.pop_front() {
                self.sum -= old;
            }
        }
        self.values.push_back(x);
        self.sum += x;
    }

    pub(crate) fn is_full(&self) -> bool {
        self.values.len() == self.capacity
    }

    pub(crate) fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        // recompute to keep cancellation error out of long runs
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub(crate) fn fast_mean(&self) -> f64 {
        self.sum / self.values.len().max(1) as f64
    }
}

/// Running mean of the last `capacity` vectors.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TrailingVectorMean {
    capacity: usize,
    values: VecDeque<Vector>,
}

impl TrailingVectorMean {
    pub(crate) fn new(capacity: usize) -> Self {
        TrailingVectorMean {
            capacity,
            values: VecDeque::with_capacity(capacity),
        }
    }

    pub(crate) fn push(&mut self, x: Vector) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(x);
    }

    pub(crate) fn mean(&self) -> Option<Vector> {
        let first = self.values.front()?;
        let mut acc = Vector::zeros(first.len());
        for v in &self.values {
            acc += v;
        }
        Some(acc / self.values.len() as f64)
    }
}
