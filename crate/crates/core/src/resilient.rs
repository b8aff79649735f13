//! Resilient diffusion under F-local attacks (R-DLMSAW).
//!
//! Each agent keeps a sliding window of its own streaming data and scores
//! every incoming message by its empirical cost on that window. Before
//! combining, it discards the `F` neighbors whose exclusion minimizes the
//! cost contribution of the weighted combination, then renormalizes the
//! adaptive weights over the kept set.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    adaptive_weights, adapt_all, combine, gather, lms_step, update_all_gammas, AgentState, MessageBoard,
    StreamSample, Vector, WeightRow, GAMMA_FLOOR,
};
use crate::error::{Error, Result};
use crate::network::Topology;

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_MIN_WINDOW: usize = 10;
pub const DEFAULT_EPOCH: usize = 500;
/// Largest number of candidate removal sets searched per agent and round.
pub const SUBSET_LIMIT: u128 = 100_000;

/// Last `capacity` samples of an agent's own data stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWindow {
    capacity: usize,
    d: VecDeque<f64>,
    u: VecDeque<Vector>,
}

impl CostWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("window", "capacity must be positive"));
        }
        Ok(CostWindow {
            capacity,
            d: VecDeque::with_capacity(capacity),
            u: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn push(&mut self, sample: &StreamSample) {
        if self.d.len() == self.capacity {
            self.d.pop_front();
            self.u.pop_front();
        }
        self.d.push_back(sample.d);
        self.u.push_back(sample.u.clone());
    }

    /// Mean of `(d - u . psi)^2` over the buffered samples.
    pub fn cost(&self, psi: &Vector) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let mut total = 0.0;
        for (d, u) in self.d.iter().zip(&self.u) {
            if u.len() != psi.len() {
                return Err(Error::Shape {
                    expected: u.len(),
                    actual: psi.len(),
                });
            }
            let e = d - u.dot(psi);
            total += e * e;
        }
        Ok(total / self.len() as f64)
    }
}

pub fn window_cost(window: &CostWindow, psi: &Vector) -> Result<f64> {
    window.cost(psi)
}

fn inverse_gamma(gamma_sq: &BTreeMap<usize, f64>, l: usize) -> Result<f64> {
    gamma_sq
        .get(&l)
        .map(|g| 1.0 / g.max(GAMMA_FLOOR))
        .ok_or(Error::MissingMessage(l))
}

/// `sum gamma^-4 J / (sum gamma^-2)^2` over `kept`.
pub fn removal_objective(
    gamma_sq: &BTreeMap<usize, f64>,
    costs: &BTreeMap<usize, f64>,
    kept: &[usize],
) -> Result<f64> {
    if kept.is_empty() {
        return Err(Error::EmptyInput("kept set"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &l in kept {
        let inv = inverse_gamma(gamma_sq, l)?;
        let cost = costs.get(&l).ok_or(Error::MissingMessage(l))?;
        num += inv * inv * cost;
        den += inv;
    }
    Ok(num / (den * den))
}

/// Neighbors an agent ignores in one combination step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RemovalSet {
    pub discarded: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub removal: RemovalSet,
    pub weights: WeightRow,
}

/// `n choose k`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Searches every size-`f` subset of the neighbors of `agent` (never `agent`
/// itself) for the one whose removal minimizes [`removal_objective`].
///
/// `gamma_sq` is keyed by the closed neighborhood. Ties go to the
/// lexicographically smallest discarded set.
pub fn select_removal_set(
    agent: usize,
    gamma_sq: &BTreeMap<usize, f64>,
    costs: &BTreeMap<usize, f64>,
    f: usize,
) -> Result<Removal> {
    if !gamma_sq.contains_key(&agent) {
        return Err(Error::InvalidNeighbor { agent, neighbor: agent });
    }
    let others: Vec<usize> = gamma_sq.keys().copied().filter(|&l| l != agent).collect();
    if f == 0 {
        return Ok(Removal {
            removal: RemovalSet::default(),
            weights: adaptive_weights(gamma_sq)?,
        });
    }
    if f >= gamma_sq.len() {
        return Ok(Removal {
            removal: RemovalSet {
                discarded: others.into_iter().collect(),
            },
            weights: WeightRow::one_hot(agent),
        });
    }
    let subsets = binomial(others.len(), f);
    if subsets > SUBSET_LIMIT {
        return Err(Error::CombinatorialGuard {
            agent,
            subsets,
            limit: SUBSET_LIMIT,
        });
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut kept = Vec::with_capacity(gamma_sq.len());
    for discard in others.iter().copied().combinations(f) {
        kept.clear();
        kept.extend(gamma_sq.keys().copied().filter(|l| !discard.contains(l)));
        let value = removal_objective(gamma_sq, costs, &kept)?;
        // combinations arrive in lexicographic order, so strict < keeps the first minimizer
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, discard));
        }
    }
    let (_, discard) = best.expect("at least one candidate subset");
    let discarded: BTreeSet<usize> = discard.into_iter().collect();
    let kept_gamma: BTreeMap<usize, f64> = gamma_sq
        .iter()
        .filter(|(l, _)| !discarded.contains(l))
        .map(|(&l, &g)| (l, g))
        .collect();
    Ok(Removal {
        removal: RemovalSet { discarded },
        weights: adaptive_weights(&kept_gamma)?,
    })
}

/// Online choice of `F`: grows by one whenever the cooperative estimate does
/// worse on the agent's own data than a shadow noncooperative LMS estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FSelector {
    pub f: usize,
    pub cap: usize,
    pub epoch: usize,
    /// Relative excess of the cooperative cost required to grow `F`.
    pub margin: f64,
    shadow: Vector,
    mu: f64,
    coop_cost: f64,
    shadow_cost: f64,
    seen: usize,
    settling: bool,
}

impl FSelector {
    pub fn new(dim: usize, mu: f64, neighborhood_len: usize, epoch: usize, margin: f64) -> Result<Self> {
        if epoch == 0 {
            return Err(Error::config("f_epoch", "must be positive"));
        }
        if !(margin >= 0.0) {
            return Err(Error::config("f_margin", "must be non-negative"));
        }
        Ok(FSelector {
            f: 0,
            cap: neighborhood_len.saturating_sub(1),
            epoch,
            margin,
            shadow: Vector::zeros(dim),
            mu,
            coop_cost: 0.0,
            shadow_cost: 0.0,
            seen: 0,
            settling: false,
        })
    }

    pub fn shadow_estimate(&self) -> &Vector {
        &self.shadow
    }

    /// Scores both estimates on `sample` before either is updated with it.
    pub fn observe(&mut self, w_coop: &Vector, sample: &StreamSample) -> Result<usize> {
        let ec = sample.d - sample.u.dot(w_coop);
        let en = sample.d - sample.u.dot(&self.shadow);
        self.coop_cost += ec * ec;
        self.shadow_cost += en * en;
        self.shadow = lms_step(&self.shadow, self.mu, sample)?;
        self.seen += 1;
        if self.seen == self.epoch {
            // the epoch right after a change only lets the estimate settle
            if !self.settling && self.coop_cost > (1.0 + self.margin) * self.shadow_cost && self.f < self.cap {
                self.f += 1;
                self.settling = true;
            } else {
                self.settling = false;
            }
            self.coop_cost = 0.0;
            self.shadow_cost = 0.0;
            self.seen = 0;
        }
        Ok(self.f)
    }
}

/// Per-agent state of R-DLMSAW.
#[derive(Debug, Clone, PartialEq)]
pub struct ResilientAgent {
    pub state: AgentState,
    pub window: CostWindow,
    pub f: usize,
    /// Window fill below which the agent combines like plain DLMSAW.
    pub min_window: usize,
    pub selector: Option<FSelector>,
}

impl ResilientAgent {
    pub fn new(state: AgentState, f: usize) -> Result<Self> {
        Ok(ResilientAgent {
            state,
            window: CostWindow::new(DEFAULT_WINDOW)?,
            f,
            min_window: DEFAULT_MIN_WINDOW,
            selector: None,
        })
    }

    /// Starts at `F = 0` and lets an [`FSelector`] grow it.
    pub fn with_auto_f(mut self, epoch: usize, margin: f64) -> Result<Self> {
        let selector = FSelector::new(
            self.state.dim(),
            self.state.mu,
            self.state.gamma_sq.len(),
            epoch,
            margin,
        )?;
        self.f = 0;
        self.selector = Some(selector);
        Ok(self)
    }

    /// Records this round's own sample. Call before [`combine`](Self::combine).
    pub fn observe(&mut self, sample: &StreamSample) -> Result<()> {
        if let Some(sel) = self.selector.as_mut() {
            self.f = sel.observe(&self.state.w, sample)?;
        }
        self.window.push(sample);
        Ok(())
    }

    /// Combination step over the messages in `psis`; replaces the estimate.
    pub fn combine_messages(&mut self, psis: &BTreeMap<usize, Vector>) -> Result<Removal> {
        update_all_gammas(&mut self.state, psis)?;
        let removal = if self.f == 0 || self.window.len() < self.min_window {
            Removal {
                removal: RemovalSet::default(),
                weights: adaptive_weights(&self.state.gamma_sq)?,
            }
        } else {
            let costs = psis
                .iter()
                .map(|(&l, psi)| Ok((l, self.window.cost(psi)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            select_removal_set(self.state.id, &self.state.gamma_sq, &costs, self.f)?
        };
        self.state.w = combine(&removal.weights, psis)?;
        Ok(removal)
    }

    pub fn combine(&mut self, neighborhood: &[usize], board: &MessageBoard) -> Result<Removal> {
        let psis = gather(board, self.state.id, neighborhood)?;
        self.combine_messages(&psis)
    }
}

/// One full R-DLMSAW round over an attack-free network.
pub fn rdlmsaw_round(
    agents: &mut [ResilientAgent],
    topology: &Topology,
    samples: &[StreamSample],
) -> Result<Vec<Removal>> {
    let states: Vec<AgentState> = agents.iter().map(|a| a.state.clone()).collect();
    let psis = adapt_all(&states, samples)?;
    let mut board = MessageBoard::new(agents.len());
    for (k, psi) in psis.into_iter().enumerate() {
        board.publish(k, psi);
    }
    let mut out = Vec::with_capacity(agents.len());
    for (agent, sample) in agents.iter_mut().zip(samples) {
        agent.observe(sample)?;
        let hood = topology.neighbors(agent.state.id)?;
        out.push(agent.combine(&hood, &board)?);
    }
    Ok(out)
}
