//! Byzantine adversaries against adaptive-weight diffusion.
//!
//! A strong attacker knows the victim's data and step size, so it can invert
//! the adaptation step and recover the victim's previous estimate exactly. It
//! then sends a message a small step away from that estimate towards its own
//! aim point. Because the message lands much closer to the victim's estimate
//! than any honest neighbor's, the adaptive weights concentrate on it and the
//! victim ends up following the attacker's gradient trajectory.
//!
//! A weak attacker only sees the messages exchanged in the victim's
//! neighborhood and estimates the victim's combination weights online.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{squared_distance, StreamSample, Vector, WeightRow};
use crate::error::{Error, Result};
use crate::network::Topology;

/// Time dependence of an attacker's desired state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Stationary,
    /// `amplitude * [cos(2 pi omega i), sin(2 pi omega i)]` on the first two coordinates.
    Circular { amplitude: f64, omega: f64 },
}

/// Desired state `base + theta(i)` for one victim.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory {
    pub base: Vector,
    pub motion: Motion,
}

impl TargetTrajectory {
    pub fn stationary(base: Vector) -> Self {
        TargetTrajectory {
            base,
            motion: Motion::Stationary,
        }
    }

    pub fn circular(base: Vector, amplitude: f64, omega: f64) -> Self {
        TargetTrajectory {
            base,
            motion: Motion::Circular { amplitude, omega },
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.motion, Motion::Stationary)
    }

    /// Offset from `base` at (possibly negative) round `t`.
    pub fn theta(&self, t: f64) -> Vector {
        let mut out = Vector::zeros(self.base.len());
        if let Motion::Circular { amplitude, omega } = self.motion {
            let phase = 2.0 * std::f64::consts::PI * omega * t;
            if let Some(x) = out.get_mut(0) {
                *x = amplitude * phase.cos();
            }
            if let Some(y) = out.get_mut(1) {
                *y = amplitude * phase.sin();
            }
        }
        out
    }

    /// `theta(t + 1) - theta(t)`.
    pub fn delta_theta(&self, t: f64) -> Vector {
        self.theta(t + 1.0) - self.theta(t)
    }

    pub fn at(&self, round: usize) -> Vector {
        &self.base + &self.theta(round as f64)
    }

    /// Point the victim is steered towards in `round`. For moving targets the
    /// previous offset is advanced by `delta_theta / r` when `compensate` is
    /// set, which removes the tracking lag of the first-order recursion.
    pub fn aim_point(&self, r: f64, round: usize, compensate: bool) -> Vector {
        if self.is_stationary() {
            return self.base.clone();
        }
        let prev = round as f64 - 1.0;
        let mut x = &self.base + &self.theta(prev);
        if compensate {
            x.scaled_add(1.0 / r, &self.delta_theta(prev));
        }
        x
    }
}

/// `w_prev - r (w_prev - aim)`.
pub fn steer(w_prev: &Vector, r: f64, aim: &Vector) -> Vector {
    let mut out = w_prev.clone();
    out.scaled_add(-r, &(w_prev - aim));
    out
}

/// Inverts the adaptation step: returns the estimate `w` that produced `psi`
/// from `sample` with step size `mu`.
pub fn recover_state(psi: &Vector, sample: &StreamSample, mu: f64) -> Result<Vector> {
    if psi.len() != sample.dim() {
        return Err(Error::Shape {
            expected: psi.len(),
            actual: sample.dim(),
        });
    }
    let denom = 1.0 - mu * sample.u.dot(&sample.u);
    if denom.abs() < 1e-12 {
        return Err(Error::SingularRecovery(denom));
    }
    // d - u psi = (d - u w)(1 - mu |u|^2) by the rank-one structure of u^T u
    let err = (sample.d - sample.u.dot(psi)) / denom;
    let mut w = psi.clone();
    w.scaled_add(-mu * err, &sample.u);
    Ok(w)
}

/// Rounds until `(1 - r)^i <= epsilon`.
pub fn attack_convergence_time(r: f64, epsilon: f64) -> Result<u64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("attack step must be in (0,1), got {r}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must be in (0,1), got {epsilon}")));
    }
    let rounds = epsilon.ln() / (1.0 - r).ln();
    // absorb floating error when the ratio is an exact integer
    Ok((rounds - 1e-9).ceil().max(0.0) as u64)
}

/// `|psi_a - w_prev| < |psi_l - w_prev|` for every honest message `psi_l`.
pub fn dominates_honest(step_norm_sq: f64, w_prev: &Vector, honest: &[&Vector]) -> bool {
    honest
        .iter()
        .all(|psi| step_norm_sq < squared_distance(psi, w_prev))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongAttacker {
    pub node: usize,
    pub r: f64,
    pub targets: BTreeMap<usize, TargetTrajectory>,
    pub start_round: usize,
    pub compensate: bool,
    /// Hold the victim in place (send `w_prev`) on rounds where the step would
    /// not land closer to `w_prev` than every honest neighbor.
    pub strict: bool,
}

impl StrongAttacker {
    pub fn new(node: usize, r: f64, start_round: usize) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Domain(format!("attack step must be in (0,1), got {r}")));
        }
        Ok(StrongAttacker {
            node,
            r,
            targets: BTreeMap::new(),
            start_round,
            compensate: true,
            strict: false,
        })
    }

    pub fn add_target(&mut self, topology: &Topology, victim: usize, target: TargetTrajectory) -> Result<()> {
        check_victim(topology, self.node, victim)?;
        self.targets.insert(victim, target);
        Ok(())
    }

    pub fn is_active(&self, round: usize) -> bool {
        round >= self.start_round
    }

    fn target(&self, victim: usize) -> Result<&TargetTrajectory> {
        self.targets.get(&victim).ok_or(Error::NotATarget {
            attacker: self.node,
            victim,
        })
    }

    /// Message for `victim` given its recovered previous estimate.
    pub fn craft(&self, victim: usize, w_prev: &Vector, round: usize) -> Result<Vector> {
        let aim = self.target(victim)?.aim_point(self.r, round, self.compensate);
        Ok(steer(w_prev, self.r, &aim))
    }

    /// Like [`craft`](Self::craft), but falls back to `w_prev` in strict mode
    /// whenever some honest message is closer to `w_prev` than the step.
    pub fn craft_checked(
        &self,
        victim: usize,
        w_prev: &Vector,
        round: usize,
        honest: &[&Vector],
    ) -> Result<Vector> {
        let msg = self.craft(victim, w_prev, round)?;
        if self.strict && !dominates_honest(squared_distance(&msg, w_prev), w_prev, honest) {
            return Ok(w_prev.clone());
        }
        Ok(msg)
    }
}

pub fn craft_strong_message(
    attacker: &StrongAttacker,
    victim: usize,
    w_prev: &Vector,
    round: usize,
) -> Result<Vector> {
    attacker.craft(victim, w_prev, round)
}

fn check_victim(topology: &Topology, node: usize, victim: usize) -> Result<()> {
    if victim == node || !topology.adjacent(node)?.contains(&victim) {
        return Err(Error::InvalidNeighbor {
            agent: node,
            neighbor: victim,
        });
    }
    Ok(())
}

/// Initial guess for a victim's weight row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    #[default]
    Uniform,
    Random,
}

/// Attacker-side view of one victim.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakVictim {
    /// Victim's closed neighborhood, ascending; indexes `a_hat`.
    pub neighborhood: Vec<usize>,
    pub a_hat: Vec<f64>,
    pub target: TargetTrajectory,
    /// Messages the victim received in the previous round.
    pub psi_prev: Option<BTreeMap<usize, Vector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakAttacker {
    pub node: usize,
    pub r: f64,
    pub mu_a: f64,
    pub start_round: usize,
    pub compensate: bool,
    pub victims: BTreeMap<usize, WeakVictim>,
}

/// Clips negative entries and renormalizes; an all-zero row becomes uniform.
pub fn clip_normalize(row: &mut [f64]) {
    for a in row.iter_mut() {
        *a = a.max(0.0);
    }
    let total: f64 = row.iter().sum();
    if total > 0.0 && total.is_finite() {
        row.iter_mut().for_each(|a| *a /= total);
    } else {
        log::warn!("weight estimate collapsed after clipping; resetting to uniform");
        let n = row.len() as f64;
        row.iter_mut().for_each(|a| *a = 1.0 / n);
    }
}

fn stack<'a>(neighborhood: &[usize], psis: &'a BTreeMap<usize, Vector>) -> Result<Vec<&'a Vector>> {
    neighborhood
        .iter()
        .map(|l| psis.get(l).ok_or(Error::MissingMessage(*l)))
        .collect()
}

impl WeakAttacker {
    pub fn new(node: usize, r: f64, mu_a: f64, start_round: usize) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Domain(format!("attack step must be in (0,1), got {r}")));
        }
        if !(mu_a > 0.0) {
            return Err(Error::Domain(format!("weight estimator step must be positive, got {mu_a}")));
        }
        Ok(WeakAttacker {
            node,
            r,
            mu_a,
            start_round,
            compensate: true,
            victims: BTreeMap::new(),
        })
    }

    pub fn add_victim<R: Rng + ?Sized>(
        &mut self,
        topology: &Topology,
        victim: usize,
        target: TargetTrajectory,
        init: WeightInit,
        rng: &mut R,
    ) -> Result<()> {
        check_victim(topology, self.node, victim)?;
        let neighborhood = topology.neighbors(victim)?;
        let mut a_hat = match init {
            WeightInit::Uniform => vec![1.0; neighborhood.len()],
            WeightInit::Random => neighborhood.iter().map(|_| rng.random::<f64>()).collect(),
        };
        clip_normalize(&mut a_hat);
        self.victims.insert(
            victim,
            WeakVictim {
                neighborhood,
                a_hat,
                target,
                psi_prev: None,
            },
        );
        Ok(())
    }

    pub fn is_active(&self, round: usize) -> bool {
        round >= self.start_round
    }

    fn victim(&self, victim: usize) -> Result<&WeakVictim> {
        self.victims.get(&victim).ok_or(Error::NotATarget {
            attacker: self.node,
            victim,
        })
    }

    fn victim_mut(&mut self, victim: usize) -> Result<&mut WeakVictim> {
        let node = self.node;
        self.victims
            .get_mut(&victim)
            .ok_or(Error::NotATarget { attacker: node, victim })
    }

    pub fn weight_estimate(&self, victim: usize) -> Result<WeightRow> {
        let v = self.victim(victim)?;
        Ok(WeightRow {
            weights: v.neighborhood.iter().copied().zip(v.a_hat.iter().copied()).collect(),
        })
    }

    /// One stochastic-gradient step on `|psi_victim_now - A psi_prev|^2`
    /// followed by clipping and normalization.
    pub fn update_weights(
        &mut self,
        victim: usize,
        psi_prev: &BTreeMap<usize, Vector>,
        psi_victim_now: &Vector,
    ) -> Result<WeightRow> {
        let mu_a = self.mu_a;
        let v = self.victim_mut(victim)?;
        let rows = stack(&v.neighborhood, psi_prev)?;
        for row in &rows {
            if row.len() != psi_victim_now.len() {
                return Err(Error::Shape {
                    expected: psi_victim_now.len(),
                    actual: row.len(),
                });
            }
        }
        let mut residual = psi_victim_now.clone();
        for (a, row) in v.a_hat.iter().zip(&rows) {
            residual.scaled_add(-a, row);
        }
        for (a, row) in v.a_hat.iter_mut().zip(&rows) {
            *a += mu_a * residual.dot(*row);
        }
        clip_normalize(&mut v.a_hat);
        self.weight_estimate(victim)
    }

    /// `A_hat . Psi` for the given messages.
    pub fn estimate_state(&self, victim: usize, psis: &BTreeMap<usize, Vector>) -> Result<Vector> {
        let v = self.victim(victim)?;
        let rows = stack(&v.neighborhood, psis)?;
        let mut out = Vector::zeros(rows[0].len());
        for (a, row) in v.a_hat.iter().zip(rows) {
            out.scaled_add(*a, row);
        }
        Ok(out)
    }

    /// Same steering rule as the strong attack, applied to an estimated state.
    pub fn craft(&self, victim: usize, w_hat_prev: &Vector, round: usize) -> Result<Vector> {
        let aim = self.victim(victim)?.target.aim_point(self.r, round, self.compensate);
        Ok(steer(w_hat_prev, self.r, &aim))
    }

    /// Per-round attacker step for one victim, run after honest agents publish.
    ///
    /// Uses last round's messages and the victim's fresh `psi` to refine the
    /// weight estimate, then estimates the victim's previous state and crafts
    /// this round's message. Returns `None` until a round of history exists.
    pub fn step(&mut self, victim: usize, psi_victim_now: &Vector, round: usize) -> Result<Option<WeakStep>> {
        let Some(prev) = self.victim(victim)?.psi_prev.clone() else {
            return Ok(None);
        };
        self.update_weights(victim, &prev, psi_victim_now)?;
        let w_hat_prev = self.estimate_state(victim, &prev)?;
        let message = self.craft(victim, &w_hat_prev, round)?;
        Ok(Some(WeakStep { message, w_hat_prev }))
    }

    /// Stores the messages the victim received this round.
    pub fn observe(&mut self, victim: usize, received: BTreeMap<usize, Vector>) -> Result<()> {
        self.victim_mut(victim)?.psi_prev = Some(received);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStep {
    pub message: Vector,
    pub w_hat_prev: Vector,
}

pub fn weak_update_weights(
    attacker: &mut WeakAttacker,
    victim: usize,
    psi_prev: &BTreeMap<usize, Vector>,
    psi_victim_now: &Vector,
) -> Result<WeightRow> {
    attacker.update_weights(victim, psi_prev, psi_victim_now)
}

pub fn weak_estimate_state(attacker: &WeakAttacker, victim: usize, psis: &BTreeMap<usize, Vector>) -> Result<Vector> {
    attacker.estimate_state(victim, psis)
}

pub fn craft_weak_message(attacker: &WeakAttacker, victim: usize, w_hat_prev: &Vector, round: usize) -> Result<Vector> {
    attacker.craft(victim, w_hat_prev, round)
}

/// Agents to compromise so that every normal agent has a compromised neighbor.
pub fn plan_network_attack(topology: &Topology) -> BTreeSet<usize> {
    topology.greedy_min_dominating_set().members
}
