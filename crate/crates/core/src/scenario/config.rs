//! Scenario configuration: a versioned JSON document with strict keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{Motion, WeightInit};
use crate::error::{Error, Result};
use crate::resilient::{DEFAULT_EPOCH, DEFAULT_MIN_WINDOW, DEFAULT_WINDOW};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_SIGMA_U: [f64; 2] = [0.8, 1.2];
pub const DEFAULT_SIGMA_V: [f64; 2] = [0.15, 0.2];
/// Regressor and noise variance range used when the attack is weak.
pub const WEAK_SIGMA: [f64; 2] = [0.75, 0.85];
pub const DEFAULT_MU_A: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Noncoop,
    Dlmsaw,
    Rdlmsaw,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Noncoop => "noncoop",
            Algorithm::Dlmsaw => "dlmsaw",
            Algorithm::Rdlmsaw => "rdlmsaw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    /// Random geometric graph on the unit square, regenerated until connected.
    Geometric {
        n_agents: usize,
        radius: f64,
        /// Width of an empty vertical band around `x = 0.5`.
        #[serde(default)]
        gap: f64,
        #[serde(default = "default_attempts")]
        max_attempts: usize,
    },
    /// Edge list in the topology JSON format, resolved relative to the config file.
    File { path: PathBuf },
    Inline {
        n_agents: usize,
        edges: Vec<[usize; 2]>,
        #[serde(default)]
        compromised: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        positions: Option<Vec<[f64; 2]>>,
    },
}

fn default_attempts() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Assignment {
    /// `"spatial"`: agents are split into equal groups by x-coordinate.
    Rule(String),
    /// Explicit task index per agent.
    Explicit(Vec<usize>),
}

impl Default for Assignment {
    fn default() -> Self {
        Assignment::Rule("spatial".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub centers: Vec<Vec<f64>>,
    #[serde(default = "stationary")]
    pub motion: Motion,
    #[serde(default)]
    pub assignment: Assignment,
}

fn stationary() -> Motion {
    Motion::Stationary
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            centers: vec![vec![0.1, 0.1], vec![0.9, 0.9]],
            motion: Motion::Stationary,
            assignment: Assignment::default(),
        }
    }
}

/// Number of neighbors each agent may discard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FSpec {
    Global(i64),
    PerAgent(BTreeMap<String, i64>),
    /// `"auto"`: grown online per agent.
    Auto(String),
}

impl Default for FSpec {
    fn default() -> Self {
        FSpec::Global(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompromisedSpec {
    List { agents: Vec<usize> },
    DominatingSet,
    /// `count` agents pairwise at least three hops apart.
    OneLocal { count: usize },
    /// Use the `compromised` field of the topology input.
    Topology,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default)]
    pub start_round: usize,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub mu_a: Option<f64>,
    #[serde(default = "default_attack_target")]
    pub target: Vec<f64>,
    #[serde(default = "stationary")]
    pub motion: Motion,
    #[serde(default = "yes")]
    pub compensate: bool,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub weight_init: WeightInit,
    pub compromised: CompromisedSpec,
}

fn default_r() -> f64 {
    0.002
}

fn default_attack_target() -> Vec<f64> {
    vec![0.5, 0.5]
}

fn yes() -> bool {
    true
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            start_round: 0,
            r: default_r(),
            mu_a: None,
            target: default_attack_target(),
            motion: Motion::Stationary,
            compensate: true,
            strict: false,
            weight_init: WeightInit::default(),
            compromised: CompromisedSpec::List { agents: vec![] },
        }
    }

    pub fn new(kind: AttackKind, compromised: CompromisedSpec) -> Self {
        AttackSpec {
            kind,
            compromised,
            ..AttackSpec::none()
        }
    }

    pub fn mu_a(&self) -> f64 {
        self.mu_a.unwrap_or(DEFAULT_MU_A)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub window: usize,
    pub threshold: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            window: 500,
            threshold: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResilienceSpec {
    pub window: usize,
    pub min_window: usize,
    /// Rounds between updates of an automatically chosen `F`.
    pub f_epoch: usize,
    pub f_margin: f64,
}

impl Default for ResilienceSpec {
    fn default() -> Self {
        ResilienceSpec {
            window: DEFAULT_WINDOW,
            min_window: DEFAULT_MIN_WINDOW,
            f_epoch: DEFAULT_EPOCH,
            f_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub topology: TopologySpec,
    #[serde(default)]
    pub tasks: TaskSpec,
    /// Regressor variance range; defaults depend on the attack kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_u: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<[f64; 2]>,
    #[serde(default = "default_step")]
    pub mu: f64,
    #[serde(default = "default_step")]
    pub nu: f64,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub f: FSpec,
    #[serde(default)]
    pub resilience: ResilienceSpec,
    #[serde(default = "AttackSpec::none")]
    pub attack: AttackSpec,
    pub rounds: usize,
    #[serde(default = "default_prune")]
    pub prune_threshold: f64,
    #[serde(default)]
    pub snapshot_rounds: Vec<usize>,
    /// Per-agent records are kept every `agent_stride` rounds.
    #[serde(default = "default_stride")]
    pub agent_stride: usize,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

fn default_step() -> f64 {
    0.01
}

fn default_prune() -> f64 {
    0.01
}

fn default_stride() -> usize {
    10
}

/// Resolved per-agent `F`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FPlan {
    Fixed(Vec<usize>),
    Auto,
}

impl ScenarioConfig {
    /// Defaults for everything except the graph, algorithm and horizon.
    pub fn new(topology: TopologySpec, algorithm: Algorithm, rounds: usize) -> Self {
        ScenarioConfig {
            schema: SCHEMA_VERSION,
            seed: None,
            topology,
            tasks: TaskSpec::default(),
            sigma_u: None,
            sigma_v: None,
            mu: default_step(),
            nu: default_step(),
            algorithm,
            f: FSpec::default(),
            resilience: ResilienceSpec::default(),
            attack: AttackSpec::none(),
            rounds,
            prune_threshold: default_prune(),
            snapshot_rounds: Vec::new(),
            agent_stride: default_stride(),
            convergence: ConvergenceSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative topology paths are resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let TopologySpec::File { path: graph } = &mut cfg.topology {
            if graph.is_relative() {
                if let Some(dir) = path.parent() {
                    *graph = dir.join(&*graph);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sigma_u(&self) -> [f64; 2] {
        self.sigma_u.unwrap_or(match self.attack.kind {
            AttackKind::Weak => WEAK_SIGMA,
            _ => DEFAULT_SIGMA_U,
        })
    }

    pub fn sigma_v(&self) -> [f64; 2] {
        self.sigma_v.unwrap_or(match self.attack.kind {
            AttackKind::Weak => WEAK_SIGMA,
            _ => DEFAULT_SIGMA_V,
        })
    }

    pub fn dim(&self) -> usize {
        self.tasks.centers.first().map_or(0, Vec::len)
    }

    /// Checks everything that does not need the resolved graph.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        unit_step("mu", self.mu)?;
        unit_step("nu", self.nu)?;
        variance_range("sigma_u", self.sigma_u())?;
        variance_range("sigma_v", self.sigma_v())?;

        let dim = self.dim();
        if dim == 0 {
            return Err(Error::config("tasks.centers", "need at least one non-empty center"));
        }
        if self.tasks.centers.iter().any(|c| c.len() != dim) {
            return Err(Error::config("tasks.centers", "all centers must have the same dimension"));
        }
        motion("tasks.motion", &self.tasks.motion)?;
        match &self.tasks.assignment {
            Assignment::Rule(rule) if rule != "spatial" => {
                return Err(Error::config(
                    "tasks.assignment",
                    format!("unknown rule `{rule}`, expected \"spatial\" or a list"),
                ));
            }
            Assignment::Explicit(list) => {
                if let Some(bad) = list.iter().find(|&&t| t >= self.tasks.centers.len()) {
                    return Err(Error::config("tasks.assignment", format!("task {bad} has no center")));
                }
            }
            Assignment::Rule(_) => {}
        }

        match &self.topology {
            TopologySpec::Geometric { n_agents, radius, gap, .. } => {
                if *n_agents == 0 {
                    return Err(Error::config("topology.n_agents", "must be positive"));
                }
                if !(*radius > 0.0) {
                    return Err(Error::config("topology.radius", "must be positive"));
                }
                if !(0.0..1.0).contains(gap) {
                    return Err(Error::config("topology.gap", "must lie in [0, 1)"));
                }
            }
            TopologySpec::Inline { n_agents, positions, .. } => {
                if let Some(p) = positions {
                    if p.len() != *n_agents {
                        return Err(Error::config("topology.positions", "need one position per agent"));
                    }
                }
            }
            TopologySpec::File { .. } => {}
        }

        self.f_plan_unchecked()?;
        let res = &self.resilience;
        if res.window == 0 {
            return Err(Error::config("resilience.window", "must be positive"));
        }
        if res.f_epoch == 0 {
            return Err(Error::config("resilience.f_epoch", "must be positive"));
        }
        if !(res.f_margin >= 0.0) {
            return Err(Error::config("resilience.f_margin", "must be non-negative"));
        }

        let attack = &self.attack;
        if attack.kind != AttackKind::None {
            if !(attack.r > 0.0 && attack.r < 1.0) {
                return Err(Error::config("attack.r", "must lie in (0, 1)"));
            }
            if !(attack.mu_a() > 0.0) {
                return Err(Error::config("attack.mu_a", "must be positive"));
            }
            if attack.target.len() != dim {
                return Err(Error::config(
                    "attack.target",
                    format!("dimension {} does not match task dimension {dim}", attack.target.len()),
                ));
            }
            motion("attack.motion", &attack.motion)?;
        }

        if !(self.prune_threshold >= 0.0) {
            return Err(Error::config("prune_threshold", "must be non-negative"));
        }
        if let Some(bad) = self.snapshot_rounds.iter().find(|&&r| r >= self.rounds) {
            return Err(Error::config("snapshot_rounds", format!("round {bad} is past the horizon")));
        }
        if self.agent_stride == 0 {
            return Err(Error::config("agent_stride", "must be positive"));
        }
        if self.convergence.window == 0 {
            return Err(Error::config("convergence.window", "must be positive"));
        }
        if !(self.convergence.threshold > 0.0) {
            return Err(Error::config("convergence.threshold", "must be positive"));
        }
        Ok(())
    }

    fn f_plan_unchecked(&self) -> Result<Option<BTreeMap<usize, usize>>> {
        fn count(field: String, v: i64) -> Result<usize> {
            usize::try_from(v).map_err(|_| Error::config(field, format!("must be non-negative, got {v}")))
        }
        match &self.f {
            FSpec::Global(v) => {
                count("f".into(), *v)?;
                Ok(None)
            }
            FSpec::PerAgent(map) => map
                .iter()
                .map(|(k, v)| {
                    let field = format!("f.{k}");
                    let agent = k
                        .parse::<usize>()
                        .map_err(|_| Error::config(field.clone(), "key is not an agent id"))?;
                    Ok((agent, count(field, *v)?))
                })
                .collect::<Result<_>>()
                .map(Some),
            FSpec::Auto(s) if s == "auto" => Ok(None),
            FSpec::Auto(s) => Err(Error::config("f", format!("expected an integer, a map or \"auto\", got \"{s}\""))),
        }
    }

    /// Per-agent `F` for a network of `n_agents`.
    pub fn f_plan(&self, n_agents: usize) -> Result<FPlan> {
        let per_agent = self.f_plan_unchecked()?;
        match (&self.f, per_agent) {
            (FSpec::Auto(_), _) => Ok(FPlan::Auto),
            (FSpec::Global(v), _) => Ok(FPlan::Fixed(vec![*v as usize; n_agents])),
            (FSpec::PerAgent(_), Some(map)) => {
                let mut out = vec![0; n_agents];
                for (agent, f) in map {
                    if agent >= n_agents {
                        return Err(Error::config(format!("f.{agent}"), "agent id out of range"));
                    }
                    out[agent] = f;
                }
                Ok(FPlan::Fixed(out))
            }
            (FSpec::PerAgent(_), None) => unreachable!("per-agent spec resolves to a map"),
        }
    }
}

fn unit_step(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in (0, 1], got {v}")))
    }
}

fn variance_range(field: &str, [lo, hi]: [f64; 2]) -> Result<()> {
    if lo > 0.0 && lo <= hi && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("need 0 < lo <= hi, got [{lo}, {hi}]")))
    }
}

fn motion(field: &str, m: &Motion) -> Result<()> {
    match m {
        Motion::Stationary => Ok(()),
        Motion::Circular { amplitude, omega } if amplitude.is_finite() && omega.is_finite() => Ok(()),
        Motion::Circular { .. } => Err(Error::config(field, "amplitude and omega must be finite")),
    }
}
