//! Multi-target localization experiments: configuration, data generation,
//! the simulation loop and exported metrics.

pub mod config;
pub mod export;
pub mod metrics;
pub mod sim;

pub use config::{
    Algorithm, Assignment, AttackKind, AttackSpec, CompromisedSpec, ConvergenceSpec, FPlan, FSpec, ResilienceSpec,
    ScenarioConfig, TaskSpec, TopologySpec,
};
pub use export::{write_agents_csv, write_metrics_csv, write_outputs};
pub use metrics::{empirical_msd, AgentRecord, AgentSummary, MetricsLog, RoundRecord, Summary, WeightSnapshot};
pub use sim::{draw_sample, generate_sample, run, run_simulation, target_at, Scenario};
