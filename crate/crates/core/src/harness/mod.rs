//! Monte Carlo protocol: configuration with protocol defaults, seeded
//! per-trial pipeline, summary tables and artifact emission.
//!
//! Every random draw comes from a stream keyed by (master seed, trial,
//! stage), so outputs do not depend on the worker count.

mod config;
mod emit;
mod rng;
mod run;
mod studies;
mod summary;

pub use config::{BootstrapConfig, ExperimentConfig, Flags, InvestorType, MarketSettings, DEFAULT_TYPE_COUNT};
pub use emit::{
    emit, fmt_f64, prepare_dir, write_coverage, write_recovery, write_regret_quantiles, write_shock_losses,
    write_summaries, COVERAGE_HEADER, RECOVERY_HEADER, REGRET_QUANTILES_HEADER, SHOCK_LOSSES_HEADER, TRIALS_HEADER,
};
pub use rng::{stream, tags};
pub use run::{
    provenance, run_experiment, with_workers, Provenance, RunArtifact, ScenarioRecord, TrialRecord, FAILURE_BUDGET,
    PARAMETERS,
};
pub use studies::{
    shock_study, ConsistencyReport, ConsistencyStudy, RegretReport, RegretSeedResult, RegretStudy, RobustnessReport,
    RobustnessStudy, ShockStudy,
};
pub use summary::{summarize, CoverageRow, RecoveryRow, RegretQuantileRow, ShockLossRow, Summaries, ALL_TYPES};
