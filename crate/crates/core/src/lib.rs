//! Asymptotic no-trade bands, welfare and turnover under small bid-ask spreads,
//! with a Monte Carlo simulator to check them.

pub mod asymptotics;
pub mod error;
pub mod experiments;
pub mod frictionless;
pub mod market;
pub mod preferences;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use experiments::{
    compare_report, mean_variance_experiment, run_sweep, stochastic_bracket_check, BaseConfig, CompareReport, SweepResult,
    SweepSpec, Tolerances,
};
pub use frictionless::{solve_frictionless, FrictionlessModel, FrictionlessSolution, PathSolution};
pub use market::{
    simulate_paths, MarketModel, ModelKind, PathBundle, PathGenerator, PathGrid, SamplePath, Series, SpreadMode,
    SpreadModel,
};
pub use preferences::{Family, Preferences, UtilityKind};
pub use simulator::{run_frictional, run_frictional_sweep, FrictionSimResult, FrictionalRun, InitialPosition, SimOptions};
