//! Scenario orchestration, sweeps, CSV output and validation.

pub mod config;
pub mod csv;
pub mod oracle;
pub mod scenario;
pub mod spec;
pub mod sweep;
pub mod validate;
pub mod windows;

pub use config::ConfigFile;
pub use scenario::{run_scenario, simulate, MetricSeries, ParameterEcho, RunFailure, Simulation};
pub use spec::{InitialState, KernelChoice, MConvention, MetricSet, ScenarioSpec};
pub use sweep::{run_sweep, Axes, SweepReport};
