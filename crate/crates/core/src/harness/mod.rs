//! End-to-end runs, parameter sweeps, selection and output files.

pub mod config;
pub mod output;
pub mod run;
pub mod select;
pub mod sweep;

pub use config::{Scene, SceneConfig, SceneError};
pub use run::{run_bite_transfer, run_observed, MetricWindow, RunOutput, RunRecord, RunStatus, StepObserver, TraceRow, TrajectoryPoint};
pub use select::{pareto_set, select_optimal, Selection};
pub use sweep::{run_sweep, GridRange, SweepPhase, SweepSpec};
