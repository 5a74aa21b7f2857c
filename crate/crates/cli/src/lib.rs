//! Pipeline orchestration behind the `argpet` binary.

pub mod cell;
pub mod prepare;
pub mod report;
pub mod spec;
pub mod sweep;

pub use cell::{evaluate_cell, run_cell, CellSpec, RunReport};
pub use prepare::{cmd_prepare, load_prepared, PrepareManifest};
pub use report::{cmd_report, ReportSummary};
pub use spec::{ExperimentSpec, Labels, Overrides, Persons};
pub use sweep::{cmd_sweep, plan, SweepReport};
