//! Library side of the `bench` command.

pub mod config;
pub mod figures;
pub mod fit;
pub mod report;
pub mod sweep;

pub use config::{load_scenario, Override};
pub use figures::{run_reproduction, FigureId, ReproductionSpec};
pub use fit::{fit_file, FitModel};
pub use report::{emit_reports, CriterionReport, ReportBundle, Status};
pub use sweep::{run_sweep, sweep_values, SweepRow};
