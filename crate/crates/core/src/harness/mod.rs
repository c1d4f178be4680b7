//! Experiment grids, result persistence, plots and verification suites.

pub mod config;
pub mod csv;
pub mod experiment;
pub mod plot;
pub mod verify;

pub use config::{BudgetRule, ExperimentConfig, Outputs, PlotY};
pub use csv::{emit_csv, read_csv, write_csv, RESULTS_CSV_HEADER};
pub use experiment::{run_experiment, ResultRow, ResultTable};
pub use plot::{emit_plot, render_svg};
pub use verify::{run_suite, Suite, SuiteReport};
