//! Experiment orchestration: configuration, run directories, fits and plots.

mod config;
mod ledger;
mod report;

pub use config::{parse_config, FitWindow, RunConfig, GAP_GUARD};
pub use ledger::{
    fit_decay, manifest_text, read_snapshot, write_run_dir, write_snapshot, Ledger, GIT_DESCRIBE,
};
pub use report::{render_report, Report};
