//! Sweep experiments, the two-dimensional figure data and the invariant
//! checks, all driven by one [`ExperimentConfig`].

pub mod checks;
pub mod config;
pub mod figure1;
pub mod panels;
pub mod pipeline;

pub use checks::{run_verify, CheckOutcome, VerifyReport};
pub use config::{ExperimentConfig, Figure1Config, PrecisionSource, SweepSpec};
pub use figure1::{run_figure1, Figure1Data, FIGURE1_N_LARGE};
pub use panels::{records_to_csv, run_panel, write_csv, SweepRecord, CSV_HEADER};
pub use pipeline::{empirical_mse, estimate_precisions, exact_precisions, MseEstimate, PrecisionEstimate};
