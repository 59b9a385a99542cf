//! Boyan-chain experiment harness: config parsing, runs, the dense batch
//! oracle and CSV/SVG output.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod output;

pub use config::{CurveConfig, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentOutput, RunRecord};
pub use oracle::{batch_oracle, oracle_check, BatchModel, OracleReport};
pub use output::{emit_csv, emit_svg, parse_csv, CsvMeta, XAxis};
