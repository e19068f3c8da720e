//! Test-matrix generation, accuracy metrics, the synchronization cost model
//! and the benchmark driver behind the command-line tool.

mod bench;
mod config;
mod cost;
mod genmat;
mod metrics;
pub mod verify;

pub use bench::{run_bench, BenchReport, BenchRow, CellStatus, ASSUMPTION_MARGIN, CSV_HEADER};
pub use config::{Baseline, BenchConfig, BenchMode, ConfigError};
pub use cost::{analytic_cost, analytic_cost_with, predict_speedup, Cost, CostModel};
pub use genmat::{gen_matrix, Distribution, MatrixSpec};
pub use metrics::{condition_number, fit_slope, loss_of_orthogonality, residual, Residual};
