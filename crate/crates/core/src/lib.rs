//! Box-relaxation decoding of binary signals from noisy Gaussian linear
//! measurements `y = A beta + w`.
//!
//! The crate bundles the decoder itself ([`decoder`]), the scalar theory
//! that predicts its error statistics ([`theory`]), seeded Monte Carlo
//! campaigns and leave-one-out diagnostics ([`montecarlo`]), the empirical
//! statistics used to compare the two ([`stats`]), and drivers for the
//! standard experiments ([`experiments`]).

pub mod decoder;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod linalg;
pub mod montecarlo;
pub mod output;
pub mod rng;
pub mod stats;
pub mod theory;

pub use decoder::{solve_box_ls, DecoderSolution, ProblemInstance, SolverConfig};
pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use montecarlo::{run_campaign, BetaMode, CampaignResult, ExperimentConfig, RecordLevel, TrialRecord};
pub use rng::SeedTrace;
pub use stats::EmpiricalSummary;
pub use theory::{predict, SystemParams, TheoryPrediction};
