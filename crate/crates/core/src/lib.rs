pub mod error;
pub mod experiment;
pub mod ingest;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod prox;
pub mod solver;
pub mod synth;
pub mod tensor;
pub mod tensor_io;

pub use error::{Error, Result};
pub use mask::ObservationMask;
pub use matrix::Matrix;
pub use solver::{MuInit, Regularizer, SolverConfig, SolverResult};
pub use tensor::{DenseTensor, TuckerFactors};
