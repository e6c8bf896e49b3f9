//! Over-parameterized symmetric tensor decomposition.
//!
//! Fits a rank-`r` symmetric order-`l` tensor `T*` with `m ≥ r` components
//! using a 2-homogeneous parameterization and gradient descent with periodic
//! re-initialization of the weakest component. Also provides the explicit
//! spurious local minima of the plain parameterization and the lower bound on
//! what a lazily trained model can fit.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constructions;
pub mod error;
pub mod lazy_bound;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{GroundTruth, GroundTruthSpec, Hyperparams, ModelParams};
pub use optimizer::{run, run_from, Outcome, RunMetrics, RunResult};
pub use rng::{Purpose, SeedStream};
pub use tensor::{SubspaceBasis, SymTensor};
