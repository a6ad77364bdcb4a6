//! Dense matrices, a small MLP with manual backprop, and optimizers.

pub mod gradcheck;
mod mat;
mod mlp;
mod optim;
pub mod rng;

pub use mat::{mat_mul, mat_mul_nt, mat_mul_tn, Mat};
pub use mlp::{Activation, Dense, DenseGrads, Mlp, MlpCache, MlpGrads, MlpSpec, NormParamGrads};
pub use optim::{OptState, OptimizerConfig, OptimizerKind};
