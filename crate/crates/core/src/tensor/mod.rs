//! Dense matrices, convolution kernels, seeded randomness and the small amount
//! of linear algebra the rest of the crate needs.

pub mod io;
mod kernel;
mod linalg;
mod matrix;
mod rng;

pub use kernel::ConvKernel;
pub use linalg::{
    dot, gaussian_matrix, hadamard, matmul, matmul_nt, matmul_tn, numerical_rank, outer, qr_thin,
    singular_values, DEFAULT_RANK_TOL,
};
pub use matrix::Matrix;
pub use rng::Rng;
