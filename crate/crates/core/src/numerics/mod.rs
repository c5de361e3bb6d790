//! Dense linear algebra, activations and the seeded PRNG.

mod activation;
mod eigen;
mod matrix;
mod rng;

pub use activation::{log_softmax_row, log_sum_exp, sigmoid, sigmoid_in_place, sigmoid_scalar, softmax_row};
pub use eigen::{sym_eigh, SymEigen};
pub use matrix::{dot, gemm, matmul, matmul_nt, matmul_tn, squared_distance, Matrix, Trans};
pub use rng::{derive_seed, splitmix64, Rng};
