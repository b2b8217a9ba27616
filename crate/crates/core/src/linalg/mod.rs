//! Dense complex linear algebra kernel shared by every other module.

mod decomp;
mod eig;
mod matrix;

pub use decomp::{
    eig_dense, eigenvalues, eigh, exp_anti_hermitian, exp_hermitian, inverse, null_space, solve, svd, Svd,
};
pub use eig::{
    compare_by_modulus, eig_leading, numerical_radius, power_iteration, sorted_eigenvalues, spectral_radius_dense,
    EigenPair, DENSE_CAP,
};
pub use matrix::{matrix_power, CMatrix};

pub use num_complex::Complex64 as C64;
