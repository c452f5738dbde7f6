//! Symmetric-matrix kernel: packed storage, scaled coordinates, a Jacobi
//! eigensolver, simultaneous diagonalisation of commuting pairs, spectral
//! pseudo-inverses and orthonormal subspace arithmetic.

mod eigen;
mod matrix;
mod subspace;

pub use eigen::{
    cluster_eigenvalues, pseudo_inverse, sym_eigen, sym_rank, sym_rank_floored,
    simultaneous_eigen,
    PairDecomposition, SpectralDecomposition, EIGEN_TOL, GROUP_TOL, RANK_TOL,
};
pub use matrix::{dot, norm2, order_of_sym_dim, sym_dim, Mat, SymMatrix, SQRT2};
pub use subspace::{kernel_of_rows, SubspaceBasis, INCLUSION_TOL, SPAN_TOL};
