//! Tilt-stability certification for semidefinite programs with convex
//! feasible sets.
//!
//! The library analyses a local minimiser of
//! `min phi(x)  s.t.  A x = b,  g(x) PSD`
//! with convex quadratic `phi` and affine or matrix-concave quadratic `g`.
//! It checks point-based sufficient and necessary conditions for tilt
//! stability built from the spectral structure of the pair `(g(x*), S*)` of
//! the constraint value and a Lagrange multiplier, and cross-validates the
//! certificates with a brute-force tilt-perturbation probe.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod symmat;

pub mod conicsolve;
pub mod problem;
pub mod psdcone;
pub mod tiltcheck;
pub mod tiltsim;
pub mod varanalysis;

pub mod cli;

pub use error::{Error, Result};

/// Derives a decorrelated child seed for the `index`-th independent stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 step keeps child streams decorrelated for nearby indices.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Extended real value of a second-order quantity: finite or plus infinity.
/// Infinity is a tag, never a float.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum ExtReal {
    Finite(f64),
    PlusInfinity,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            ExtReal::PlusInfinity => None,
        }
    }
}

/// Shared numerical tolerances. Every certificate threshold in the crate is
/// one of these knobs.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Tolerances {
    /// Off-diagonal target of the eigensolver, relative to matrix scale.
    pub eigen: f64,
    /// Relative eigenvalue threshold for rank decisions.
    pub rank: f64,
    /// Feasibility residual accepted by projection solvers.
    pub feas: f64,
    /// Norm above which a candidate witness counts as a genuine certificate.
    pub witness: f64,
    /// Residual under which a set membership is accepted.
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigen: 1e-12,
            rank: 1e-9,
            feas: 1e-8,
            witness: 1e-5,
            membership: 1e-7,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_across_indices() {
        let s = 42;
        let a = derive_seed(s, 0);
        let b = derive_seed(s, 1);
        let c = derive_seed(s, 2);
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_eq!(a, derive_seed(s, 0));
    }

    #[test]
    fn ext_real_distinguishes_infinity() {
        assert!(ExtReal::Finite(3.0).is_finite());
        assert!(!ExtReal::PlusInfinity.is_finite());
        assert_eq!(ExtReal::Finite(3.0).finite(), Some(3.0));
    }
}
