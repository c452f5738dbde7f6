//! Orthonormal subspace bases and exact-rank subspace arithmetic:
//! span, kernel, complement, sum, intersection and inclusion tests.
//!
//! All constructions run modified Gram-Schmidt with one re-orthogonalisation
//! pass, so basis vectors are orthonormal to roughly machine precision and
//! rank decisions reduce to a single residual threshold.

use super::matrix::{dot, norm2};

/// Relative residual under which a vector counts as dependent on the basis
/// accumulated so far.
pub const SPAN_TOL: f64 = 1e-9;
/// Residual under which one subspace counts as contained in another.
pub const INCLUSION_TOL: f64 = 1e-9;

/// Orthonormal basis of a linear subspace of `R^ambient`. `vecs` may be
/// empty (the zero subspace).
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub ambient: usize,
    pub vecs: Vec<Vec<f64>>,
}

impl SubspaceBasis {
    pub fn zero(ambient: usize) -> Self {
        SubspaceBasis { ambient, vecs: vec![] }
    }

    pub fn full(ambient: usize) -> Self {
        let vecs = (0..ambient)
            .map(|i| {
                let mut e = vec![0.0; ambient];
                e[i] = 1.0;
                e
            })
            .collect();
        SubspaceBasis { ambient, vecs }
    }

    /// Orthonormalises the given spanning set, dropping dependent vectors.
    pub fn span(ambient: usize, spanning: &[Vec<f64>]) -> Self {
        let mut basis = SubspaceBasis::zero(ambient);
        for v in spanning {
            basis.absorb(v);
        }
        basis
    }

    /// Adds `v` to the basis unless it is numerically dependent. Returns
    /// whether the dimension grew.
    pub fn absorb(&mut self, v: &[f64]) -> bool {
        debug_assert_eq!(v.len(), self.ambient);
        let scale = norm2(v);
        if scale == 0.0 {
            return false;
        }
        let mut w = v.to_vec();
        for _ in 0..2 {
            for b in &self.vecs {
                let d = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= d * bi;
                }
            }
        }
        let residual = norm2(&w);
        if residual <= SPAN_TOL * scale {
            return false;
        }
        for wi in w.iter_mut() {
            *wi /= residual;
        }
        self.vecs.push(w);
        true
    }

    pub fn dim(&self) -> usize {
        self.vecs.len()
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for b in &self.vecs {
            let d = dot(v, b);
            for (oi, bi) in out.iter_mut().zip(b) {
                *oi += d * bi;
            }
        }
        out
    }

    /// Distance from `v` to the subspace.
    pub fn distance(&self, v: &[f64]) -> f64 {
        let p = self.project(v);
        norm2(&v.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>())
    }

    /// Orthogonal complement, built by absorbing the coordinate basis.
    pub fn complement(&self) -> SubspaceBasis {
        let mut comp = SubspaceBasis::zero(self.ambient);
        for i in 0..self.ambient {
            if comp.dim() + self.dim() >= self.ambient {
                break;
            }
            let mut e = vec![0.0; self.ambient];
            e[i] = 1.0;
            let p = self.project(&e);
            let r: Vec<f64> = e.iter().zip(&p).map(|(a, b)| a - b).collect();
            comp.absorb(&r);
        }
        comp
    }

    /// Sum of subspaces.
    pub fn sum(&self, other: &SubspaceBasis) -> SubspaceBasis {
        debug_assert_eq!(self.ambient, other.ambient);
        let mut out = self.clone();
        for v in &other.vecs {
            out.absorb(v);
        }
        out
    }

    /// Intersection, via the complement identity
    /// `U cap V = (U_perp + V_perp)_perp`.
    pub fn intersect(&self, other: &SubspaceBasis) -> SubspaceBasis {
        debug_assert_eq!(self.ambient, other.ambient);
        self.complement().sum(&other.complement()).complement()
    }

    /// Whether every basis vector of `self` lies in `other` within
    /// `INCLUSION_TOL`.
    pub fn is_contained_in(&self, other: &SubspaceBasis) -> bool {
        self.vecs.iter().all(|v| other.distance(v) <= INCLUSION_TOL)
    }

    /// Whether `v` lies in the subspace within `INCLUSION_TOL * |v|`.
    pub fn contains_vector(&self, v: &[f64]) -> bool {
        let scale = norm2(v);
        scale == 0.0 || self.distance(v) <= INCLUSION_TOL * scale
    }

    /// Max pairwise deviation of the Gram matrix from identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut res = 0.0f64;
        for (i, a) in self.vecs.iter().enumerate() {
            for (j, b) in self.vecs.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                res = res.max((dot(a, b) - target).abs());
            }
        }
        res
    }
}

/// Kernel of the linear map whose matrix has the given rows: the orthogonal
/// complement of the row span.
pub fn kernel_of_rows(ambient: usize, rows: &[Vec<f64>]) -> SubspaceBasis {
    SubspaceBasis::span(ambient, rows).complement()
}
