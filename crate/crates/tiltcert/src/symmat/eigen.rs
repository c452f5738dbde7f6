//! Symmetric eigendecomposition by cyclic Jacobi rotations, simultaneous
//! diagonalisation of commuting pairs, and the spectral pseudo-inverse.
//!
//! The solver sweeps all off-diagonal positions, annihilating each with a
//! Givens rotation, until the largest off-diagonal entry falls below the
//! requested tolerance. Matrices here are small (orders up to a few dozen),
//! where Jacobi is both accurate and fast enough.

use super::matrix::{Mat, SymMatrix};
use crate::error::{Error, Result};

/// Default absolute-plus-relative off-diagonal target for the Jacobi sweep.
pub const EIGEN_TOL: f64 = 1e-12;
/// Relative gap under which eigenvalues are treated as one cluster.
pub const GROUP_TOL: f64 = 1e-7;
/// Relative threshold separating numerically zero eigenvalues from the rest.
pub const RANK_TOL: f64 = 1e-9;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in non-increasing order with an orthogonal frame of
/// eigenvectors as columns: `M = frame * Diag(eigvals) * frame'`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigvals: Vec<f64>,
    pub frame: Mat,
}

impl SpectralDecomposition {
    /// `max |P Diag(l) P' - M|`.
    pub fn reconstruction_residual(&self, m: &SymMatrix) -> f64 {
        let rebuilt = self.frame.congruence_rev(&SymMatrix::diag(&self.eigvals));
        rebuilt.sub(m).norm_max()
    }
}

/// Cyclic Jacobi eigensolver. `tol` bounds the final off-diagonal magnitude
/// relative to the input scale.
pub fn sym_eigen(m: &SymMatrix, tol: f64) -> Result<SpectralDecomposition> {
    let n = m.dim();
    if n == 0 {
        return Ok(SpectralDecomposition { eigvals: vec![], frame: Mat::zeros(0, 0) });
    }
    let mut a = m.to_mat();
    let mut v = Mat::identity(n);
    let scale = 1.0 + m.norm_max();
    let target = tol * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a.get(p, q).abs());
            }
        }
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 0.1 * target / (n * n) as f64 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // Stable rotation: tan of the smaller annihilating angle.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a.get(p, q).abs());
            }
        }
        if off > target {
            return Err(Error::NumericalFailure { context: "jacobi eigensolver".into(), residual: off });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let frame = v.select_cols(&order);
    Ok(SpectralDecomposition { eigvals, frame })
}

/// Groups a non-increasing eigenvalue sequence into clusters separated by
/// gaps larger than `GROUP_TOL * (1 + max |eigval|)`. Returns index ranges.
pub fn cluster_eigenvalues(eigvals: &[f64]) -> Vec<std::ops::Range<usize>> {
    if eigvals.is_empty() {
        return vec![];
    }
    let scale = eigvals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let gap = GROUP_TOL * (1.0 + scale);
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..eigvals.len() {
        if eigvals[i - 1] - eigvals[i] > gap {
            ranges.push(start..i);
            start = i;
        }
    }
    ranges.push(start..eigvals.len());
    ranges
}

/// Simultaneous eigendecomposition of a commuting pair: one orthogonal frame
/// `P` with `X = P Diag(lx) P'` and `S = P Diag(ls) P'`. `lx` is
/// non-increasing; within every eigenvalue cluster of `X`, `ls` is
/// non-increasing.
#[derive(Debug, Clone)]
pub struct PairDecomposition {
    pub frame: Mat,
    pub eigvals_x: Vec<f64>,
    pub eigvals_s: Vec<f64>,
}

pub fn simultaneous_eigen(x: &SymMatrix, s: &SymMatrix, tol: f64) -> Result<PairDecomposition> {
    if x.dim() != s.dim() {
        return Err(Error::DimensionMismatch(format!(
            "pair orders {} and {}",
            x.dim(),
            s.dim()
        )));
    }
    let comm = x.commutator_norm(s);
    let comm_tol = tol * (1.0 + x.norm_max() * s.norm_max());
    if comm > comm_tol {
        return Err(Error::NonCommuting { residual: comm, tol: comm_tol });
    }

    let dx = sym_eigen(x, EIGEN_TOL)?;
    let mut frame = dx.frame;
    let eigvals_x = dx.eigvals;
    let s_in_frame = frame.congruence(s);
    let mut eigvals_s = vec![0.0; s.dim()];

    for range in cluster_eigenvalues(&eigvals_x) {
        let idx: Vec<usize> = range.clone().collect();
        let block = SymMatrix::from_fn(idx.len(), |i, j| s_in_frame.get(idx[i], idx[j]));
        let db = sym_eigen(&block, EIGEN_TOL)?;
        // Rotate the cluster's columns by the block eigenvectors.
        let cluster_cols = frame.select_cols(&idx);
        let rotated = cluster_cols.mul(&db.frame);
        for (k, &col) in idx.iter().enumerate() {
            for r in 0..frame.rows {
                frame.set(r, col, rotated.get(r, k));
            }
        }
        for (k, &col) in idx.iter().enumerate() {
            eigvals_s[col] = db.eigvals[k];
        }
    }

    Ok(PairDecomposition { frame, eigvals_x, eigvals_s })
}

/// Moore-Penrose pseudo-inverse through the spectral decomposition.
/// Eigenvalues below `rank_tol * max |eigval|` in magnitude are treated as
/// zero.
pub fn pseudo_inverse(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let d = sym_eigen(m, EIGEN_TOL)?;
    let scale = d.eigvals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cut = rank_tol * scale;
    let inv: Vec<f64> = d
        .eigvals
        .iter()
        .map(|&l| if l.abs() > cut { 1.0 / l } else { 0.0 })
        .collect();
    Ok(d.frame.congruence_rev(&SymMatrix::diag(&inv)))
}

/// Numerical rank with the same threshold rule as `pseudo_inverse`.
pub fn sym_rank(m: &SymMatrix, rank_tol: f64) -> Result<usize> {
    sym_rank_floored(m, rank_tol, 0.0)
}

/// Rank with the cutoff taken relative to the larger of the spectrum's own
/// scale and `scale_floor`. Passing the natural unit of the surrounding
/// computation as the floor keeps a matrix whose every eigenvalue is
/// round-off noise at rank zero instead of counting the noise against
/// itself.
pub fn sym_rank_floored(m: &SymMatrix, rank_tol: f64, scale_floor: f64) -> Result<usize> {
    let d = sym_eigen(m, EIGEN_TOL)?;
    let scale = d
        .eigvals
        .iter()
        .fold(scale_floor.abs(), |a, &b| a.max(b.abs()));
    let cut = rank_tol * scale;
    Ok(d.eigvals.iter().filter(|l| l.abs() > cut).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::matrix::dot;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        // Gram-Schmidt on a Gaussian matrix.
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand::distributions::Standard) - 0.5).collect();
            for c in &cols {
                let d = dot(&v, c);
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= d * ci;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                for vi in v.iter_mut() {
                    *vi /= norm;
                }
                cols.push(v);
            }
        }
        Mat::from_fn(n, n, |i, j| cols[j][i])
    }

    fn assemble(p: &Mat, eigvals: &[f64]) -> SymMatrix {
        p.congruence_rev(&SymMatrix::diag(eigvals))
    }

    #[test]
    fn recovers_a_planted_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let n = 2 + (trial % 7);
            let p = random_orthogonal(n, &mut rng);
            let mut vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let m = assemble(&p, &vals);
            let d = sym_eigen(&m, EIGEN_TOL).unwrap();
            for (a, b) in d.eigvals.iter().zip(&vals) {
                assert!((a - b).abs() < 1e-9, "eigenvalue {a} vs planted {b}");
            }
            assert!(d.reconstruction_residual(&m) < 1e-10 * (1.0 + m.norm_max()));
            assert!(d.frame.orthogonality_residual() < 1e-12);
        }
    }

    #[test]
    fn frozen_spectrum_of_a_fixed_matrix() {
        // Eigenvalues of [[2,1,0],[1,2,1],[0,1,2]] are 2 and 2 +- sqrt(2).
        let m = SymMatrix::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let d = sym_eigen(&m, EIGEN_TOL).unwrap();
        let expect = [2.0 + std::f64::consts::SQRT_2, 2.0, 2.0 - std::f64::consts::SQRT_2];
        for (a, b) in d.eigvals.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_are_sorted_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = SymMatrix::from_fn(5, |i, j| {
                let _ = (i, j);
                rng.gen_range(-1.0..1.0)
            });
            let d = sym_eigen(&m, EIGEN_TOL).unwrap();
            for w in d.eigvals.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
        }
    }

    #[test]
    fn simultaneous_eigen_shares_one_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..30 {
            let n = 4;
            let p = random_orthogonal(n, &mut rng);
            // Commuting pair: same frame, arbitrary spectra with repeats.
            let lx = vec![2.0, 2.0, 0.0, 0.0];
            let ls = vec![0.0, 0.0, -1.0, -3.0];
            let x = assemble(&p, &lx);
            let s = assemble(&p, &ls);
            let pd = simultaneous_eigen(&x, &s, 1e-10).unwrap();
            assert!(pd.frame.orthogonality_residual() < 1e-10);
            let rx = pd.frame.congruence_rev(&SymMatrix::diag(&pd.eigvals_x));
            let rs = pd.frame.congruence_rev(&SymMatrix::diag(&pd.eigvals_s));
            assert!(rx.sub(&x).norm_max() < 1e-9);
            assert!(rs.sub(&s).norm_max() < 1e-9);
            // Within the zero cluster of X the S eigenvalues are sorted.
            assert!(pd.eigvals_s[2] >= pd.eigvals_s[3]);
        }
    }

    #[test]
    fn simultaneous_eigen_rejects_non_commuting_pairs() {
        let x = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let s = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        match simultaneous_eigen(&x, &s, 1e-10) {
            Err(Error::NonCommuting { .. }) => {}
            other => panic!("expected NonCommuting, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..40 {
            let n = 2 + (trial % 5);
            let p = random_orthogonal(n, &mut rng);
            let rank = 1 + (trial % n.max(1)).min(n - 1);
            let vals: Vec<f64> = (0..n)
                .map(|i| if i < rank { rng.gen_range(0.5..2.0) } else { 0.0 })
                .collect();
            let m = assemble(&p, &vals);
            let mp = pseudo_inverse(&m, RANK_TOL).unwrap();
            let mmp = m.mul_sym(&mp);
            let m_mat = m.to_mat();
            let mp_mat = mp.to_mat();
            // M M+ M = M and M+ M M+ = M+.
            let r1 = mmp.mul(&m_mat).sub(&m_mat).norm_max();
            let r2 = mp_mat.mul(&m_mat).mul(&mp_mat).sub(&mp_mat).norm_max();
            // M M+ symmetric.
            let r3 = mmp.sub(&mmp.transpose()).norm_max();
            assert!(r1 < 1e-9, "penrose 1 residual {r1}");
            assert!(r2 < 1e-9, "penrose 2 residual {r2}");
            assert!(r3 < 1e-9, "penrose symmetry residual {r3}");
        }
    }

    #[test]
    fn pseudo_inverse_of_a_frozen_diagonal() {
        let m = SymMatrix::diag(&[4.0, 0.0, 0.5]);
        let mp = pseudo_inverse(&m, RANK_TOL).unwrap();
        let expect = SymMatrix::diag(&[0.25, 0.0, 2.0]);
        assert!(mp.sub(&expect).norm_max() < 1e-12);
    }

    #[test]
    fn clustering_groups_close_eigenvalues() {
        let vals = [3.0, 3.0 + 1e-9, 1.0, 1e-13, -1e-13];
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let ranges = cluster_eigenvalues(&sorted);
        assert_eq!(ranges.len(), 3);
        assert_eq!(ranges[0], 0..2);
        assert_eq!(ranges[1], 2..3);
        assert_eq!(ranges[2], 3..5);
    }
}
