//! Geometry of the positive semidefinite cone at a point of its graph of
//! normals: index partitions, tangent/normal/critical cone residuals, the
//! support term of the second-order tangent set, and bases for the span of
//! the normal cone and the lineality space of the tangent cone.
//!
//! Conventions: a pair `(X, S)` with `X` PSD, `S` NSD and `<X,S> = 0` is
//! simultaneously diagonalised by one orthogonal frame whose columns are
//! ordered so that the eigenvalues of `X` are non-increasing and, inside the
//! kernel of `X`, the eigenvalues of `S` are non-increasing. Index sets:
//! `alpha` where `X` has positive eigenvalues, `gamma` where `S` has negative
//! eigenvalues, `beta` the rest.

use crate::error::{Error, Result};
use crate::symmat::{
    cluster_eigenvalues, pseudo_inverse, simultaneous_eigen, sym_dim, sym_eigen, Mat,
    SpectralDecomposition, SubspaceBasis, SymMatrix, EIGEN_TOL, GROUP_TOL, RANK_TOL, SQRT2,
};

/// PSD slack allowed on the defining sign conditions of the pair.
pub const PAIR_SIGN_TOL: f64 = 1e-9;
/// Relative tolerance on `<X, S> = 0`.
pub const COMPLEMENTARITY_TOL: f64 = 1e-8;
/// Residual under which a direction counts as critical.
pub const CRITICAL_TOL: f64 = 1e-7;

/// Which cone a residual is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Tangent,
    Normal,
    Critical,
}

/// Index partition of `{0..n}` induced by a complementary pair, together
/// with the distinct-eigenvalue clusters.
///
/// `mu` lists the distinct eigenvalues of `X` in decreasing order with a
/// trailing zero (even when `X` is positive definite); `alpha_blocks` lists
/// the index clusters of the positive ones. `nu` lists the distinct
/// eigenvalues of `S` in decreasing order with a leading zero; `gamma_blocks`
/// lists the index clusters of the negative ones.
#[derive(Debug, Clone)]
pub struct IndexPartition {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
    pub alpha_blocks: Vec<Vec<usize>>,
    pub gamma_blocks: Vec<Vec<usize>>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl IndexPartition {
    /// Indices of the kernel of `X`: `beta` followed by `gamma`.
    pub fn kernel(&self) -> Vec<usize> {
        let mut k = self.beta.clone();
        k.extend_from_slice(&self.gamma);
        k
    }

    pub fn order(&self) -> usize {
        self.alpha.len() + self.beta.len() + self.gamma.len()
    }

    /// Every `alpha` and `gamma` cluster, and `beta`, has at most one index.
    /// In that case the admissible-frame sets below are finite.
    pub fn all_clusters_simple(&self) -> bool {
        self.alpha_blocks.iter().all(|b| b.len() <= 1)
            && self.gamma_blocks.iter().all(|b| b.len() <= 1)
            && self.beta.len() <= 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.order();
        let mut seen = vec![false; n];
        for &i in self.alpha.iter().chain(&self.beta).chain(&self.gamma) {
            if i >= n || seen[i] {
                return Err(Error::DimensionMismatch(format!(
                    "index {i} repeated or out of range in partition"
                )));
            }
            seen[i] = true;
        }
        if self.mu.is_empty() || *self.mu.last().unwrap() != 0.0 {
            return Err(Error::DimensionMismatch("mu must end with 0".into()));
        }
        if self.nu.is_empty() || self.nu[0] != 0.0 {
            return Err(Error::DimensionMismatch("nu must start with 0".into()));
        }
        if self.mu.windows(2).any(|w| w[0] <= w[1]) || self.nu.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::DimensionMismatch("mu and nu must be strictly decreasing".into()));
        }
        if self.alpha_blocks.iter().map(|b| b.len()).sum::<usize>() != self.alpha.len()
            || self.gamma_blocks.iter().map(|b| b.len()).sum::<usize>() != self.gamma.len()
        {
            return Err(Error::DimensionMismatch("cluster blocks do not cover alpha/gamma".into()));
        }
        Ok(())
    }
}

/// A complementary pair in a shared eigenframe, with snapped eigenvalues and
/// the induced partition.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub x: SymMatrix,
    pub s: SymMatrix,
    pub frame: Mat,
    pub eigvals_x: Vec<f64>,
    pub eigvals_s: Vec<f64>,
    pub partition: IndexPartition,
}

impl SpectralPair {
    /// Columns of the frame at the kernel indices of `X`.
    pub fn kernel_frame(&self) -> Mat {
        self.frame.select_cols(&self.partition.kernel())
    }

    /// Columns of the frame at the `gamma` indices (range of `S`).
    pub fn gamma_frame(&self) -> Mat {
        self.frame.select_cols(&self.partition.gamma)
    }

    /// Representation of `w` in the pair frame: `P' W P`.
    pub fn into_frame(&self, w: &SymMatrix) -> SymMatrix {
        self.frame.congruence(w)
    }
}

fn snap(vals: &[f64], tol: f64) -> Vec<f64> {
    vals.iter().map(|&v| if v.abs() <= tol { 0.0 } else { v }).collect()
}

fn build_partition(eigvals_x: &[f64], eigvals_s: &[f64]) -> Result<IndexPartition> {
    let n = eigvals_x.len();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut gamma = Vec::new();
    for i in 0..n {
        if eigvals_x[i] > 0.0 {
            alpha.push(i);
        } else if eigvals_s[i] < 0.0 {
            gamma.push(i);
        } else {
            beta.push(i);
        }
    }

    let alpha_vals: Vec<f64> = alpha.iter().map(|&i| eigvals_x[i]).collect();
    let mut alpha_blocks = Vec::new();
    let mut mu = Vec::new();
    for r in cluster_eigenvalues(&alpha_vals) {
        let block: Vec<usize> = alpha[r.clone()].to_vec();
        let mean = block.iter().map(|&i| eigvals_x[i]).sum::<f64>() / block.len() as f64;
        mu.push(mean);
        alpha_blocks.push(block);
    }
    mu.push(0.0);

    let gamma_vals: Vec<f64> = gamma.iter().map(|&i| eigvals_s[i]).collect();
    let mut gamma_blocks = Vec::new();
    let mut nu = vec![0.0];
    for r in cluster_eigenvalues(&gamma_vals) {
        let block: Vec<usize> = gamma[r.clone()].to_vec();
        let mean = block.iter().map(|&i| eigvals_s[i]).sum::<f64>() / block.len() as f64;
        nu.push(mean);
        gamma_blocks.push(block);
    }

    let part = IndexPartition { alpha, beta, gamma, alpha_blocks, gamma_blocks, mu, nu };
    part.validate()?;
    Ok(part)
}

/// Classifies a pair of the graph of the PSD normal cone: simultaneous
/// eigendecomposition, sign checks, complementarity check, zero snapping and
/// index partition.
pub fn classify(x: &SymMatrix, s: &SymMatrix, tol: f64) -> Result<SpectralPair> {
    let pd = simultaneous_eigen(x, s, tol)?;
    let scale_x = pd.eigvals_x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let scale_s = pd.eigvals_s.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let ztol_x = GROUP_TOL * (1.0 + scale_x);
    let ztol_s = GROUP_TOL * (1.0 + scale_s);

    let min_x = pd.eigvals_x.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_x < -PAIR_SIGN_TOL * (1.0 + scale_x) {
        return Err(Error::NotPsd(min_x));
    }
    let max_s = pd.eigvals_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_s > PAIR_SIGN_TOL * (1.0 + scale_s) {
        return Err(Error::NotComplementary(format!(
            "S has a positive eigenvalue {max_s:.3e}"
        )));
    }

    let eigvals_x = snap(&pd.eigvals_x, ztol_x);
    let eigvals_s = snap(&pd.eigvals_s, ztol_s);

    let pairing: f64 = eigvals_x.iter().zip(&eigvals_s).map(|(a, b)| a * b).sum();
    if pairing.abs() > COMPLEMENTARITY_TOL * (1.0 + x.norm_fro() * s.norm_fro()) {
        return Err(Error::NotComplementary(format!("<X, S> = {pairing:.3e}")));
    }
    for i in 0..eigvals_x.len() {
        if eigvals_x[i] > 0.0 && eigvals_s[i] < 0.0 {
            return Err(Error::NotComplementary(format!(
                "index {i} carries both a positive X eigenvalue and a negative S eigenvalue"
            )));
        }
    }

    let partition = build_partition(&eigvals_x, &eigvals_s)?;
    Ok(SpectralPair {
        x: x.clone(),
        s: s.clone(),
        frame: pd.frame,
        eigvals_x,
        eigvals_s,
        partition,
    })
}

/// Classifies a PSD point alone, pairing it with the zero multiplier.
pub fn classify_point(x: &SymMatrix, tol: f64) -> Result<SpectralPair> {
    classify(x, &SymMatrix::zeros(x.dim()), tol)
}

fn psd_violation(block: &SymMatrix) -> Result<f64> {
    if block.dim() == 0 {
        return Ok(0.0);
    }
    let d = sym_eigen(block, EIGEN_TOL)?;
    Ok(d.eigvals.iter().map(|&l| (-l).max(0.0)).sum())
}

fn nsd_violation(block: &SymMatrix) -> Result<f64> {
    if block.dim() == 0 {
        return Ok(0.0);
    }
    let d = sym_eigen(block, EIGEN_TOL)?;
    Ok(d.eigvals.iter().map(|&l| l.max(0.0)).sum())
}

fn sub_block(w: &SymMatrix, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| w.get(rows[i], cols[j]))
}

fn sym_block(w: &SymMatrix, idx: &[usize]) -> SymMatrix {
    SymMatrix::from_fn(idx.len(), |i, j| w.get(idx[i], idx[j]))
}

/// Distance-like residual of `W` against the tangent, normal or critical
/// cone at the pair. Zero (up to the caller's tolerance) exactly at members:
/// the sum of the negative/positive eigenvalue magnitudes of sign-constrained
/// blocks plus the Frobenius norms of blocks required to vanish.
pub fn cone_residual(kind: ConeKind, pair: &SpectralPair, w: &SymMatrix) -> Result<f64> {
    if w.dim() != pair.x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "direction order {} vs pair order {}",
            w.dim(),
            pair.x.dim()
        )));
    }
    let wt = pair.into_frame(w);
    let part = &pair.partition;
    let kernel = part.kernel();
    match kind {
        ConeKind::Tangent => psd_violation(&sym_block(&wt, &kernel)),
        ConeKind::Normal => {
            let sign = nsd_violation(&sym_block(&wt, &kernel))?;
            let all: Vec<usize> = (0..w.dim()).collect();
            let cross = sub_block(&wt, &part.alpha, &all).norm_fro();
            Ok(sign + cross)
        }
        ConeKind::Critical => {
            let sign = psd_violation(&sym_block(&wt, &part.beta))?;
            let bg = sub_block(&wt, &part.beta, &part.gamma).norm_fro();
            let gg = sym_block(&wt, &part.gamma).norm_fro();
            Ok(sign + bg + gg)
        }
    }
}

/// Support-term value of the second-order tangent set at the pair in a
/// critical direction: `2 <S, W X^+ W>`, equivalently
/// `2 sum_{i in alpha, j in gamma} ls_j / lx_i * Wt_ij^2`. The two
/// evaluations are cross-checked and the result is never positive.
pub fn second_tangent_support(pair: &SpectralPair, w: &SymMatrix) -> Result<f64> {
    let crit = cone_residual(ConeKind::Critical, pair, w)?;
    if crit > CRITICAL_TOL * (1.0 + w.norm_max()) {
        return Err(Error::NotCritical(crit));
    }

    let xp = pseudo_inverse(&pair.x, RANK_TOL)?;
    let wxw_mat = w.to_mat().mul(&xp.to_mat()).mul(&w.to_mat());
    let wxw = SymMatrix::from_fn(w.dim(), |i, j| 0.5 * (wxw_mat.get(i, j) + wxw_mat.get(j, i)));
    let closed = 2.0 * pair.s.inner(&wxw);

    let wt = pair.into_frame(w);
    let mut eig_form = 0.0;
    for &i in &pair.partition.alpha {
        for &j in &pair.partition.gamma {
            let wij = wt.get(i, j);
            eig_form += pair.eigvals_s[j] / pair.eigvals_x[i] * wij * wij;
        }
    }
    eig_form *= 2.0;

    let agree_tol = 1e-8 * (1.0 + closed.abs().max(eig_form.abs()));
    if (closed - eig_form).abs() > agree_tol {
        return Err(Error::NumericalFailure {
            context: "second-order support cross-check".into(),
            residual: (closed - eig_form).abs(),
        });
    }
    Ok(eig_form)
}

/// Scaled symmetric unit matrices: `E_ii`, and `(E_ij + E_ji)/sqrt(2)` for
/// `i < j`. Their coordinate vectors form the standard orthonormal basis.
pub fn sym_unit(n: usize, i: usize, j: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(n);
    if i == j {
        m.set(i, i, 1.0);
    } else {
        m.set(i, j, 1.0 / SQRT2);
    }
    m
}

fn kernel_indices_of(d: &SpectralDecomposition) -> Vec<usize> {
    let scale = d.eigvals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let ztol = GROUP_TOL * (1.0 + scale);
    (0..d.eigvals.len()).filter(|&i| d.eigvals[i].abs() <= ztol).collect()
}

/// Orthonormal basis, in scaled coordinates, of the span of the normal cone
/// at a PSD matrix: all symmetric matrices supported on the kernel of `X`.
/// Its dimension is `k(k+1)/2` for `k = dim ker X`.
pub fn span_normal_basis(x: &SymMatrix) -> Result<SubspaceBasis> {
    let d = sym_eigen(x, EIGEN_TOL)?;
    if d.eigvals.last().copied().unwrap_or(0.0) < -PAIR_SIGN_TOL * (1.0 + x.norm_max()) {
        return Err(Error::NotPsd(*d.eigvals.last().unwrap()));
    }
    let kernel = kernel_indices_of(&d);
    let pk = d.frame.select_cols(&kernel);
    let mut basis = SubspaceBasis::zero(sym_dim(x.dim()));
    for j in 0..kernel.len() {
        for i in 0..=j {
            let unit = sym_unit(kernel.len(), i, j);
            let lifted = pk.congruence_rev(&unit);
            basis.absorb(&lifted.to_svec());
        }
    }
    Ok(basis)
}

/// Orthonormal basis, in scaled coordinates, of the lineality space of the
/// tangent cone at a PSD matrix: symmetric matrices whose kernel-by-kernel
/// block vanishes. Its dimension is `r(r+1)/2 + r k` for `r = rank X`.
pub fn lin_tangent_basis(x: &SymMatrix) -> Result<SubspaceBasis> {
    let d = sym_eigen(x, EIGEN_TOL)?;
    if d.eigvals.last().copied().unwrap_or(0.0) < -PAIR_SIGN_TOL * (1.0 + x.norm_max()) {
        return Err(Error::NotPsd(*d.eigvals.last().unwrap()));
    }
    let kernel = kernel_indices_of(&d);
    let n = x.dim();
    let is_kernel = {
        let mut flags = vec![false; n];
        for &i in &kernel {
            flags[i] = true;
        }
        flags
    };
    let mut basis = SubspaceBasis::zero(sym_dim(n));
    for j in 0..n {
        for i in 0..=j {
            if is_kernel[i] && is_kernel[j] {
                continue;
            }
            let unit = sym_unit(n, i, j);
            let lifted = d.frame.congruence_rev(&unit);
            basis.absorb(&lifted.to_svec());
        }
    }
    Ok(basis)
}
