//! Problem model: quadratic objective, affine equalities and an affine or
//! quadratic matrix constraint mapping into the PSD cone, plus loaders for
//! the native JSON format and the SDPA sparse format.
//!
//! The decision variable lives in `R^d`. Primal-form inputs, whose variable
//! is itself a symmetric matrix, are embedded through scaled coordinates at
//! load time; files always store raw matrices.

mod native;
mod sdpa;

pub use native::{load_native, load_native_str, write_native};
pub use sdpa::{load_sdpa, load_sdpa_str};

use crate::error::{Error, Result};
use crate::symmat::{norm2, sym_dim, sym_eigen, SymMatrix, EIGEN_TOL};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Pivot tolerance of the equality-row rank reduction.
pub const ROW_PIVOT_TOL: f64 = 1e-10;
/// Largest eigenvalue tolerated on the curvature of a matrix-concave map.
pub const MINUS_CONVEXITY_TOL: f64 = 1e-9;

/// `phi(x) = x'Qx/2 + c'x + c0` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub qmat: SymMatrix,
    pub cvec: Vec<f64>,
    pub c0: f64,
}

impl Quadratic {
    pub fn linear(cvec: Vec<f64>) -> Self {
        let d = cvec.len();
        Quadratic { qmat: SymMatrix::zeros(d), cvec, c0: 0.0 }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.qmat.quad_form(x) + crate::symmat::dot(&self.cvec, x) + self.c0
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.qmat.matvec(x).iter().zip(&self.cvec).map(|(a, b)| a + b).collect()
    }
}

/// Equality block `A x = b`, stored row-wise. After preprocessing the rows
/// are linearly independent.
#[derive(Debug, Clone, Default)]
pub struct EqConstraints {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl EqConstraints {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| crate::symmat::dot(row, x) - b)
            .collect();
        norm2(&r)
    }

    /// Adjoint `A' y`.
    pub fn adjoint(&self, y: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (row, &yi) in self.rows.iter().zip(y) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
        out
    }
}

/// Constraint mapping `g(x) = G0 + sum_i x_i G_i + (1/2) sum_ij x_i x_j H_ij`
/// into the symmetric matrices of order `n`. `quad = None` means affine.
#[derive(Debug, Clone)]
pub struct MatrixMapping {
    pub n: usize,
    pub g0: SymMatrix,
    pub lin: Vec<SymMatrix>,
    pub quad: Option<Vec<Vec<SymMatrix>>>,
}

impl MatrixMapping {
    pub fn affine(g0: SymMatrix, lin: Vec<SymMatrix>) -> Self {
        let n = g0.dim();
        MatrixMapping { n, g0, lin, quad: None }
    }

    pub fn var_dim(&self) -> usize {
        self.lin.len()
    }

    pub fn is_affine(&self) -> bool {
        self.quad.is_none()
    }

    pub fn eval(&self, x: &[f64]) -> SymMatrix {
        let mut m = self.g0.clone();
        for (gi, &xi) in self.lin.iter().zip(x) {
            m.axpy(xi, gi);
        }
        if let Some(h) = &self.quad {
            for (i, hi) in h.iter().enumerate() {
                for (j, hij) in hi.iter().enumerate() {
                    m.axpy(0.5 * x[i] * x[j], hij);
                }
            }
        }
        m
    }

    /// The matrices `G_j(x) = G_j + sum_i x_i H_ij` whose span is the range
    /// of the derivative at `x`.
    pub fn jac_matrices(&self, x: &[f64]) -> Vec<SymMatrix> {
        let mut out = self.lin.clone();
        if let Some(h) = &self.quad {
            for (j, oj) in out.iter_mut().enumerate() {
                for (i, &xi) in x.iter().enumerate() {
                    oj.axpy(xi, &h[i][j]);
                }
            }
        }
        out
    }

    /// Directional derivative `g'(x) w`.
    pub fn deriv(&self, x: &[f64], w: &[f64]) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.n);
        for (gj, &wj) in self.jac_matrices(x).iter().zip(w) {
            m.axpy(wj, gj);
        }
        m
    }

    /// Adjoint of the derivative: the vector with entries `<G_j(x), S>`.
    pub fn adjoint(&self, x: &[f64], s: &SymMatrix) -> Vec<f64> {
        self.jac_matrices(x).iter().map(|gj| gj.inner(s)).collect()
    }

    /// Second derivative `D^2 g(x)(w, w)`; zero for affine maps.
    pub fn second(&self, w: &[f64]) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.n);
        if let Some(h) = &self.quad {
            for (i, hi) in h.iter().enumerate() {
                for (j, hij) in hi.iter().enumerate() {
                    m.axpy(w[i] * w[j], hij);
                }
            }
        }
        m
    }
}

/// How the instance was posed in its source, before any embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceForm {
    Primal,
    Lmi,
    Composite,
}

/// A semidefinite instance `min phi(x) s.t. Ax = b, g(x) PSD`.
#[derive(Debug, Clone)]
pub struct NsdpInstance {
    pub name: String,
    pub form: InstanceForm,
    pub objective: Quadratic,
    pub eq: EqConstraints,
    pub gmap: MatrixMapping,
    /// Indices of source equality rows dropped as dependent.
    pub dropped_rows: Vec<usize>,
}

impl NsdpInstance {
    /// Assembles and validates an instance. Dependent equality rows are
    /// dropped (recorded in `dropped_rows`); a dependent row whose right-hand
    /// side contradicts the kept ones is an error.
    pub fn new(
        name: String,
        form: InstanceForm,
        objective: Quadratic,
        eq: EqConstraints,
        gmap: MatrixMapping,
    ) -> Result<Self> {
        let d = objective.cvec.len();
        if objective.qmat.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "objective Q has order {} for variable dimension {d}",
                objective.qmat.dim()
            )));
        }
        if gmap.var_dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "constraint mapping has {} coefficient matrices for variable dimension {d}",
                gmap.var_dim()
            )));
        }
        if gmap.g0.dim() != gmap.n || gmap.lin.iter().any(|g| g.dim() != gmap.n) {
            return Err(Error::DimensionMismatch("constraint matrices of mixed order".into()));
        }
        if let Some(h) = &gmap.quad {
            if h.len() != d || h.iter().any(|r| r.len() != d) {
                return Err(Error::DimensionMismatch("quadratic tensor is not d x d".into()));
            }
            for i in 0..d {
                for j in 0..d {
                    if h[i][j].dim() != gmap.n {
                        return Err(Error::DimensionMismatch(
                            "quadratic tensor block of wrong order".into(),
                        ));
                    }
                    if h[i][j].sub(&h[j][i]).norm_max() > 1e-12 * (1.0 + h[i][j].norm_max()) {
                        return Err(Error::InvalidInstance(format!(
                            "quadratic tensor is not symmetric in its indices at ({i},{j})"
                        )));
                    }
                }
            }
        }
        if eq.rows.len() != eq.rhs.len() {
            return Err(Error::DimensionMismatch("equality rows and rhs lengths differ".into()));
        }
        if eq.rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("equality row of wrong length".into()));
        }

        let (eq, dropped_rows) = reduce_rows(eq)?;
        let inst = NsdpInstance { name, form, objective, eq, gmap, dropped_rows };
        inst.check_minus_convexity(64, 0)?.into_result()?;
        Ok(inst)
    }

    pub fn var_dim(&self) -> usize {
        self.objective.cvec.len()
    }

    pub fn matrix_order(&self) -> usize {
        self.gmap.n
    }

    /// Verifies matrix concavity of the constraint map on random directions:
    /// the curvature form must be negative semidefinite. Affine maps pass
    /// trivially.
    pub fn check_minus_convexity(&self, samples: usize, seed: u64) -> Result<ConcavityReport> {
        if self.gmap.is_affine() {
            return Ok(ConcavityReport { passed: true, witness: None });
        }
        let d = self.var_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let mut w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nw = norm2(&w);
            if nw == 0.0 {
                continue;
            }
            w.iter_mut().for_each(|v| *v /= nw);
            let curv = self.gmap.second(&w);
            let top = sym_eigen(&curv, EIGEN_TOL)?.eigvals[0];
            if top > MINUS_CONVEXITY_TOL * (1.0 + curv.norm_max()) {
                return Ok(ConcavityReport { passed: false, witness: Some((w, top)) });
            }
        }
        Ok(ConcavityReport { passed: true, witness: None })
    }

    /// Point diagnostics: constraint value, residuals, gradient and the
    /// candidate normal direction `v* = -grad phi(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<PointReport> {
        if x.len() != self.var_dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has length {} for variable dimension {}",
                x.len(),
                self.var_dim()
            )));
        }
        let xval = self.gmap.eval(x);
        let min_eig = sym_eigen(&xval, EIGEN_TOL)?.eigvals.last().copied().unwrap_or(0.0);
        let grad = self.objective.gradient(x);
        Ok(PointReport {
            x: x.to_vec(),
            xval,
            eq_residual: self.eq.residual(x),
            psd_residual: (-min_eig).max(0.0),
            vstar: grad.iter().map(|g| -g).collect(),
            grad,
        })
    }

    /// Whether `x` satisfies both constraint families within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> Result<bool> {
        let rep = self.evaluate(x)?;
        Ok(rep.eq_residual <= tol && rep.psd_residual <= tol)
    }
}

/// Outcome of the matrix-concavity sampling check.
#[derive(Debug, Clone)]
pub struct ConcavityReport {
    pub passed: bool,
    /// Failing direction and the offending top curvature eigenvalue.
    pub witness: Option<(Vec<f64>, f64)>,
}

impl ConcavityReport {
    pub fn into_result(self) -> Result<()> {
        if self.passed {
            Ok(())
        } else {
            let (_, top) = self.witness.as_ref().unwrap();
            Err(Error::InvalidInstance(format!(
                "constraint map is not matrix-concave: curvature eigenvalue {top:.3e}"
            )))
        }
    }
}

/// Feasibility and first-order data of a candidate point.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub x: Vec<f64>,
    pub xval: SymMatrix,
    pub eq_residual: f64,
    pub psd_residual: f64,
    pub grad: Vec<f64>,
    pub vstar: Vec<f64>,
}

/// Gram-Schmidt row reduction: drops rows dependent on earlier ones,
/// verifying right-hand-side consistency before dropping.
fn reduce_rows(eq: EqConstraints) -> Result<(EqConstraints, Vec<usize>)> {
    let mut kept = EqConstraints::default();
    let mut ortho: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut dropped = Vec::new();
    for (idx, (row, &rhs)) in eq.rows.iter().zip(&eq.rhs).enumerate() {
        let scale = norm2(row);
        let mut r = row.clone();
        let mut t = rhs;
        for _ in 0..2 {
            for (q, tq) in &ortho {
                let dcoef = crate::symmat::dot(&r, q);
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= dcoef * qi;
                }
                t -= dcoef * tq;
            }
        }
        let res = norm2(&r);
        if res <= ROW_PIVOT_TOL * (1.0 + scale) {
            if t.abs() > 1e-8 * (1.0 + rhs.abs()) {
                return Err(Error::InvalidInstance(format!(
                    "equality row {idx} is dependent but its right-hand side disagrees by {t:.3e}"
                )));
            }
            dropped.push(idx);
            continue;
        }
        r.iter_mut().for_each(|v| *v /= res);
        ortho.push((r, t / res));
        kept.rows.push(row.clone());
        kept.rhs.push(rhs);
    }
    Ok((kept, dropped))
}

/// Scaled-coordinate basis of the symmetric matrices of order `n`, in the
/// coordinate order of `to_svec`. Used for embedding matrix-variable
/// problems.
pub fn primal_basis(n: usize) -> Vec<SymMatrix> {
    let mut out = Vec::with_capacity(sym_dim(n));
    for j in 0..n {
        for i in 0..=j {
            out.push(crate::psdcone::sym_unit(n, i, j));
        }
    }
    out
}

/// Builds a primal-form instance `min <C, X> s.t. <A_l, X> = b_l, X PSD`
/// through the scaled-coordinate embedding.
pub fn primal_instance(
    name: &str,
    cmat: &SymMatrix,
    amats: &[SymMatrix],
    rhs: &[f64],
) -> Result<NsdpInstance> {
    let n = cmat.dim();
    for (l, a) in amats.iter().enumerate() {
        if a.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix {l} has order {} for variable order {n}",
                a.dim()
            )));
        }
    }
    let eq = EqConstraints {
        rows: amats.iter().map(|a| a.to_svec()).collect(),
        rhs: rhs.to_vec(),
    };
    NsdpInstance::new(
        name.to_string(),
        InstanceForm::Primal,
        Quadratic::linear(cmat.to_svec()),
        eq,
        MatrixMapping::affine(SymMatrix::zeros(n), primal_basis(n)),
    )
}

/// Builds a primal-form instance with a quadratic objective
/// `min x'Qx/2 + c'x` over `X PSD` (plus optional trace constraints), where
/// `x` is the scaled-coordinate vector of `X`.
pub fn primal_quadratic_instance(
    name: &str,
    n: usize,
    qmat: SymMatrix,
    cvec: Vec<f64>,
    amats: &[SymMatrix],
    rhs: &[f64],
) -> Result<NsdpInstance> {
    let eq = EqConstraints {
        rows: amats.iter().map(|a| a.to_svec()).collect(),
        rhs: rhs.to_vec(),
    };
    NsdpInstance::new(
        name.to_string(),
        InstanceForm::Primal,
        Quadratic { qmat, cvec, c0: 0.0 },
        eq,
        MatrixMapping::affine(SymMatrix::zeros(n), primal_basis(n)),
    )
}
