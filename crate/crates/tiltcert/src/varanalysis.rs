//! Multiplier sets at a candidate point and the variational quantities
//! built from them: minimum-rank and uniqueness analysis of the matrix
//! multiplier, second subderivatives of the feasible-set indicator, and the
//! regularity report (Slater search, surjectivity-failure witnesses, and
//! the range/injectivity conditions used by the necessary-side theorems).
//!
//! The multiplier set at `(x, v)` consists of pairs `(y, S)` with
//! `A'y + g'(x)*S = v` and `S` in the normal cone to the PSD cone at
//! `g(x)`. In the eigenframe of `g(x)` the normal cone is exactly
//! `S = -P0 Z P0'` with `Z` PSD on the kernel, so the whole set becomes an
//! affine-PSD problem in `(y, Z)` that the projection solvers consume
//! directly.

use crate::conicsolve::{
    max_norm_on_section, maximize_linear, solve_feasibility, AffinePsdProblem, SolveOutcome,
    FEAS_TOL, MAX_SWEEPS, NORM_RESTARTS,
};
use crate::error::{Error, Result};
use crate::problem::NsdpInstance;
use crate::psdcone::{classify_point, cone_residual, lin_tangent_basis, span_normal_basis, sym_unit, ConeKind, SpectralPair};
use crate::symmat::{
    dot, kernel_of_rows, norm2, pseudo_inverse, sym_dim, sym_eigen, sym_rank_floored, Mat,
    SubspaceBasis, SymMatrix, EIGEN_TOL, RANK_TOL,
};
use crate::{derive_seed, ExtReal, Tolerances};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Spread below which probed functionals treat the S-component as a point.
pub const SPREAD_UNIQUE_TOL: f64 = 1e-7;
/// Spread above which two distinct multipliers are reported.
pub const SPREAD_DISTINCT_TOL: f64 = 1e-5;
/// Largest kernel order the exact rank enumeration will attempt.
pub const EXACT_RANK_MAX_ORDER: usize = 6;

/// A verified element of the multiplier set.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub y: Vec<f64>,
    pub smat: SymMatrix,
    /// Scaled coordinates of the kernel-block factor `Z` (`S = -P0 Z P0'`).
    pub z: Vec<f64>,
}

/// The multiplier set at a base point, in solvable form.
#[derive(Debug, Clone)]
pub struct MultiplierSystem {
    pub x: Vec<f64>,
    pub vstar: Vec<f64>,
    /// Constraint value `g(x)` and its spectral data.
    pub xpair: SpectralPair,
    /// Eigenvectors of `g(x)` spanning its kernel (order of `Z`).
    pub kernel_frame: Mat,
    pub kernel_order: usize,
    pub eq_count: usize,
    /// Partial derivative matrices of the constraint map at `x`.
    pub jac: Vec<SymMatrix>,
    /// Variables `(y, Z)`: `free_dim` equals the number of equality rows of
    /// the instance, one PSD block of the kernel order.
    pub problem: AffinePsdProblem,
}

impl MultiplierSystem {
    /// Splits a solver point into a multiplier and rebuilds `S`.
    pub fn multiplier_from(&self, u: &[f64]) -> Multiplier {
        let m = self.eq_count;
        let y = u[..m].to_vec();
        let z = u[m..].to_vec();
        let smat = self.smat_from_z(&z);
        Multiplier { y, smat, z }
    }

    pub fn smat_from_z(&self, z: &[f64]) -> SymMatrix {
        let n = self.xpair.x.dim();
        if self.kernel_order == 0 {
            return SymMatrix::zeros(n);
        }
        let zmat = SymMatrix::from_svec(z).expect("kernel block layout");
        self.kernel_frame.congruence_rev(&zmat).scale(-1.0)
    }

    /// Residuals of the defining relations at a multiplier: membership of
    /// `S` in the normal cone at `g(x)`, and the equality defect.
    pub fn residuals(&self, mult: &Multiplier) -> Result<(f64, f64)> {
        let normal = cone_residual(ConeKind::Normal, &self.xpair, &mult.smat)?;
        let mut eq = Vec::with_capacity(self.problem.eq_rows.len());
        for (row, &b) in self.problem.eq_rows.iter().zip(&self.problem.eq_rhs) {
            let mut u = mult.y.clone();
            u.extend_from_slice(&mult.z);
            eq.push(dot(row, &u) - b);
        }
        Ok((normal, norm2(&eq)))
    }

    /// Any element of the set, or `None` when the set is certified empty.
    pub fn any_multiplier(&self, feas_tol: f64) -> Result<Option<Multiplier>> {
        match solve_feasibility(&self.problem, feas_tol, MAX_SWEEPS)? {
            SolveOutcome::Feasible { point } => Ok(Some(self.multiplier_from(&point))),
            SolveOutcome::Infeasible { .. } => Ok(None),
            _ => Err(Error::NumericalFailure {
                context: "multiplier feasibility undecided within the sweep budget".into(),
                residual: f64::NAN,
            }),
        }
    }

    /// The linear functional on `(y, Z)` computing `<S, T>`.
    pub fn objective_for_smat(&self, t: &SymMatrix) -> Vec<f64> {
        let mut obj = vec![0.0; self.eq_count];
        if self.kernel_order > 0 {
            let tk = self.kernel_frame.congruence(t);
            obj.extend(tk.to_svec().iter().map(|v| -v));
        }
        obj
    }
}

/// Builds the multiplier set at `(x, vstar)` in eigenframe coordinates.
pub fn multiplier_system(
    inst: &NsdpInstance,
    x: &[f64],
    vstar: &[f64],
    tols: &Tolerances,
) -> Result<MultiplierSystem> {
    let report = inst.evaluate(x)?;
    let scale = 1.0 + norm2(x);
    if report.eq_residual > tols.feas * scale || report.psd_residual > tols.feas * scale {
        return Err(Error::InfeasiblePoint(format!(
            "equality residual {:.3e}, cone residual {:.3e}",
            report.eq_residual, report.psd_residual
        )));
    }
    let xmat = inst.gmap.eval(x);
    let xpair = classify_point(&xmat, EIGEN_TOL)?;
    let kernel_frame = xpair.kernel_frame();
    let k = kernel_frame.cols;
    let jac = inst.gmap.jac_matrices(x);
    let m = inst.eq.len();
    let d = inst.var_dim();

    let zdim = sym_dim(k);
    let mut eq_rows = Vec::with_capacity(d);
    for j in 0..d {
        let mut row = Vec::with_capacity(m + zdim);
        for i in 0..m {
            row.push(inst.eq.rows[i][j]);
        }
        if k > 0 {
            let gk = kernel_frame.congruence(&jac[j]);
            row.extend(gk.to_svec().iter().map(|v| -v));
        }
        eq_rows.push(row);
    }
    let problem = AffinePsdProblem {
        free_dim: m,
        psd_blocks: if k > 0 { vec![k] } else { vec![] },
        eq_rows,
        eq_rhs: vstar.to_vec(),
        objective: None,
        ball_radius: None,
    };
    Ok(MultiplierSystem {
        x: x.to_vec(),
        vstar: vstar.to_vec(),
        xpair,
        kernel_frame,
        kernel_order: k,
        eq_count: m,
        jac,
        problem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    Exact,
    TraceHeuristic,
}

/// Outcome of the rank minimisation over the multiplier set.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub mode: RankMode,
    pub rank: usize,
    pub multiplier: Multiplier,
    /// Kernel coordinates carrying the found factor (exact mode).
    pub pattern: Option<Vec<usize>>,
    /// Minimised trace of the factor (heuristic mode).
    pub trace_value: Option<f64>,
}

/// Rank of a multiplier factor, with the cutoff floored at the magnitude of
/// the stationarity data so a factor made entirely of solver round-off
/// counts as zero.
fn factor_rank(sys: &MultiplierSystem, smat: &SymMatrix) -> Result<usize> {
    let unit = sys
        .problem
        .eq_rhs
        .iter()
        .fold(1.0f64, |a, &b| a.max(b.abs()));
    sym_rank_floored(smat, RANK_TOL, unit)
}

/// Minimises the rank of the matrix multiplier over the set. Exact mode
/// enumerates principal support patterns of the kernel-block factor in
/// increasing size, forcing the complementary entries to zero and testing
/// feasibility; it is exhaustive over patterns, which matches the true
/// minimum whenever the solution family is aligned with the kernel
/// coordinates (diagonal families in particular). Heuristic mode minimises
/// the trace of the factor, a convex surrogate for rank.
pub fn min_rank_multiplier(sys: &MultiplierSystem, mode: RankMode) -> Result<RankReport> {
    let k = sys.kernel_order;
    match mode {
        RankMode::Exact => {
            if k > EXACT_RANK_MAX_ORDER {
                return Err(Error::BudgetExceeded(format!(
                    "exact rank enumeration limited to kernel order {EXACT_RANK_MAX_ORDER}, got {k}"
                )));
            }
            for r in 0..=k {
                let mut masks: Vec<u32> = (0u32..1 << k)
                    .filter(|m| m.count_ones() as usize == r)
                    .collect();
                masks.sort_unstable();
                for mask in masks {
                    let support: Vec<usize> =
                        (0..k).filter(|i| mask & (1 << i) != 0).collect();
                    let mut p = sys.problem.clone();
                    for j in 0..k {
                        for i in 0..=j {
                            if support.contains(&i) && support.contains(&j) {
                                continue;
                            }
                            let mut row = vec![0.0; p.dim()];
                            row[sys.eq_count + j * (j + 1) / 2 + i] = 1.0;
                            p.eq_rows.push(row);
                            p.eq_rhs.push(0.0);
                        }
                    }
                    match solve_feasibility(&p, FEAS_TOL, MAX_SWEEPS)? {
                        SolveOutcome::Feasible { point } => {
                            let mult = sys.multiplier_from(&point);
                            let rank = factor_rank(sys, &mult.smat)?;
                            return Ok(RankReport {
                                mode,
                                rank,
                                multiplier: mult,
                                pattern: Some(support),
                                trace_value: None,
                            });
                        }
                        SolveOutcome::Infeasible { .. } => continue,
                        _ => {
                            return Err(Error::NumericalFailure {
                                context: format!(
                                    "support pattern {support:?} undecided in rank enumeration"
                                ),
                                residual: f64::NAN,
                            })
                        }
                    }
                }
            }
            Err(Error::InvalidInstance("empty multiplier set in rank search".into()))
        }
        RankMode::TraceHeuristic => {
            let mut p = sys.problem.clone();
            let mut obj = vec![0.0; p.dim()];
            for j in 0..k {
                obj[sys.eq_count + j * (j + 1) / 2 + j] = -1.0;
            }
            p.objective = Some(obj);
            match maximize_linear(&p, 1e-9, FEAS_TOL, MAX_SWEEPS)? {
                SolveOutcome::Optimal { point, value } => {
                    let mult = sys.multiplier_from(&point);
                    let rank = factor_rank(sys, &mult.smat)?;
                    Ok(RankReport {
                        mode,
                        rank,
                        multiplier: mult,
                        pattern: None,
                        trace_value: Some(-value),
                    })
                }
                SolveOutcome::Infeasible { .. } => {
                    Err(Error::InvalidInstance("empty multiplier set in rank search".into()))
                }
                _ => Err(Error::NumericalFailure {
                    context: "trace minimisation undecided".into(),
                    residual: f64::NAN,
                }),
            }
        }
    }
}

/// Verdict on whether the S-component of the multiplier set is a point.
#[derive(Debug, Clone)]
pub enum SUniqueness {
    UniqueS { multiplier: Multiplier, max_spread: f64 },
    NotUnique { first: Multiplier, second: Multiplier, spread: f64 },
    Inconclusive { max_spread: f64 },
}

/// Probes random linear functionals of the kernel-block factor: a spread
/// above the distinctness tolerance yields two witnesses, all spreads below
/// the uniqueness tolerance accept the component as a point.
pub fn multiplier_s_unique(
    sys: &MultiplierSystem,
    probes: usize,
    seed: u64,
) -> Result<SUniqueness> {
    let base = sys
        .any_multiplier(FEAS_TOL)?
        .ok_or_else(|| Error::InvalidInstance("empty multiplier set in uniqueness probe".into()))?;
    if sys.kernel_order == 0 {
        return Ok(SUniqueness::UniqueS { multiplier: base, max_spread: 0.0 });
    }
    let zdim = sym_dim(sys.kernel_order);
    let mut max_spread = 0.0f64;
    let mut undecided = false;

    for probe in 0..probes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, probe as u64));
        let mut l = vec![0.0; sys.problem.dim()];
        let mut nrm = 0.0f64;
        for slot in l[sys.eq_count..sys.eq_count + zdim].iter_mut() {
            *slot = rng.gen_range(-1.0..1.0);
            nrm += *slot * *slot;
        }
        let nrm = nrm.sqrt().max(1e-12);
        l[sys.eq_count..].iter_mut().for_each(|v| *v /= nrm);

        let mut extremes: Vec<Multiplier> = Vec::new();
        for sign in [1.0, -1.0] {
            let mut p = sys.problem.clone();
            p.objective = Some(l.iter().map(|v| sign * v).collect());
            match maximize_linear(&p, 1e-9, FEAS_TOL, MAX_SWEEPS)? {
                SolveOutcome::Optimal { point, .. } => {
                    extremes.push(sys.multiplier_from(&point));
                }
                SolveOutcome::Unbounded { direction } => {
                    // Walk far enough along the recession ray to witness a
                    // clearly distinct factor.
                    let mut u: Vec<f64> = Vec::with_capacity(sys.problem.dim());
                    u.extend_from_slice(&base.y);
                    u.extend_from_slice(&base.z);
                    let step = 1.0f64.max(SPREAD_DISTINCT_TOL * 10.0);
                    for (ui, di) in u.iter_mut().zip(&direction) {
                        *ui += step * di;
                    }
                    let second = sys.multiplier_from(&u);
                    let spread = second.smat.sub(&base.smat).norm_fro();
                    if spread >= SPREAD_DISTINCT_TOL {
                        return Ok(SUniqueness::NotUnique {
                            first: base,
                            second,
                            spread,
                        });
                    }
                    undecided = true;
                    extremes.clear();
                    break;
                }
                SolveOutcome::Infeasible { .. } => {
                    return Err(Error::InvalidInstance(
                        "multiplier set became empty under a probe".into(),
                    ))
                }
                SolveOutcome::IterationLimit | SolveOutcome::Feasible { .. } => {
                    undecided = true;
                    extremes.clear();
                    break;
                }
            }
        }
        if extremes.len() == 2 {
            let spread = extremes[0].smat.sub(&extremes[1].smat).norm_fro();
            max_spread = max_spread.max(spread);
            if spread >= SPREAD_DISTINCT_TOL {
                return Ok(SUniqueness::NotUnique {
                    first: extremes.swap_remove(0),
                    second: extremes.pop().unwrap(),
                    spread,
                });
            }
        }
    }
    if undecided || max_spread > SPREAD_UNIQUE_TOL {
        Ok(SUniqueness::Inconclusive { max_spread })
    } else {
        Ok(SUniqueness::UniqueS { multiplier: base, max_spread })
    }
}

/// Second subderivative of the equality-set indicator: zero exactly on the
/// kernel of the constraint matrix, infinite elsewhere.
pub fn d2_indicator_affine(
    inst: &NsdpInstance,
    x: &[f64],
    v: &[f64],
    w: &[f64],
    tols: &Tolerances,
) -> Result<ExtReal> {
    let scale = 1.0 + norm2(x);
    if inst.eq.residual(x) > tols.feas * scale {
        return Err(Error::InfeasiblePoint("base point violates the equalities".into()));
    }
    // The normal space of the equality set is the row span; check `v` lies
    // in it by projecting out the rows.
    let mut r = v.to_vec();
    let span = SubspaceBasis::span(inst.var_dim(), &inst.eq.rows);
    let p = span.project(&r);
    for (ri, pi) in r.iter_mut().zip(&p) {
        *ri -= pi;
    }
    if norm2(&r) > tols.feas * (1.0 + norm2(v)) {
        return Err(Error::NotStationary("normal vector outside the row span".into()));
    }
    let aw: Vec<f64> = inst.eq.rows.iter().map(|row| dot(row, w)).collect();
    if norm2(&aw) <= tols.membership * (1.0 + norm2(w)) {
        Ok(ExtReal::Finite(0.0))
    } else {
        Ok(ExtReal::PlusInfinity)
    }
}

/// Value of the feasible-set second subderivative at a direction, with the
/// attaining multiplier when the supremum is attained.
#[derive(Debug, Clone)]
pub struct GammaD2 {
    pub value: ExtReal,
    pub attaining: Option<Multiplier>,
    pub diagnostic: Option<String>,
}

/// Second subderivative of the feasible-set indicator at `(x, v)` in
/// direction `w`: infinite outside the critical cone, otherwise the maximum
/// over multipliers of the curvature term
/// `<S, D2g(w,w) - 2 (g'w) g(x)^+ (g'w)>`.
pub fn d2_indicator_gamma(
    inst: &NsdpInstance,
    x: &[f64],
    v: &[f64],
    w: &[f64],
    tols: &Tolerances,
) -> Result<GammaD2> {
    let sys = multiplier_system(inst, x, v, tols)?;
    if sys.any_multiplier(tols.feas)?.is_none() {
        return Err(Error::NotStationary(
            "the pair is not in the normal-cone graph: empty multiplier set".into(),
        ));
    }

    let wscale = 1.0 + norm2(w);
    let gw = inst.gmap.deriv(x, w);
    let tangent_res = cone_residual(ConeKind::Tangent, &sys.xpair, &gw)?;
    let aw: Vec<f64> = inst.eq.rows.iter().map(|row| dot(row, w)).collect();
    let vw = dot(v, w).abs();
    let mut violations = Vec::new();
    if tangent_res > tols.membership * wscale {
        violations.push(format!("tangent residual {tangent_res:.3e}"));
    }
    if norm2(&aw) > tols.membership * wscale {
        violations.push(format!("equality image norm {:.3e}", norm2(&aw)));
    }
    if vw > tols.membership * wscale * (1.0 + norm2(v)) {
        violations.push(format!("normal-vector pairing {vw:.3e}"));
    }
    if !violations.is_empty() {
        return Ok(GammaD2 {
            value: ExtReal::PlusInfinity,
            attaining: None,
            diagnostic: Some(format!("direction outside the critical cone: {}", violations.join(", "))),
        });
    }

    let xdag = pseudo_inverse(&sys.xpair.x, tols.rank)?;
    let curvature = {
        let gwm = gw.to_mat();
        let prod = gwm.mul(&xdag.to_mat()).mul(&gwm);
        let sandwich = SymMatrix::from_fn(gw.dim(), |i, j| 0.5 * (prod.get(i, j) + prod.get(j, i)));
        inst.gmap.second(w).sub(&sandwich.scale(2.0))
    };
    let mut p = sys.problem.clone();
    p.objective = Some(sys.objective_for_smat(&curvature));
    match maximize_linear(&p, 1e-9, tols.feas, MAX_SWEEPS)? {
        SolveOutcome::Optimal { point, value } => Ok(GammaD2 {
            value: ExtReal::Finite(value),
            attaining: Some(sys.multiplier_from(&point)),
            diagnostic: None,
        }),
        SolveOutcome::Unbounded { .. } => Ok(GammaD2 {
            value: ExtReal::PlusInfinity,
            attaining: None,
            diagnostic: Some(
                "curvature functional unbounded over the multiplier set".into(),
            ),
        }),
        SolveOutcome::Infeasible { .. } => Err(Error::NotStationary(
            "multiplier set empty under the curvature objective".into(),
        )),
        _ => Err(Error::NumericalFailure {
            context: "curvature maximisation undecided".into(),
            residual: f64::NAN,
        }),
    }
}

/// Second subderivative of the full objective-plus-constraints function:
/// the quadratic term of the objective plus the indicator term evaluated at
/// the shifted normal vector `v - grad(objective)`.
pub fn d2_total(
    inst: &NsdpInstance,
    x: &[f64],
    v: &[f64],
    w: &[f64],
    tols: &Tolerances,
) -> Result<GammaD2> {
    let grad = inst.objective.gradient(x);
    let shifted: Vec<f64> = v.iter().zip(&grad).map(|(a, b)| a - b).collect();
    let inner = d2_indicator_gamma(inst, x, &shifted, w, tols)?;
    let quad = inst.objective.qmat.quad_form(w);
    Ok(GammaD2 {
        value: match inner.value {
            ExtReal::Finite(f) => ExtReal::Finite(quad + f),
            ExtReal::PlusInfinity => ExtReal::PlusInfinity,
        },
        attaining: inner.attaining,
        diagnostic: inner.diagnostic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreeValued {
    Holds,
    Fails,
    Inconclusive,
}

/// Result of the interior-point search on the feasible set.
#[derive(Debug, Clone)]
pub struct SlaterReport {
    pub holds: bool,
    pub witness: Option<Vec<f64>>,
    pub best_min_eig: f64,
}

/// Regularity of the constraint system at the point, with the range and
/// injectivity conditions the necessary-side theorems consume.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub slater: SlaterReport,
    /// Largest squared norm found of a pair `(u, H)` with `A'u + g'* H = 0`
    /// and `H` normal at `g(x)`; nonzero pairs witness regularity failure.
    pub imply1_max: f64,
    pub imply1_witness: Option<(Vec<f64>, SymMatrix)>,
    pub metrically_regular: ThreeValued,
    pub m_locally_bounded: ThreeValued,
    /// Span of the normal cone meets the preimage of the equality row span
    /// only at zero (affine constraint maps only).
    pub condition_a: Option<bool>,
    /// The constraint map sends the equality kernel into the tangent-cone
    /// lineality space (affine constraint maps only).
    pub condition_b: Option<bool>,
    /// Span of the critical cone of the pair is contained in the range of
    /// the constraint map (affine constraint maps only).
    pub kstar_in_range: Option<bool>,
    pub b_injective: Option<bool>,
}

/// Supergradient ascent on the smallest eigenvalue of `g` over the equality
/// set; the map is matrix-concave, so the smallest eigenvalue is concave
/// and any positive value certifies an interior feasible point.
fn slater_search(inst: &NsdpInstance, x0: &[f64], margin_rel: f64) -> Result<SlaterReport> {
    let d = inst.var_dim();
    let kernel = kernel_of_rows(d, &inst.eq.rows);
    let min_eig = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let gx = inst.gmap.eval(x);
        let dec = sym_eigen(&gx, EIGEN_TOL)?;
        let lam = *dec.eigvals.last().unwrap_or(&0.0);
        let u = dec.frame.col(gx.dim().saturating_sub(1).min(dec.frame.cols - 1));
        Ok((lam, u))
    };
    if inst.matrix_order() == 0 || d == 0 {
        let (lam, _) = if d == 0 { (f64::INFINITY, vec![]) } else { min_eig(x0)? };
        return Ok(SlaterReport { holds: lam > 0.0, witness: Some(x0.to_vec()), best_min_eig: lam });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x51a7e5);
    let mut best_x = x0.to_vec();
    let mut best_lam = min_eig(x0)?.0;
    for restart in 0..4 {
        let mut x = x0.to_vec();
        if restart > 0 && kernel.dim() > 0 {
            let mut dir = vec![0.0; d];
            for vbasis in &kernel.vecs {
                let c: f64 = rng.gen_range(-0.5..0.5);
                for (di, vi) in dir.iter_mut().zip(vbasis) {
                    *di += c * vi;
                }
            }
            for (xi, di) in x.iter_mut().zip(&dir) {
                *xi += di;
            }
        }
        let (mut lam, mut u) = min_eig(&x)?;
        let mut step = 1.0;
        for _ in 0..200 {
            let jac = inst.gmap.jac_matrices(&x);
            let grad: Vec<f64> = jac
                .iter()
                .map(|gj| {
                    let gu = gj.matvec(&u);
                    dot(&gu, &u)
                })
                .collect();
            let pg = kernel.project(&grad);
            if norm2(&pg) <= 1e-12 * (1.0 + norm2(&grad)) {
                break;
            }
            let mut improved = false;
            for factor in [4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625] {
                let t = step * factor;
                let cand: Vec<f64> = x.iter().zip(&pg).map(|(a, b)| a + t * b).collect();
                let (lc, uc) = min_eig(&cand)?;
                if lc > lam + 1e-14 {
                    x = cand;
                    lam = lc;
                    u = uc;
                    step = (t * 2.0).min(1e6);
                    improved = true;
                    break;
                }
            }
            if !improved {
                step *= 0.125;
                if step < 1e-12 {
                    break;
                }
            }
        }
        if lam > best_lam {
            best_lam = lam;
            best_x = x;
        }
    }
    let gnorm = inst.gmap.eval(&best_x).norm_fro();
    let holds = best_lam >= margin_rel * (1.0 + gnorm);
    Ok(SlaterReport {
        holds,
        witness: holds.then_some(best_x),
        best_min_eig: best_lam,
    })
}

/// Assembles the regularity report at a feasible point with a chosen matrix
/// multiplier.
pub fn regularity_report(
    inst: &NsdpInstance,
    x: &[f64],
    smat: &SymMatrix,
    tols: &Tolerances,
) -> Result<RegularityReport> {
    let report = inst.evaluate(x)?;
    let scale = 1.0 + norm2(x);
    if report.eq_residual > tols.feas * scale || report.psd_residual > tols.feas * scale {
        return Err(Error::InfeasiblePoint("regularity report needs a feasible point".into()));
    }
    let xmat = inst.gmap.eval(x);
    let xpair = classify_point(&xmat, EIGEN_TOL)?;
    let kernel_frame = xpair.kernel_frame();
    let k = kernel_frame.cols;
    let m = inst.eq.len();
    let d = inst.var_dim();
    let jac = inst.gmap.jac_matrices(x);

    let slater = slater_search(inst, x, 1e-7)?;

    // Surjectivity-failure witness: a nonzero normal-cone pair annihilated
    // by the adjoint system. The section is a cone, so the search either
    // fills the unit ball or collapses to zero.
    let zdim = sym_dim(k);
    let mut rows = Vec::with_capacity(d);
    for j in 0..d {
        let mut row = Vec::with_capacity(m + zdim);
        for i in 0..m {
            row.push(inst.eq.rows[i][j]);
        }
        if k > 0 {
            let gk = kernel_frame.congruence(&jac[j]);
            row.extend(gk.to_svec().iter().map(|v| -v));
        }
        rows.push(row);
    }
    let section = AffinePsdProblem {
        free_dim: m,
        psd_blocks: if k > 0 { vec![k] } else { vec![] },
        eq_rows: rows.clone(),
        eq_rhs: vec![0.0; d],
        objective: None,
        ball_radius: Some(1.0),
    };
    let search = max_norm_on_section(&section, NORM_RESTARTS, 0x1717, tols.feas)?;
    let mut imply1_witness = None;
    if search.value.sqrt() >= tols.witness {
        let res: Vec<f64> = rows.iter().map(|row| dot(row, &search.argmax)).collect();
        if norm2(&res) <= 1e-8 * (1.0 + norm2(&search.argmax)) {
            let u = search.argmax[..m].to_vec();
            let hmat = if k > 0 {
                let zmat = SymMatrix::from_svec(&search.argmax[m..])?;
                kernel_frame.congruence_rev(&zmat).scale(-1.0)
            } else {
                SymMatrix::zeros(xmat.dim())
            };
            imply1_witness = Some((u, hmat));
        }
    }

    let metrically_regular = if slater.holds {
        ThreeValued::Holds
    } else if imply1_witness.is_some() {
        ThreeValued::Fails
    } else {
        ThreeValued::Inconclusive
    };
    let m_locally_bounded = metrically_regular;

    let (condition_a, condition_b, kstar_in_range, b_injective) = if inst.gmap.is_affine() {
        let n = xmat.dim();
        let sdim = sym_dim(n);
        // Normal-cone span at g(x).
        let normal_span = span_normal_basis(&xmat)?;
        // Kernel of the equality matrix, mapped through the constraint map.
        let eq_kernel = kernel_of_rows(d, &inst.eq.rows);
        let mapped_kernel: Vec<Vec<f64>> = eq_kernel
            .vecs
            .iter()
            .map(|u| inst.gmap.deriv(x, u).to_svec())
            .collect();
        let mapped_span = SubspaceBasis::span(sdim, &mapped_kernel);
        // Preimage of the row span under the adjoint equals the orthogonal
        // complement of the mapped kernel.
        let cond_a = normal_span.intersect(&mapped_span.complement()).dim() == 0;

        let lin_tangent = lin_tangent_basis(&xmat)?;
        let cond_b = mapped_kernel
            .iter()
            .all(|img| lin_tangent.contains_vector(img));

        // Critical-cone span of the (g(x), S) pair: matrices with vanishing
        // rows at the multiplier's range indices, pushed through the frame.
        let pair = crate::psdcone::classify(&xmat, smat, EIGEN_TOL)?;
        let gamma = &pair.partition.gamma;
        let mut kspan_vecs = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if gamma.contains(&i) || gamma.contains(&j) {
                    continue;
                }
                let unit = sym_unit(n, i, j);
                kspan_vecs.push(pair.frame.congruence_rev(&unit).to_svec());
            }
        }
        let range_b = SubspaceBasis::span(sdim, &jac.iter().map(|g| g.to_svec()).collect::<Vec<_>>());
        let kstar = kspan_vecs.iter().all(|v| range_b.contains_vector(v));

        // Kernel of the constraint map as a linear map on variables.
        let mut coord_rows = vec![vec![0.0; d]; sdim];
        for (j, g) in jac.iter().enumerate() {
            for (idx, val) in g.to_svec().into_iter().enumerate() {
                coord_rows[idx][j] = val;
            }
        }
        let b_inj = kernel_of_rows(d, &coord_rows).dim() == 0;
        (Some(cond_a), Some(cond_b), Some(kstar), Some(b_inj))
    } else {
        (None, None, None, None)
    };

    Ok(RegularityReport {
        slater,
        imply1_max: search.value,
        imply1_witness,
        metrically_regular,
        m_locally_bounded,
        condition_a,
        condition_b,
        kstar_in_range,
        b_injective,
    })
}
