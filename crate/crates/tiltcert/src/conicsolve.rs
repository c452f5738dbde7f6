//! Certified solvers over intersections of an affine set with a product of
//! PSD cones, free coordinates and an optional origin-centred ball.
//!
//! Everything is built from two exact projections: onto the affine set
//! (orthonormalised rows) and onto the cone product (eigenvalue clamping,
//! then radial scaling into the ball, which is exact because the product is
//! a cone). Feasibility runs Dykstra's alternating projections; linear
//! objectives are maximised by bisection on the level sets; squared norms
//! are maximised by multi-start push-and-reproject ascent. Outcomes carry
//! the point or certificate that was actually verified, never solver trust:
//! feasible points are re-checked against the constraints, infeasibility is
//! declared only with a separating functional, unboundedness only with a
//! verified recession direction.

use crate::error::{Error, Result};
use crate::symmat::{dot, norm2, sym_dim, sym_eigen, SymMatrix, EIGEN_TOL};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Default feasibility residual.
pub const FEAS_TOL: f64 = 1e-8;
/// Default Dykstra sweep budget for one feasibility question.
pub const MAX_SWEEPS: usize = 60_000;
/// Default number of ascent restarts for norm maximisation.
pub const NORM_RESTARTS: usize = 64;

/// Variable layout: `free_dim` unconstrained coordinates, then the scaled
/// coordinates of one PSD matrix per entry of `psd_blocks`. Constraints:
/// `eq_rows * u = eq_rhs`, each PSD block positive semidefinite, and
/// optionally `|u| <= ball_radius` (origin-centred).
#[derive(Debug, Clone)]
pub struct AffinePsdProblem {
    pub free_dim: usize,
    pub psd_blocks: Vec<usize>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub objective: Option<Vec<f64>>,
    pub ball_radius: Option<f64>,
}

impl AffinePsdProblem {
    pub fn dim(&self) -> usize {
        self.free_dim + self.psd_blocks.iter().map(|&k| sym_dim(k)).sum::<usize>()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.eq_rows.len() != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch("rows and rhs lengths differ".into()));
        }
        if self.eq_rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!("row length differs from dimension {n}")));
        }
        if let Some(l) = &self.objective {
            if l.len() != n {
                return Err(Error::DimensionMismatch("objective length differs".into()));
            }
        }
        Ok(())
    }

    /// Residual of the equality block at `u`.
    pub fn eq_violation(&self, u: &[f64]) -> f64 {
        let r: Vec<f64> = self
            .eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(row, &b)| dot(row, u) - b)
            .collect();
        norm2(&r)
    }

    /// Worst sign violation over the PSD blocks plus any ball excess.
    pub fn cone_violation(&self, u: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        let mut off = self.free_dim;
        for &k in &self.psd_blocks {
            let len = sym_dim(k);
            let block = SymMatrix::from_svec(&u[off..off + len])?;
            let min_eig = sym_eigen(&block, EIGEN_TOL)?.eigvals.last().copied().unwrap_or(0.0);
            worst = worst.max((-min_eig).max(0.0));
            off += len;
        }
        if let Some(r) = self.ball_radius {
            worst = worst.max((norm2(u) - r).max(0.0));
        }
        Ok(worst)
    }

    /// Exact projection onto the cone product (then into the ball, which is
    /// exact because the product with free coordinates is a cone).
    fn project_cone(&self, u: &mut [f64]) -> Result<()> {
        let mut off = self.free_dim;
        for &k in &self.psd_blocks {
            let len = sym_dim(k);
            let block = SymMatrix::from_svec(&u[off..off + len])?;
            let d = sym_eigen(&block, EIGEN_TOL)?;
            let clamped: Vec<f64> = d.eigvals.iter().map(|&l| l.max(0.0)).collect();
            let proj = d.frame.congruence_rev(&SymMatrix::diag(&clamped));
            u[off..off + len].copy_from_slice(&proj.to_svec());
            off += len;
        }
        if let Some(r) = self.ball_radius {
            let n = norm2(u);
            if n > r {
                let s = r / n;
                u.iter_mut().for_each(|x| *x *= s);
            }
        }
        Ok(())
    }

    /// Support function of the cone product (with ball) in direction `phi`:
    /// `radius * |P_cone(phi)|`, or 0/None without a ball depending on
    /// whether `phi` is polar to the cone.
    fn cone_support(&self, phi: &[f64]) -> Result<Option<f64>> {
        let mut proj = phi.to_vec();
        let saved = self.ball_radius;
        // Project onto the cone alone.
        let me = AffinePsdProblem { ball_radius: None, ..self.clone() };
        me.project_cone(&mut proj)?;
        let pn = norm2(&proj);
        match saved {
            Some(r) => Ok(Some(r * pn)),
            None => {
                if pn <= 1e-8 * (1.0 + norm2(phi)) {
                    Ok(Some(0.0))
                } else {
                    Ok(None)
                }
            }
        }
    }
}

/// Orthonormalised equality system for exact affine projections.
struct Projector {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Residual of an inconsistent dependent row, if any.
    inconsistent: Option<f64>,
}

impl Projector {
    fn build(eq_rows: &[Vec<f64>], eq_rhs: &[f64]) -> Projector {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut inconsistent = None;
        for (row, &b) in eq_rows.iter().zip(eq_rhs) {
            let scale = norm2(row);
            let mut r = row.clone();
            let mut t = b;
            for _ in 0..2 {
                for (q, &tq) in rows.iter().zip(&rhs) {
                    let d = dot(&r, q);
                    for (ri, qi) in r.iter_mut().zip(q) {
                        *ri -= d * qi;
                    }
                    t -= d * tq;
                }
            }
            let res = norm2(&r);
            if res <= 1e-12 * (1.0 + scale) {
                if t.abs() > 1e-9 * (1.0 + b.abs()) {
                    inconsistent = Some(t.abs());
                }
                continue;
            }
            r.iter_mut().for_each(|x| *x /= res);
            rows.push(r);
            rhs.push(t / res);
        }
        Projector { rows, rhs, inconsistent }
    }

    fn project(&self, u: &mut [f64]) {
        for (q, &t) in self.rows.iter().zip(&self.rhs) {
            let d = dot(u, q) - t;
            for (ui, qi) in u.iter_mut().zip(q) {
                *ui -= d * qi;
            }
        }
    }

    fn residual(&self, u: &[f64]) -> f64 {
        let r: Vec<f64> = self.rows.iter().zip(&self.rhs).map(|(q, &t)| dot(u, q) - t).collect();
        norm2(&r)
    }

    /// Distance from `phi` to the row span, relative to its norm.
    fn row_space_defect(&self, phi: &[f64]) -> f64 {
        let mut r = phi.to_vec();
        for q in &self.rows {
            let d = dot(&r, q);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= d * qi;
            }
        }
        norm2(&r) / (1.0 + norm2(phi))
    }
}

/// Result of a solve. Points and certificates are re-verified before being
/// returned.
#[derive(Debug, Clone)]
pub enum SolveOutcome {
    /// Linear objective maximised; `point` attains `value` feasibly.
    Optimal { point: Vec<f64>, value: f64 },
    /// A point satisfying all constraints within the feasibility tolerance.
    Feasible { point: Vec<f64> },
    /// A separating functional: constant `affine_value` on the affine set,
    /// at most `cone_value` on the cone product. Their gap certifies empty
    /// intersection.
    Infeasible { certificate: Vec<f64>, affine_value: f64, cone_value: f64 },
    /// A verified recession direction with positive objective rate.
    Unbounded { direction: Vec<f64> },
    /// Budget exhausted without a certificate either way.
    IterationLimit,
}

impl SolveOutcome {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            SolveOutcome::Optimal { point, .. } | SolveOutcome::Feasible { point } => Some(point),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Optimal { .. } | SolveOutcome::Feasible { .. })
    }
}

enum DykstraResult {
    Converged(Vec<f64>),
    Infeasible { certificate: Vec<f64>, affine_value: f64, cone_value: f64 },
    Stalled,
}

/// Dykstra's alternating projections between the affine set and the cone
/// product, started at `start`. On feasible problems the iterates converge
/// to the projection of `start` onto the intersection. On infeasible ones
/// the affine-side and cone-side iterates separate; the gap between them is
/// non-increasing, and once it stalls above the tolerance the difference
/// vector is tested as a separating functional.
fn dykstra(
    p: &AffinePsdProblem,
    proj: &Projector,
    start: &[f64],
    feas_tol: f64,
    max_sweeps: usize,
) -> Result<DykstraResult> {
    let n = p.dim();
    let mut x = start.to_vec();
    let mut pc = vec![0.0; n];
    let mut qc = vec![0.0; n];
    let mut best_gap = f64::INFINITY;
    let mut last_check = f64::INFINITY;

    for sweep in 0..max_sweeps {
        // Affine step with correction.
        let mut y: Vec<f64> = x.iter().zip(&pc).map(|(a, b)| a + b).collect();
        proj.project(&mut y);
        for i in 0..n {
            pc[i] = x[i] + pc[i] - y[i];
        }
        // Cone step with correction.
        let mut z: Vec<f64> = y.iter().zip(&qc).map(|(a, b)| a + b).collect();
        p.project_cone(&mut z)?;
        for i in 0..n {
            qc[i] = y[i] + qc[i] - z[i];
        }
        x = z;

        let gap = norm2(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        best_gap = best_gap.min(gap);
        // x lies in the cone exactly; only the affine residual is open.
        if proj.residual(&x) <= feas_tol && p.ball_radius.is_none_or(|r| norm2(&x) <= r + feas_tol)
        {
            return Ok(DykstraResult::Converged(x));
        }

        let window = 250;
        if sweep % window == window - 1 {
            let improved = last_check - best_gap > 1e-12 * (1.0 + best_gap) + 1e-15;
            last_check = best_gap;
            if !improved && best_gap > feas_tol {
                // Try to certify separation with the current difference.
                let phi: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                let phi_norm = norm2(&phi);
                if phi_norm > 0.0 && proj.row_space_defect(&phi) <= 1e-6 {
                    if let Some(cone_value) = p.cone_support(&phi)? {
                        let affine_value = dot(&phi, &y);
                        if affine_value - cone_value > 1e-12 + feas_tol * phi_norm {
                            return Ok(DykstraResult::Infeasible {
                                certificate: phi.iter().map(|v| v / phi_norm).collect(),
                                affine_value: affine_value / phi_norm,
                                cone_value: cone_value / phi_norm,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(DykstraResult::Stalled)
}

/// Finds a point of the constraint set or a separating certificate.
pub fn solve_feasibility(
    p: &AffinePsdProblem,
    feas_tol: f64,
    max_sweeps: usize,
) -> Result<SolveOutcome> {
    p.validate()?;
    let proj = Projector::build(&p.eq_rows, &p.eq_rhs);
    if let Some(defect) = proj.inconsistent {
        return Ok(SolveOutcome::Infeasible {
            certificate: vec![],
            affine_value: defect,
            cone_value: 0.0,
        });
    }
    let mut start = vec![0.0; p.dim()];
    proj.project(&mut start);
    solve_feasibility_from(p, &proj, &start, feas_tol, max_sweeps)
}

fn solve_feasibility_from(
    p: &AffinePsdProblem,
    proj: &Projector,
    start: &[f64],
    feas_tol: f64,
    max_sweeps: usize,
) -> Result<SolveOutcome> {
    match dykstra(p, proj, start, feas_tol, max_sweeps)? {
        DykstraResult::Converged(point) => Ok(SolveOutcome::Feasible { point }),
        DykstraResult::Infeasible { certificate, affine_value, cone_value } => {
            Ok(SolveOutcome::Infeasible { certificate, affine_value, cone_value })
        }
        DykstraResult::Stalled => Ok(SolveOutcome::IterationLimit),
    }
}

fn with_level_row(p: &AffinePsdProblem, l_unit: &[f64], level: f64) -> AffinePsdProblem {
    let mut q = p.clone();
    q.eq_rows.push(l_unit.to_vec());
    q.eq_rhs.push(level);
    q.objective = None;
    q
}

/// Component of the objective inside the kernel of the equality rows; the
/// objective is constant on the affine set iff this vanishes.
fn objective_kernel_part(p: &AffinePsdProblem, l: &[f64]) -> Vec<f64> {
    let proj = Projector::build(&p.eq_rows, &p.eq_rhs);
    let mut r = l.to_vec();
    for q in &proj.rows {
        let d = dot(&r, q);
        for (ri, qi) in r.iter_mut().zip(q) {
            *ri -= d * qi;
        }
    }
    r
}

/// Maximises the linear objective over the constraint set by supporting-
/// hyperplane bisection: grow the level until its slice turns infeasible,
/// then bisect. Unboundedness is decided on the homogenised problem over
/// the unit ball and certified by a verified recession direction.
pub fn maximize_linear(
    p: &AffinePsdProblem,
    value_tol: f64,
    feas_tol: f64,
    max_sweeps: usize,
) -> Result<SolveOutcome> {
    p.validate()?;
    let l = p
        .objective
        .clone()
        .ok_or_else(|| Error::InvalidInstance("maximize_linear needs an objective".into()))?;

    let proj = Projector::build(&p.eq_rows, &p.eq_rhs);
    if let Some(defect) = proj.inconsistent {
        return Ok(SolveOutcome::Infeasible {
            certificate: vec![],
            affine_value: defect,
            cone_value: 0.0,
        });
    }
    let mut start = vec![0.0; p.dim()];
    proj.project(&mut start);
    let base = match solve_feasibility_from(p, &proj, &start, feas_tol, max_sweeps)? {
        SolveOutcome::Feasible { point } => point,
        other => return Ok(other),
    };
    let base_value = dot(&l, &base);

    // Constant objective on the affine set: any feasible point is optimal.
    let l_ker = objective_kernel_part(p, &l);
    let l_ker_norm = norm2(&l_ker);
    if l_ker_norm <= 1e-12 * (1.0 + norm2(&l)) {
        return Ok(SolveOutcome::Optimal { point: base, value: base_value });
    }

    // Unboundedness test on the homogenised section (skipped under a ball).
    if p.ball_radius.is_none() {
        if let Some(direction) = recession_improvement(p, &l, feas_tol, max_sweeps)? {
            return Ok(SolveOutcome::Unbounded { direction });
        }
    }

    let l_unit: Vec<f64> = {
        let n = norm2(&l);
        l.iter().map(|v| v / n).collect()
    };
    let scale = norm2(&l);
    let mut t_lo = base_value / scale;
    let mut best = base;

    // Doubling phase. Under a ball the level can never exceed the radius,
    // which caps the growth analytically.
    let mut step = 0.5 * (1.0 + t_lo.abs());
    let mut t_hi = None;
    let hi_bound = p.ball_radius.map(|r| r + 1.0);
    for _ in 0..70 {
        let t = t_lo + step;
        if let Some(hb) = hi_bound {
            if t > hb {
                t_hi = Some(hb);
                break;
            }
        }
        let slice = with_level_row(p, &l_unit, t);
        let sproj = Projector::build(&slice.eq_rows, &slice.eq_rhs);
        match solve_feasibility_from(&slice, &sproj, &best, feas_tol, max_sweeps)? {
            SolveOutcome::Feasible { point } => {
                t_lo = t;
                best = point;
                step *= 2.0;
            }
            _ => {
                t_hi = Some(t);
                break;
            }
        }
    }
    let mut t_hi = match t_hi {
        Some(t) => t,
        None => {
            // The level kept growing; treat the drift as a recession ray if
            // it verifies, otherwise give up.
            let mut start0 = vec![0.0; p.dim()];
            proj.project(&mut start0);
            let drift: Vec<f64> = best.iter().zip(&start0).map(|(a, b)| a - b).collect();
            let dn = norm2(&drift);
            if dn > 0.0 {
                let z: Vec<f64> = drift.iter().map(|v| v / dn).collect();
                if verify_recession(p, &l, &z, feas_tol)? {
                    return Ok(SolveOutcome::Unbounded { direction: z });
                }
            }
            return Ok(SolveOutcome::IterationLimit);
        }
    };

    // Bisection phase.
    for _ in 0..200 {
        if t_hi - t_lo <= value_tol * (1.0 + t_lo.abs()) / scale.max(1e-300) {
            break;
        }
        let mid = 0.5 * (t_lo + t_hi);
        let slice = with_level_row(p, &l_unit, mid);
        let sproj = Projector::build(&slice.eq_rows, &slice.eq_rhs);
        match solve_feasibility_from(&slice, &sproj, &best, feas_tol, max_sweeps)? {
            SolveOutcome::Feasible { point } => {
                t_lo = mid;
                best = point;
            }
            _ => t_hi = mid,
        }
    }

    // Near-tangential slices stall alternating projections well before the
    // bisection tolerance; an exact maximisation over the active face closes
    // the remaining gap.
    let mut value = dot(&l, &best);
    if let Some((pp, pv)) = polish_active_set(p, &l, &best)? {
        if pv > value {
            best = pp;
            value = pv;
        }
    }
    Ok(SolveOutcome::Optimal { point: best, value })
}

/// Rows stating that the PSD block of order `k` stored at `offset` sends the
/// vector `v` to zero, in scaled coordinates.
fn annihilation_rows(dim_total: usize, offset: usize, k: usize, v: &[f64]) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(k);
    for r in 0..k {
        let mut row = vec![0.0; dim_total];
        for j in 0..k {
            let (a, b) = if r <= j { (r, j) } else { (j, r) };
            let idx = offset + b * (b + 1) / 2 + a;
            row[idx] += if r == j { v[j] } else { v[j] / std::f64::consts::SQRT_2 };
        }
        rows.push(row);
    }
    rows
}

/// Exact maximisation over the face of the constraint set that is active at
/// `start`: annihilate near-kernel directions of each PSD block, keep the
/// equalities, and cap with the sphere when the ball binds (closed form on
/// the affine hull). Constraints found violated at a trial point are forced
/// active and the step repeats, converging like a Newton iteration on the
/// active manifold. Returns the best verified feasible point, if any.
fn polish_active_set(
    p: &AffinePsdProblem,
    l: &[f64],
    start: &[f64],
) -> Result<Option<(Vec<f64>, f64)>> {
    let n = p.dim();
    let mut forced_ball = false;
    let mut candidate = start.to_vec();
    let mut best: Option<(Vec<f64>, f64)> = None;

    for _ in 0..8 {
        let mut face_rows = p.eq_rows.clone();
        let mut face_rhs = p.eq_rhs.clone();
        let mut off = p.free_dim;
        for &k in &p.psd_blocks {
            let len = sym_dim(k);
            let block = SymMatrix::from_svec(&candidate[off..off + len])?;
            let d = sym_eigen(&block, EIGEN_TOL)?;
            let scale = 1.0 + d.eigvals.first().map(|v| v.abs()).unwrap_or(0.0);
            for (i, &lam) in d.eigvals.iter().enumerate() {
                if lam < 1e-5 * scale {
                    let v: Vec<f64> = (0..k).map(|r| d.frame.get(r, i)).collect();
                    face_rows.extend(annihilation_rows(n, off, k, &v));
                    face_rhs.extend(std::iter::repeat_n(0.0, k));
                }
            }
            off += len;
        }
        let ball_active = forced_ball
            || p.ball_radius.is_some_and(|r| norm2(&candidate) >= r * (1.0 - 1e-5));

        let proj = Projector::build(&face_rows, &face_rhs);
        if proj.inconsistent.is_some() {
            return Ok(best);
        }
        let mut lk = l.to_vec();
        for q in &proj.rows {
            let d = dot(&lk, q);
            for (ri, qi) in lk.iter_mut().zip(q) {
                *ri -= d * qi;
            }
        }
        let lk_norm = norm2(&lk);
        let mut next = vec![0.0; n];
        proj.project(&mut next);

        if ball_active {
            let Some(r) = p.ball_radius else { return Ok(best) };
            let rem = r * r - dot(&next, &next);
            if rem < -1e-12 {
                return Ok(best);
            }
            if lk_norm > 1e-12 * (1.0 + norm2(l)) {
                let c = rem.max(0.0).sqrt() / lk_norm;
                for i in 0..n {
                    next[i] += c * lk[i];
                }
            } else {
                next = candidate.clone();
                proj.project(&mut next);
            }
        } else if lk_norm > 1e-10 * (1.0 + norm2(l)) {
            // Unbounded along the hull: only the ball can stop it.
            if p.ball_radius.is_none() {
                return Ok(best);
            }
            forced_ball = true;
            continue;
        } else {
            next = candidate.clone();
            proj.project(&mut next);
        }

        let feasible = p.eq_violation(&next) <= 1e-9 * (1.0 + norm2(&next))
            && p.cone_violation(&next)? <= 1e-9 * (1.0 + norm2(&next));
        if feasible {
            let val = dot(l, &next);
            if best.as_ref().is_none_or(|(_, bv)| val > *bv) {
                best = Some((next.clone(), val));
            }
            break;
        }
        if p.ball_radius.is_some_and(|r| norm2(&next) > r * (1.0 + 1e-9)) {
            forced_ball = true;
        }
        // Re-detect actives at the violating point next round; its negative
        // eigen-directions fall under the activity threshold automatically.
        candidate = next;
    }
    Ok(best)
}

/// Looks for a recession direction with positive objective rate: maximise
/// the objective over the homogenised constraints inside the unit ball.
fn recession_improvement(
    p: &AffinePsdProblem,
    l: &[f64],
    feas_tol: f64,
    max_sweeps: usize,
) -> Result<Option<Vec<f64>>> {
    let hom = AffinePsdProblem {
        free_dim: p.free_dim,
        psd_blocks: p.psd_blocks.clone(),
        eq_rows: p.eq_rows.clone(),
        eq_rhs: vec![0.0; p.eq_rows.len()],
        objective: Some(l.to_vec()),
        ball_radius: Some(1.0),
    };
    match maximize_linear(&hom, 1e-7, feas_tol, max_sweeps)? {
        SolveOutcome::Optimal { point, value } => {
            if value > 1e-5 * (1.0 + norm2(l)) {
                let n = norm2(&point);
                let z: Vec<f64> = point.iter().map(|v| v / n).collect();
                if verify_recession(p, l, &z, feas_tol)? {
                    return Ok(Some(z));
                }
            }
            Ok(None)
        }
        _ => Ok(None),
    }
}

/// A recession certificate must satisfy the homogenised constraints and
/// improve the objective.
fn verify_recession(p: &AffinePsdProblem, l: &[f64], z: &[f64], feas_tol: f64) -> Result<bool> {
    let hom_rows_res = {
        let r: Vec<f64> = p.eq_rows.iter().map(|row| dot(row, z)).collect();
        norm2(&r)
    };
    let cone_free = AffinePsdProblem { ball_radius: None, ..p.clone() };
    Ok(hom_rows_res <= 10.0 * feas_tol
        && cone_free.cone_violation(z)? <= 10.0 * feas_tol
        && dot(l, z) > 1e-7 * (1.0 + norm2(l)))
}

/// Result of the norm-maximisation search. The value is a certified lower
/// bound: the argmax is feasible, but the search may miss the global
/// maximum.
#[derive(Debug, Clone)]
pub struct NormSearch {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub lower_bound_only: bool,
}

/// Maximises `|u|^2` over a homogeneous section (equalities with zero
/// right-hand side, cone blocks, mandatory ball) by multi-start projected
/// ascent: project a random start onto the set, then alternate radial push
/// and re-projection until the norm stalls.
pub fn max_norm_on_section(
    p: &AffinePsdProblem,
    restarts: usize,
    seed: u64,
    feas_tol: f64,
) -> Result<NormSearch> {
    p.validate()?;
    if p.eq_rhs.iter().any(|&b| b != 0.0) {
        return Err(Error::InvalidInstance(
            "norm maximisation expects a homogeneous section".into(),
        ));
    }
    let radius = p
        .ball_radius
        .ok_or_else(|| Error::InvalidInstance("norm maximisation needs a ball".into()))?;
    let proj = Projector::build(&p.eq_rows, &p.eq_rhs);
    let n = p.dim();

    let project = |start: &[f64]| -> Result<Option<Vec<f64>>> {
        match dykstra(p, &proj, start, feas_tol.min(1e-10), 20_000)? {
            DykstraResult::Converged(u) => Ok(Some(u)),
            _ => Ok(None),
        }
    };

    let mut best = vec![0.0; n];
    let mut best_norm = 0.0f64;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, r as u64));
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let Some(mut u) = project(&start)? else { continue };
        for _ in 0..200 {
            let cur = norm2(&u);
            if cur <= 1e-14 {
                break;
            }
            // Push radially, capped at the ball, and re-project.
            let factor = (1.5f64).min(radius / cur * 1.0001);
            let pushed: Vec<f64> = u.iter().map(|v| v * factor).collect();
            let Some(next) = project(&pushed)? else { break };
            let nn = norm2(&next);
            if nn <= cur * (1.0 + 1e-12) {
                u = next;
                break;
            }
            u = next;
        }
        let un = norm2(&u);
        if un > best_norm {
            best_norm = un;
            best = u;
        }
        // A section is a cone capped by the ball: the maximum is the radius.
        if best_norm >= radius * (1.0 - 1e-9) {
            break;
        }
    }

    Ok(NormSearch { value: best_norm * best_norm, argmax: best, lower_bound_only: true })
}
