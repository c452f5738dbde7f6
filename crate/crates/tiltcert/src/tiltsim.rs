//! Empirical tilt oracle.
//!
//! Samples tilt vectors `v`, minimizes the tilted objective
//! `f(x) - <v, x - xbar>` over the feasible set intersected with a ball
//! around the base point, and summarizes how the solution set responds:
//! how far apart near-optimal solutions sit, and how fast the best
//! solution moves per unit of tilt. The verdict layer is advisory; sampling
//! can suggest instability or corroborate a certificate, never prove
//! stability.
//!
//! Minimization runs projected gradient steps with Dykstra projections
//! onto the intersection of the equality rows, the semidefinite constraint
//! and the ball. The primal embedding projects its matrix block directly;
//! a general affine constraint mapping is lifted to product coordinates
//! `(x, s)` with linking rows `s = svec(g(x))`, so every set in the cycle
//! has an exact projection.

use crate::conicsolve::FEAS_TOL;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::problem::{InstanceForm, NsdpInstance};
use crate::symmat::{dot, norm2, sym_eigen, SymMatrix, EIGEN_TOL};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Tilt vectors sampled by a default profile run.
pub const DEFAULT_TILTS: usize = 32;
/// Largest tilt norm sampled by default.
pub const DEFAULT_TILT_RADIUS: f64 = 1e-3;
/// Perturbed initial points per tilt solve.
pub const DEFAULT_STARTS: usize = 6;
/// Value window for keeping a cluster among the near-optimal set.
pub const OPT_GAP_TOL: f64 = 1e-7;
/// Distance under which two solutions merge into one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

const GRAD_ITERS: usize = 900;
const INNER_SWEEPS: usize = 200;
const POLISH_SWEEPS: usize = 4000;

/// Ball radius used when the caller does not pick one.
pub fn default_delta(xbar: &[f64]) -> f64 {
    0.5 * (1.0 + norm2(xbar))
}

/// Decision thresholds for [`oracle_verdict`].
#[derive(Debug, Clone)]
pub struct OracleThresholds {
    /// Solution-set diameter accepted as single-valued.
    pub gap_tol: f64,
    /// Diameter reported as a genuine jump.
    pub jump_tol: f64,
    /// Largest tolerated movement-per-tilt ratio.
    pub lip_cap: f64,
}

impl Default for OracleThresholds {
    fn default() -> Self {
        OracleThresholds { gap_tol: 1e-5, jump_tol: 0.1, lip_cap: 1e3 }
    }
}

/// Verdict of the sampling oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleVerdict {
    StableLikely,
    UnstableLikely,
    Inconclusive,
}

/// Outcome of one tilted minimization.
#[derive(Debug, Clone, Serialize)]
pub struct TiltedSolve {
    /// Cluster representatives within the value window of the best, sorted
    /// by value then lexicographically.
    pub clusters: Vec<Vec<f64>>,
    /// Tilted objective value per representative.
    pub values: Vec<f64>,
    pub best_value: f64,
    /// Tilted objective at the base point.
    pub center_value: f64,
    /// Largest distance between two representatives.
    pub diameter: f64,
    /// Some start exhausted its iteration budget or failed re-verification.
    pub iteration_limit: bool,
}

/// One sampled tilt with its solution set estimate.
#[derive(Debug, Clone, Serialize)]
pub struct TiltSample {
    pub index: usize,
    pub v: Vec<f64>,
    pub solutions: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// How far the tilted optimum drops below the base point's value.
    pub objective_gap: f64,
    pub diameter: f64,
    pub iteration_limit: bool,
}

/// Sampled response of the localized argmin map.
#[derive(Debug, Clone, Serialize)]
pub struct TiltProfile {
    pub delta: f64,
    pub tilt_radius: f64,
    pub seed: u64,
    pub samples: Vec<TiltSample>,
    /// Largest movement-per-tilt ratio over well-separated sample pairs;
    /// absent when no pair qualifies.
    pub lip_ratio_max: Option<f64>,
    /// Largest solution-set diameter over all samples.
    pub multiplicity_gap_max: f64,
}

impl TiltProfile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per sample; vectors are semicolon-joined.
    pub fn to_csv(&self) -> String {
        let join = |v: &[f64]| {
            v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
        };
        let mut out = String::from(
            "sample,status,v_norm,objective_gap,clusters,diameter,v,best_x\n",
        );
        for s in &self.samples {
            let status = if s.iteration_limit { "iteration_limit" } else { "ok" };
            let best = s.solutions.first().map(|x| join(x)).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.index,
                status,
                norm2(&s.v),
                s.objective_gap,
                s.solutions.len(),
                s.diameter,
                join(&s.v),
                best,
            ));
        }
        out
    }
}

/// Orthonormalized affine rows `rows * u = rhs` with exact projection.
struct OrthoRows {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl OrthoRows {
    fn build(raw_rows: &[Vec<f64>], raw_rhs: &[f64]) -> OrthoRows {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for (row, &b) in raw_rows.iter().zip(raw_rhs) {
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
            if res <= 1e-12 * (1.0 + norm2(row)) {
                continue;
            }
            r.iter_mut().for_each(|x| *x /= res);
            rows.push(r);
            rhs.push(t / res);
        }
        OrthoRows { rows, rhs }
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
        let r: Vec<f64> =
            self.rows.iter().zip(&self.rhs).map(|(q, &t)| dot(u, q) - t).collect();
        norm2(&r)
    }
}

/// Feasible geometry in coordinates centered at the base point. The primal
/// embedding keeps the matrix block on the `x` coordinates; other affine
/// mappings carry a lifted `s` block tied to `x` by linking rows.
struct TiltedSet {
    xdim: usize,
    sdim: usize,
    center_x: Vec<f64>,
    center_s: Vec<f64>,
    affine: OrthoRows,
    delta: f64,
}

impl TiltedSet {
    fn build(inst: &NsdpInstance, xbar: &[f64], delta: f64) -> Result<TiltedSet> {
        if !inst.gmap.is_affine() {
            return Err(Error::UnsupportedFeature(
                "the tilt oracle handles affine constraint mappings only".into(),
            ));
        }
        let xdim = inst.var_dim();
        let primal = inst.form == InstanceForm::Primal;
        let sdim = if primal { 0 } else { inst.gmap.eval(xbar).to_svec().len() };
        let dim = xdim + sdim;

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for (row, &b) in inst.eq.rows.iter().zip(&inst.eq.rhs) {
            let mut r = vec![0.0; dim];
            r[..xdim].copy_from_slice(row);
            rows.push(r);
            rhs.push(b - dot(row, xbar));
        }
        let center_s = if primal { Vec::new() } else { inst.gmap.eval(xbar).to_svec() };
        if !primal {
            let jac: Vec<Vec<f64>> =
                inst.gmap.jac_matrices(xbar).iter().map(|g| g.to_svec()).collect();
            for k in 0..sdim {
                let mut r = vec![0.0; dim];
                for (i, ji) in jac.iter().enumerate() {
                    r[i] = -ji[k];
                }
                r[xdim + k] = 1.0;
                rows.push(r);
                rhs.push(0.0);
            }
        }
        Ok(TiltedSet {
            xdim,
            sdim,
            center_x: xbar.to_vec(),
            center_s,
            affine: OrthoRows::build(&rows, &rhs),
            delta,
        })
    }

    fn dim(&self) -> usize {
        self.xdim + self.sdim
    }

    fn project_cone(&self, u: &mut [f64]) -> Result<()> {
        let (center, range) = if self.sdim == 0 {
            (&self.center_x, 0..self.xdim)
        } else {
            (&self.center_s, self.xdim..self.xdim + self.sdim)
        };
        let abs: Vec<f64> =
            u[range.clone()].iter().zip(center.iter()).map(|(a, b)| a + b).collect();
        let block = SymMatrix::from_svec(&abs)?;
        let eig = sym_eigen(&block, EIGEN_TOL)?;
        let clipped: Vec<f64> = eig.eigvals.iter().map(|&l| l.max(0.0)).collect();
        let proj = eig.frame.congruence_rev(&SymMatrix::diag(&clipped)).to_svec();
        for ((ui, pi), ci) in u[range].iter_mut().zip(&proj).zip(center.iter()) {
            *ui = pi - ci;
        }
        Ok(())
    }

    fn project_ball(&self, u: &mut [f64]) {
        let n = norm2(&u[..self.xdim]);
        if n > self.delta {
            let s = self.delta / n;
            u[..self.xdim].iter_mut().for_each(|x| *x *= s);
        }
    }

    fn cone_residual(&self, u: &[f64]) -> Result<f64> {
        let (center, range) = if self.sdim == 0 {
            (&self.center_x, 0..self.xdim)
        } else {
            (&self.center_s, self.xdim..self.xdim + self.sdim)
        };
        let abs: Vec<f64> =
            u[range].iter().zip(center.iter()).map(|(a, b)| a + b).collect();
        let block = SymMatrix::from_svec(&abs)?;
        let min_eig = sym_eigen(&block, EIGEN_TOL)?.eigvals.last().copied().unwrap_or(0.0);
        Ok((-min_eig).max(0.0))
    }

    fn violation(&self, u: &[f64]) -> Result<f64> {
        let ball = (norm2(&u[..self.xdim]) - self.delta).max(0.0);
        Ok(self.affine.residual(u).max(self.cone_residual(u)?).max(ball))
    }

    /// Dykstra projection of `target` onto the intersection. Returns the
    /// final iterate and whether it met the tolerance.
    fn project(&self, target: &[f64], tol: f64, max_sweeps: usize) -> Result<(Vec<f64>, bool)> {
        let dim = self.dim();
        let mut z = target.to_vec();
        let mut pa = vec![0.0; dim];
        let mut pc = vec![0.0; dim];
        let mut pb = vec![0.0; dim];
        for _ in 0..max_sweeps {
            let prev = z.clone();
            for (zi, ci) in z.iter_mut().zip(&pa) {
                *zi += ci;
            }
            let before: Vec<f64> = z.clone();
            self.affine.project(&mut z);
            for ((ci, bi), zi) in pa.iter_mut().zip(&before).zip(&z) {
                *ci = bi - zi;
            }

            for (zi, ci) in z.iter_mut().zip(&pc) {
                *zi += ci;
            }
            let before: Vec<f64> = z.clone();
            self.project_cone(&mut z)?;
            for ((ci, bi), zi) in pc.iter_mut().zip(&before).zip(&z) {
                *ci = bi - zi;
            }

            for (zi, ci) in z.iter_mut().zip(&pb) {
                *zi += ci;
            }
            let before: Vec<f64> = z.clone();
            self.project_ball(&mut z);
            for ((ci, bi), zi) in pb.iter_mut().zip(&before).zip(&z) {
                *ci = bi - zi;
            }

            if self.violation(&z)? <= tol {
                return Ok((z, true));
            }
            let moved = z
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if moved <= 1e-15 * (1.0 + norm2(&z)) {
                break;
            }
        }
        let ok = self.violation(&z)? <= tol;
        Ok((z, ok))
    }
}

/// Minimizes the tilted objective over the ball-restricted feasible set
/// with a deterministic multi-start and returns every near-optimal cluster.
pub fn solve_tilted_seeded(
    inst: &NsdpInstance,
    xbar: &[f64],
    v: &[f64],
    delta: f64,
    tol: f64,
    starts: usize,
    seed: u64,
) -> Result<TiltedSolve> {
    if delta <= 0.0 {
        return Err(Error::InvalidInstance("ball radius must be positive".into()));
    }
    if v.len() != inst.var_dim() || xbar.len() != inst.var_dim() {
        return Err(Error::DimensionMismatch(format!(
            "tilt and point must have the variable dimension {}",
            inst.var_dim()
        )));
    }
    let report = inst.evaluate(xbar)?;
    let scale = 1.0 + norm2(xbar);
    if report.eq_residual > tol * scale || report.psd_residual > tol * scale {
        return Err(Error::InfeasiblePoint(format!(
            "base point violates the constraints: equality {:.3e}, cone {:.3e}",
            report.eq_residual, report.psd_residual
        )));
    }

    let set = TiltedSet::build(inst, xbar, delta)?;
    let tilted = |x: &[f64]| {
        let shift: f64 = x.iter().zip(xbar).zip(v).map(|((xi, bi), vi)| vi * (xi - bi)).sum();
        inst.objective.value(x) - shift
    };
    let center_value = tilted(xbar);

    let q = &inst.objective.qmat;
    let lmax = sym_eigen(q, EIGEN_TOL)?.eigvals.first().copied().unwrap_or(0.0).max(0.0);
    let grad_at = |x: &[f64]| -> Vec<f64> {
        let mut g = inst.objective.gradient(x);
        for (gi, vi) in g.iter_mut().zip(v) {
            *gi -= vi;
        }
        g
    };
    let g0 = norm2(&grad_at(xbar));
    let mut step = 2.0 * delta / (1.0 + g0);
    if lmax > 1e-12 {
        step = step.min(1.0 / lmax);
    }

    let inner_tol = 0.2 * tol;
    struct StartOutcome {
        x: Vec<f64>,
        value: f64,
        clean: bool,
        feasible: bool,
    }
    let mut finals: Vec<StartOutcome> = Vec::new();
    for start in 0..starts.max(1) {
        let mut u = vec![0.0; set.dim()];
        if start > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, start as u64));
            for ui in u.iter_mut().take(set.xdim) {
                *ui = rng.gen_range(-0.5 * delta..0.5 * delta);
            }
        }
        let (mut u, _) = set.project(&u, inner_tol, INNER_SWEEPS)?;

        let mut settled = 0usize;
        let mut converged = false;
        for _ in 0..GRAD_ITERS {
            let x: Vec<f64> =
                u[..set.xdim].iter().zip(xbar).map(|(a, b)| a + b).collect();
            let g = grad_at(&x);
            let mut target = u.clone();
            for (ti, gi) in target.iter_mut().zip(&g) {
                *ti -= step * gi;
            }
            let (unew, ok) = set.project(&target, inner_tol, INNER_SWEEPS)?;
            let moved = unew
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            u = unew;
            if ok && moved <= 1e-12 * (1.0 + norm2(&u)) {
                settled += 1;
                if settled >= 2 {
                    converged = true;
                    break;
                }
            } else {
                settled = 0;
            }
        }

        // Recorded values must be trustworthy to ~1e-10: a leftover
        // constraint violation of size e costs |<grad, e>| in the
        // objective, so squeeze the normal error well below that.
        let (upolished, polished) = set.project(&u, 1e-12 * scale, POLISH_SWEEPS)?;
        u = upolished;

        let x: Vec<f64> = u[..set.xdim].iter().zip(xbar).map(|(a, b)| a + b).collect();
        let rep = inst.evaluate(&x)?;
        let ball_excess = (norm2(&u[..set.xdim]) - delta).max(0.0);
        let verified = rep.eq_residual <= tol * scale
            && rep.psd_residual <= tol * scale
            && ball_excess <= tol * scale;
        finals.push(StartOutcome {
            value: tilted_value_of(&tilted, &u, xbar, set.xdim),
            x,
            clean: converged && polished && verified,
            feasible: verified,
        });
    }

    let iteration_limit = finals.iter().any(|o| !o.clean);
    // Prefer cleanly converged starts, then at least feasible ones; an
    // iteration-limited run still reports its best point, flagged.
    let pool: Vec<&StartOutcome> = if finals.iter().any(|o| o.clean) {
        finals.iter().filter(|o| o.clean).collect()
    } else if finals.iter().any(|o| o.feasible) {
        finals.iter().filter(|o| o.feasible).collect()
    } else {
        finals.iter().collect()
    };
    let best_value = pool.iter().map(|o| o.value).fold(f64::INFINITY, f64::min);

    let window = OPT_GAP_TOL * (1.0 + best_value.abs());
    let merge = CLUSTER_TOL.max(10.0 * tol) * scale;
    let mut reps: Vec<(Vec<f64>, f64)> = Vec::new();
    for o in &pool {
        if o.value > best_value + window {
            continue;
        }
        let dup = reps.iter().any(|(r, _)| {
            let d: f64 =
                r.iter().zip(&o.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d <= merge
        });
        if !dup {
            reps.push((o.x.clone(), o.value));
        }
    }
    reps.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
    });

    let mut diameter = 0.0f64;
    for i in 0..reps.len() {
        for j in (i + 1)..reps.len() {
            let d: f64 = reps[i]
                .0
                .iter()
                .zip(&reps[j].0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            diameter = diameter.max(d);
        }
    }

    Ok(TiltedSolve {
        values: reps.iter().map(|(_, v)| *v).collect(),
        clusters: reps.into_iter().map(|(x, _)| x).collect(),
        best_value,
        center_value,
        diameter,
        iteration_limit,
    })
}

fn tilted_value_of(
    tilted: &impl Fn(&[f64]) -> f64,
    u: &[f64],
    xbar: &[f64],
    xdim: usize,
) -> f64 {
    let x: Vec<f64> = u[..xdim].iter().zip(xbar).map(|(a, b)| a + b).collect();
    tilted(&x)
}

/// [`solve_tilted_seeded`] with the default start count and seed.
pub fn solve_tilted(
    inst: &NsdpInstance,
    xbar: &[f64],
    v: &[f64],
    delta: f64,
    tol: f64,
) -> Result<TiltedSolve> {
    solve_tilted_seeded(inst, xbar, v, delta, tol, DEFAULT_STARTS, 0)
}

/// Samples tilt vectors (zero plus antipodal pairs at the full radius and a
/// tenth of it), solves each tilted problem, and aggregates the response.
pub fn empirical_profile(
    inst: &NsdpInstance,
    xbar: &[f64],
    delta: f64,
    tilt_radius: f64,
    num_tilts: usize,
    seed: u64,
) -> Result<TiltProfile> {
    empirical_profile_with_starts(inst, xbar, delta, tilt_radius, num_tilts, DEFAULT_STARTS, seed)
}

/// [`empirical_profile`] with an explicit start count per tilt solve.
pub fn empirical_profile_with_starts(
    inst: &NsdpInstance,
    xbar: &[f64],
    delta: f64,
    tilt_radius: f64,
    num_tilts: usize,
    starts: usize,
    seed: u64,
) -> Result<TiltProfile> {
    if num_tilts == 0 {
        return Err(Error::InvalidInstance("at least one tilt sample is needed".into()));
    }
    if tilt_radius <= 0.0 {
        return Err(Error::InvalidInstance("tilt radius must be positive".into()));
    }
    let d = inst.var_dim();
    let mut dir_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 987_654_321));
    let mut tilts: Vec<Vec<f64>> = vec![vec![0.0; d]];
    let mut pair = 0usize;
    while tilts.len() < num_tilts {
        let mut dir: Vec<f64> = (0..d).map(|_| dir_rng.gen_range(-1.0..1.0)).collect();
        let n = norm2(&dir).max(1e-12);
        dir.iter_mut().for_each(|x| *x /= n);
        let scale = if pair.is_multiple_of(2) { tilt_radius } else { tilt_radius / 10.0 };
        tilts.push(dir.iter().map(|x| x * scale).collect());
        if tilts.len() < num_tilts {
            tilts.push(dir.iter().map(|x| -x * scale).collect());
        }
        pair += 1;
    }

    let mut samples = Vec::with_capacity(tilts.len());
    for (index, v) in tilts.into_iter().enumerate() {
        let solve = solve_tilted_seeded(
            inst,
            xbar,
            &v,
            delta,
            FEAS_TOL,
            starts,
            derive_seed(seed, index as u64),
        )?;
        samples.push(TiltSample {
            index,
            v,
            objective_gap: solve.center_value - solve.best_value,
            diameter: solve.diameter,
            iteration_limit: solve.iteration_limit,
            solutions: solve.clusters,
            values: solve.values,
        });
    }

    let mut lip: Option<f64> = None;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let (a, b) = (&samples[i], &samples[j]);
            let (Some(xa), Some(xb)) = (a.solutions.first(), b.solutions.first()) else {
                continue;
            };
            let dv: f64 =
                a.v.iter().zip(&b.v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            if dv < 0.1 * tilt_radius {
                continue;
            }
            let dx: f64 = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let ratio = dx / dv;
            lip = Some(lip.map_or(ratio, |l| l.max(ratio)));
        }
    }
    let multiplicity_gap_max =
        samples.iter().map(|s| s.diameter).fold(0.0f64, f64::max);

    Ok(TiltProfile {
        delta,
        tilt_radius,
        seed,
        samples,
        lip_ratio_max: lip,
        multiplicity_gap_max,
    })
}

/// Movement-per-tilt ratio restricted to samples at one radius scale.
fn lip_at_scale(profile: &TiltProfile, scale: f64) -> Option<f64> {
    let mut lip: Option<f64> = None;
    for i in 0..profile.samples.len() {
        for j in (i + 1)..profile.samples.len() {
            let (a, b) = (&profile.samples[i], &profile.samples[j]);
            if norm2(&a.v) > 1.05 * scale || norm2(&b.v) > 1.05 * scale {
                continue;
            }
            let (Some(xa), Some(xb)) = (a.solutions.first(), b.solutions.first()) else {
                continue;
            };
            let dv: f64 =
                a.v.iter().zip(&b.v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            if dv < 0.1 * scale {
                continue;
            }
            let dx: f64 = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let ratio = dx / dv;
            lip = Some(lip.map_or(ratio, |l| l.max(ratio)));
        }
    }
    lip
}

/// Advisory classification of a sampled profile.
pub fn oracle_verdict(profile: &TiltProfile, thresholds: &OracleThresholds) -> OracleVerdict {
    if profile.samples.is_empty() {
        return OracleVerdict::Inconclusive;
    }
    let gap = profile.multiplicity_gap_max;

    let full = lip_at_scale(profile, profile.tilt_radius);
    let small = lip_at_scale(profile, profile.tilt_radius / 10.0);
    let diverges = match (small, full) {
        (Some(s), Some(f)) => s >= 5.0 * f && s > thresholds.lip_cap,
        _ => false,
    };
    if gap >= thresholds.jump_tol || diverges {
        return OracleVerdict::UnstableLikely;
    }
    if gap <= thresholds.gap_tol
        && profile.lip_ratio_max.is_some_and(|l| l <= thresholds.lip_cap)
    {
        return OracleVerdict::StableLikely;
    }
    OracleVerdict::Inconclusive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{primal_instance, MatrixMapping, Quadratic};
    use crate::problem::EqConstraints;

    fn e1() -> NsdpInstance {
        primal_instance(
            "e1",
            &SymMatrix::diag(&[1.0, 2.0]),
            &[SymMatrix::identity(2)],
            &[1.0],
        )
        .unwrap()
    }

    fn e2() -> NsdpInstance {
        primal_instance("e2", &SymMatrix::identity(2), &[SymMatrix::identity(2)], &[1.0]).unwrap()
    }

    fn e3() -> NsdpInstance {
        primal_instance(
            "e3",
            &SymMatrix::diag(&[0.0, 0.0, 2.0]),
            &[SymMatrix::identity(3)],
            &[1.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_tilt_on_a_vertex_optimum_gives_one_cluster() {
        let inst = e1();
        let xbar = vec![1.0, 0.0, 0.0];
        let sol = solve_tilted(&inst, &xbar, &[0.0; 3], 0.5, FEAS_TOL).unwrap();
        assert!(!sol.iteration_limit);
        assert_eq!(sol.clusters.len(), 1);
        let rep = &sol.clusters[0];
        let dist: f64 =
            rep.iter().zip(&xbar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(dist <= 1e-6, "distance {dist}");
        assert!(sol.best_value <= sol.center_value + 1e-10);
    }

    #[test]
    fn zero_tilt_on_an_optimal_face_scatters_clusters() {
        let inst = e2();
        let xbar = vec![1.0, 0.0, 0.0];
        let sol = solve_tilted(&inst, &xbar, &[0.0; 3], 1.5, FEAS_TOL).unwrap();
        assert!(sol.clusters.len() >= 2, "got {} clusters", sol.clusters.len());
        assert!(sol.diameter >= 0.3, "diameter {}", sol.diameter);
        // Every representative attains the same objective on the face.
        for v in &sol.values {
            assert!((v - 1.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn tiny_ball_keeps_solutions_near_the_base_point() {
        let inst = e1();
        let xbar = vec![1.0, 0.0, 0.0];
        let sol = solve_tilted(&inst, &xbar, &[2e-4, 0.0, -3e-4], 1e-3, FEAS_TOL).unwrap();
        for rep in &sol.clusters {
            let dist: f64 =
                rep.iter().zip(&xbar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(dist <= 1e-3 + 1e-8, "distance {dist}");
        }
    }

    #[test]
    fn recorded_solutions_are_feasible_and_never_beat_the_center_bound() {
        let inst = e3();
        let xbar = vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.0];
        let delta = default_delta(&xbar);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..6 {
            let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
            let sol = solve_tilted(&inst, &xbar, &v, delta, FEAS_TOL).unwrap();
            assert!(sol.best_value <= sol.center_value + 1e-10);
            for rep in &sol.clusters {
                assert!(inst.is_feasible(rep, 10.0 * FEAS_TOL).unwrap());
                let dist: f64 = rep
                    .iter()
                    .zip(&xbar)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist <= delta + 1e-7);
            }
        }
    }

    #[test]
    fn lifted_coordinates_reach_the_constrained_minimizer() {
        // g(x) = Diag(x1, x2): the feasible set is the nonnegative orthant,
        // and the tilted quadratic has a closed-form constrained optimum.
        let gmap = MatrixMapping::affine(
            SymMatrix::zeros(2),
            vec![
                SymMatrix::from_fn(2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 }),
                SymMatrix::from_fn(2, |i, j| if i == 1 && j == 1 { 1.0 } else { 0.0 }),
            ],
        );
        let inst = NsdpInstance {
            name: "orthant".into(),
            form: InstanceForm::Lmi,
            objective: Quadratic {
                qmat: SymMatrix::identity(2),
                cvec: vec![0.0, 0.0],
                c0: 0.0,
            },
            eq: EqConstraints::default(),
            gmap,
            dropped_rows: Vec::new(),
        };
        let xbar = vec![0.3, 0.0];
        let v = vec![0.1, -0.1];
        let sol = solve_tilted(&inst, &xbar, &v, default_delta(&xbar), FEAS_TOL).unwrap();
        assert_eq!(sol.clusters.len(), 1);
        let rep = &sol.clusters[0];
        // Unconstrained optimum of 0.5|x|^2 - <v, x - xbar> is v; the
        // orthant clips the negative coordinate.
        assert!((rep[0] - 0.1).abs() <= 1e-6, "x1 {}", rep[0]);
        assert!(rep[1].abs() <= 1e-6, "x2 {}", rep[1]);
    }

    #[test]
    fn curvature_in_the_constraint_mapping_is_rejected() {
        let mut gmap = MatrixMapping::affine(
            SymMatrix::identity(2),
            vec![SymMatrix::identity(2), SymMatrix::identity(2)],
        );
        gmap.quad = Some(vec![vec![SymMatrix::zeros(2); 2]; 2]);
        let inst = NsdpInstance {
            name: "curved".into(),
            form: InstanceForm::Lmi,
            objective: Quadratic::linear(vec![0.0, 0.0]),
            eq: EqConstraints::default(),
            gmap,
            dropped_rows: Vec::new(),
        };
        let err = solve_tilted(&inst, &[0.0, 0.0], &[0.0, 0.0], 0.5, FEAS_TOL).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFeature(_)));
    }

    #[test]
    fn profile_of_the_stable_example_reads_stable() {
        let inst = e1();
        let xbar = vec![1.0, 0.0, 0.0];
        let profile = empirical_profile(
            &inst,
            &xbar,
            0.5,
            DEFAULT_TILT_RADIUS,
            DEFAULT_TILTS,
            7,
        )
        .unwrap();
        assert!(profile.multiplicity_gap_max <= 1e-6, "gap {}", profile.multiplicity_gap_max);
        let lip = profile.lip_ratio_max.expect("pairs at the full radius exist");
        assert!(lip <= 10.0, "lip {lip}");
        assert_eq!(
            oracle_verdict(&profile, &OracleThresholds::default()),
            OracleVerdict::StableLikely
        );
    }

    #[test]
    fn profile_of_the_jumping_example_reads_unstable() {
        let inst = e3();
        let xbar = vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.0];
        let profile = empirical_profile(
            &inst,
            &xbar,
            default_delta(&xbar),
            DEFAULT_TILT_RADIUS,
            DEFAULT_TILTS,
            7,
        )
        .unwrap();
        assert!(profile.multiplicity_gap_max >= 0.5, "gap {}", profile.multiplicity_gap_max);
        assert_eq!(
            oracle_verdict(&profile, &OracleThresholds::default()),
            OracleVerdict::UnstableLikely
        );
    }

    #[test]
    fn profile_of_the_flat_example_reads_unstable_at_the_default_ball() {
        let inst = e2();
        let xbar = vec![1.0, 0.0, 0.0];
        let profile = empirical_profile(
            &inst,
            &xbar,
            default_delta(&xbar),
            DEFAULT_TILT_RADIUS,
            DEFAULT_TILTS,
            7,
        )
        .unwrap();
        assert_eq!(
            oracle_verdict(&profile, &OracleThresholds::default()),
            OracleVerdict::UnstableLikely
        );
    }

    #[test]
    fn single_tilt_profiles_report_no_ratio_and_stay_inconclusive() {
        let inst = e1();
        let xbar = vec![1.0, 0.0, 0.0];
        let profile =
            empirical_profile(&inst, &xbar, 0.5, DEFAULT_TILT_RADIUS, 1, 7).unwrap();
        assert_eq!(profile.samples.len(), 1);
        assert!(profile.lip_ratio_max.is_none());
        assert_eq!(
            oracle_verdict(&profile, &OracleThresholds::default()),
            OracleVerdict::Inconclusive
        );
    }

    #[test]
    fn profiles_are_bytewise_reproducible() {
        let inst = e1();
        let xbar = vec![1.0, 0.0, 0.0];
        let a = empirical_profile(&inst, &xbar, 0.5, 1e-3, 8, 42).unwrap();
        let b = empirical_profile(&inst, &xbar, 0.5, 1e-3, 8, 42).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().lines().count() == 9);
    }

    #[test]
    fn tilted_optimal_value_is_concave_along_segments() {
        let inst = e1();
        let xbar = vec![1.0, 0.0, 0.0];
        let delta = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let v1: Vec<f64> = (0..3).map(|_| rng.gen_range(-1e-2..1e-2)).collect();
            let v2: Vec<f64> = (0..3).map(|_| rng.gen_range(-1e-2..1e-2)).collect();
            let mid: Vec<f64> =
                v1.iter().zip(&v2).map(|(a, b)| 0.5 * (a + b)).collect();
            let f1 = solve_tilted(&inst, &xbar, &v1, delta, FEAS_TOL).unwrap().best_value;
            let f2 = solve_tilted(&inst, &xbar, &v2, delta, FEAS_TOL).unwrap().best_value;
            let fm = solve_tilted(&inst, &xbar, &mid, delta, FEAS_TOL).unwrap().best_value;
            assert!(
                fm >= 0.5 * (f1 + f2) - 1e-8,
                "midpoint {fm} below average of {f1} and {f2}"
            );
        }
    }
}
