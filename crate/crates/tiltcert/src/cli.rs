//! Command-line surface.
//!
//! Four commands over one instance file: `analyze` reports the point, the
//! index partition and the multiplier structure; `certify` runs the full
//! stability certification; `simulate` samples tilted problems and prints
//! the empirical profile; `report` merges certificate and profile with an
//! agreement flag. Runs are reproducible: every randomized search derives
//! its stream from the single configured seed, which is echoed in the
//! output envelope.

use crate::conicsolve::{solve_feasibility, AffinePsdProblem, SolveOutcome, FEAS_TOL, MAX_SWEEPS};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::problem::{load_native, load_sdpa, InstanceForm, NsdpInstance};
use crate::psdcone::classify;
use crate::symmat::{norm2, sym_dim, SymMatrix, EIGEN_TOL};
use crate::tiltcheck::{certify, CertifyPolicy, FinalVerdict, StabilityReport};
use crate::tiltsim::{
    default_delta, empirical_profile_with_starts, oracle_verdict, solve_tilted_seeded,
    OracleThresholds, OracleVerdict, TiltProfile, DEFAULT_STARTS, DEFAULT_TILTS,
    DEFAULT_TILT_RADIUS,
};
use crate::varanalysis::{
    min_rank_multiplier, multiplier_s_unique, multiplier_system, regularity_report, Multiplier,
    RankMode, SUniqueness, ThreeValued, EXACT_RANK_MAX_ORDER,
};
use crate::Tolerances;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Identifier of the JSON envelope layout, echoed in every JSON output.
pub const REPORT_SCHEMA: &str = "tiltcert-report/v1";
/// Seed used when neither `--seed` nor `TILTCERT_SEED` is given.
pub const DEFAULT_SEED: u64 = 7;

const DEFAULT_FRAMES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Certify,
    Simulate,
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Certify => "certify",
            Command::Simulate => "simulate",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointSource {
    /// JSON file holding the candidate point, either a bare array or an
    /// object with an `x` array.
    File(PathBuf),
    /// Find a minimizer with the projection solver, then re-verify
    /// stationarity before certification.
    Solve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

/// One fully resolved run: command, data sources, seed, tolerances,
/// output format and budget knobs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input: PathBuf,
    pub point: PointSource,
    pub seed: u64,
    pub tol_feas: f64,
    pub tol_witness: f64,
    pub format: OutputFormat,
    pub frames: usize,
    pub restarts: usize,
    pub tilts: usize,
    pub delta: Option<f64>,
    pub tilt_radius: f64,
    pub strict: bool,
    pub deterministic: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("--tol-feas", self.tol_feas),
            ("--tol-witness", self.tol_witness),
            ("--tilt-radius", self.tilt_radius),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if let Some(d) = self.delta {
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "--delta must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Parser)]
#[command(
    name = "tiltcert",
    version,
    about = "Certify tilt stability of minimizers of semidefinite programs"
)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report the point, index partition and multiplier structure.
    Analyze(CommonArgs),
    /// Run the stability certification and emit the report.
    Certify(CommonArgs),
    /// Sample tilted problems and emit the empirical profile.
    Simulate(CommonArgs),
    /// Merge certificate and empirical profile with an agreement flag.
    Report(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Instance file (native JSON, or SDPA sparse when the extension is
    /// .dat-s); equivalent to --input.
    positional_input: Option<PathBuf>,
    /// Instance file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Candidate point: a JSON file path, or "solve" to search for one.
    #[arg(long)]
    point: Option<String>,
    /// Base seed for every randomized search (env: TILTCERT_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Feasibility tolerance.
    #[arg(long = "tol-feas")]
    tol_feas: Option<f64>,
    /// Witness verification tolerance.
    #[arg(long = "tol-witness")]
    tol_witness: Option<f64>,
    /// Frame-search budget of the certification conditions.
    #[arg(long)]
    frames: Option<usize>,
    /// Start count per tilted solve.
    #[arg(long)]
    restarts: Option<usize>,
    /// Number of tilt samples.
    #[arg(long)]
    tilts: Option<usize>,
    /// Ball radius around the candidate point.
    #[arg(long)]
    delta: Option<f64>,
    /// Largest sampled tilt norm.
    #[arg(long = "tilt-radius")]
    tilt_radius: Option<f64>,
    /// Output format.
    #[arg(long, value_parser = ["text", "json"], default_value = "text")]
    format: String,
    /// Exit with code 2 when the verdict is UNDETERMINED.
    #[arg(long)]
    strict: bool,
    /// Omit the timestamp so identical runs print identical bytes.
    #[arg(long)]
    deterministic: bool,
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var("TILTCERT_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| {
                Error::InvalidInstance(format!(
                    "TILTCERT_SEED must be a 64-bit unsigned integer, got {text:?}"
                ))
            }),
        Err(_) => Ok(None),
    }
}

fn build_config(command: Command, a: CommonArgs) -> Result<RunConfig> {
    let input = a
        .input
        .or(a.positional_input)
        .ok_or_else(|| Error::InvalidInstance("an instance file is required".into()))?;
    let point = match a.point.as_deref() {
        None | Some("solve") => PointSource::Solve,
        Some(path) => PointSource::File(PathBuf::from(path)),
    };
    let seed = match a.seed {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(DEFAULT_SEED),
    };
    let format = if a.format == "json" { OutputFormat::Json } else { OutputFormat::Text };
    let config = RunConfig {
        command,
        input,
        point,
        seed,
        tol_feas: a.tol_feas.unwrap_or(FEAS_TOL),
        tol_witness: a.tol_witness.unwrap_or(Tolerances::default().witness),
        format,
        frames: a.frames.unwrap_or(DEFAULT_FRAMES),
        restarts: a.restarts.unwrap_or(DEFAULT_STARTS),
        tilts: a.tilts.unwrap_or(DEFAULT_TILTS),
        delta: a.delta,
        tilt_radius: a.tilt_radius.unwrap_or(DEFAULT_TILT_RADIUS),
        strict: a.strict,
        deterministic: a.deterministic,
    };
    config.validate()?;
    Ok(config)
}

/// Parses the process arguments and runs the command.
pub fn run_from_args() -> i32 {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let (command, common) = match args.command {
        Cmd::Analyze(c) => (Command::Analyze, c),
        Cmd::Certify(c) => (Command::Certify, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    let format =
        if common.format == "json" { OutputFormat::Json } else { OutputFormat::Text };
    match build_config(command, common) {
        Ok(config) => run(&config),
        Err(e) => {
            emit_error(&e, format);
            1
        }
    }
}

/// Runs one configured command, printing its output; returns the exit code.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(outcome) => {
            println!("{}", outcome.stdout.trim_end());
            outcome.exit_code
        }
        Err(e) => {
            emit_error(&e, config.format);
            1
        }
    }
}

fn emit_error(e: &Error, format: OutputFormat) {
    match format {
        OutputFormat::Text => eprintln!("error: {e}"),
        OutputFormat::Json => {
            let value = json!({
                "schema": REPORT_SCHEMA,
                "error": { "code": error_code(e), "message": format!("{e}") },
            });
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
        }
    }
}

/// Stable machine-readable code per error variant.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::NumericalFailure { .. } => "numerical_failure",
        Error::NonCommuting { .. } => "non_commuting",
        Error::DimensionMismatch(_) => "dimension_mismatch",
        Error::NotPsd(_) => "not_psd",
        Error::NotComplementary(_) => "not_complementary",
        Error::NotCritical(_) => "not_critical",
        Error::InfeasiblePoint(_) => "infeasible_point",
        Error::NotStationary(_) => "not_stationary",
        Error::HessianNotPsd(_) => "hessian_not_psd",
        Error::Parse { .. } => "parse_error",
        Error::UnsupportedFeature(_) => "unsupported_feature",
        Error::BudgetExceeded(_) => "budget_exceeded",
        Error::InvalidInstance(_) => "invalid_instance",
        Error::Io(_) => "io_error",
        Error::Json(_) => "json_error",
    }
}

/// Output of one executed command.
#[derive(Debug)]
pub struct RunOutcome {
    pub stdout: String,
    pub exit_code: i32,
}

/// Executes the command described by `config` without touching the process
/// environment; the caller prints `stdout` and uses the exit code.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let inst = load_instance(&config.input)?;
    let (x, point_desc) = resolve_point(config, &inst)?;

    match config.command {
        Command::Analyze => analyze_command(config, &inst, &x, &point_desc),
        Command::Certify => {
            let report = certify_point(config, &inst, &x)?;
            let exit_code = verdict_exit(config, report.final_verdict);
            let stdout = match config.format {
                OutputFormat::Text => report.to_text(),
                OutputFormat::Json => {
                    let mut envelope = meta(config, &inst, &point_desc);
                    merge(
                        &mut envelope,
                        json!({
                            "final": report.final_verdict,
                            "report": serde_json::to_value(&report)?,
                        }),
                    );
                    serde_json::to_string_pretty(&envelope)?
                }
            };
            Ok(RunOutcome { stdout, exit_code })
        }
        Command::Simulate => {
            let profile = simulate_point(config, &inst, &x)?;
            let oracle = oracle_verdict(&profile, &OracleThresholds::default());
            let stdout = match config.format {
                OutputFormat::Text => {
                    format!("{}\n{}", profile.to_csv(), profile_summary_text(&profile, oracle))
                }
                OutputFormat::Json => {
                    let mut envelope = meta(config, &inst, &point_desc);
                    merge(
                        &mut envelope,
                        json!({
                            "oracle": oracle,
                            "profile": serde_json::to_value(&profile)?,
                        }),
                    );
                    serde_json::to_string_pretty(&envelope)?
                }
            };
            Ok(RunOutcome { stdout, exit_code: 0 })
        }
        Command::Report => {
            let report = certify_point(config, &inst, &x)?;
            let profile = simulate_point(config, &inst, &x)?;
            let oracle = oracle_verdict(&profile, &OracleThresholds::default());
            let agreement = agreement_flag(report.final_verdict, oracle);
            let exit_code = verdict_exit(config, report.final_verdict);
            let stdout = match config.format {
                OutputFormat::Text => format!(
                    "{}\n{}\nagreement: {agreement}",
                    report.to_text(),
                    profile_summary_text(&profile, oracle)
                ),
                OutputFormat::Json => {
                    let mut envelope = meta(config, &inst, &point_desc);
                    merge(
                        &mut envelope,
                        json!({
                            "final": report.final_verdict,
                            "certificate": serde_json::to_value(&report)?,
                            "oracle": oracle,
                            "agreement": agreement,
                            "profile": serde_json::to_value(&profile)?,
                        }),
                    );
                    serde_json::to_string_pretty(&envelope)?
                }
            };
            Ok(RunOutcome { stdout, exit_code })
        }
    }
}

fn verdict_exit(config: &RunConfig, verdict: FinalVerdict) -> i32 {
    if config.strict && verdict == FinalVerdict::Undetermined {
        2
    } else {
        0
    }
}

/// Certifier and sampler must point at each other for `report` to make
/// sense, so both read the same config.
fn certify_point(config: &RunConfig, inst: &NsdpInstance, x: &[f64]) -> Result<StabilityReport> {
    let policy = CertifyPolicy {
        seed: config.seed,
        restarts: config.frames,
        tols: Tolerances {
            feas: config.tol_feas,
            witness: config.tol_witness,
            ..Tolerances::default()
        },
        ..CertifyPolicy::default()
    };
    certify(inst, x, &policy)
}

fn simulate_point(config: &RunConfig, inst: &NsdpInstance, x: &[f64]) -> Result<TiltProfile> {
    let delta = config.delta.unwrap_or_else(|| default_delta(x));
    empirical_profile_with_starts(
        inst,
        x,
        delta,
        config.tilt_radius,
        config.tilts,
        config.restarts.max(1),
        config.seed,
    )
}

fn profile_summary_text(profile: &TiltProfile, oracle: OracleVerdict) -> String {
    let lip = match profile.lip_ratio_max {
        Some(l) => format!("{l:.6e}"),
        None => "not applicable".to_string(),
    };
    let limited = profile.samples.iter().filter(|s| s.iteration_limit).count();
    format!(
        "samples: {} (iteration-limited: {limited})\n\
         delta: {:.6e}\ntilt radius: {:.6e}\nseed: {}\n\
         multiplicity gap max: {:.6e}\nlip ratio max: {lip}\noracle: {oracle:?}",
        profile.samples.len(),
        profile.delta,
        profile.tilt_radius,
        profile.seed,
        profile.multiplicity_gap_max,
    )
}

fn agreement_flag(verdict: FinalVerdict, oracle: OracleVerdict) -> &'static str {
    match (verdict, oracle) {
        (FinalVerdict::TiltStableCertified, OracleVerdict::StableLikely) => "agree",
        (FinalVerdict::TiltStableCertified, OracleVerdict::UnstableLikely) => "disagree",
        (FinalVerdict::NotTiltStableCertified, OracleVerdict::UnstableLikely) => "agree",
        (FinalVerdict::NotTiltStableCertified, OracleVerdict::StableLikely) => "disagree",
        _ => "uninformative",
    }
}

fn meta(config: &RunConfig, inst: &NsdpInstance, point_desc: &str) -> Value {
    let mut value = json!({
        "schema": REPORT_SCHEMA,
        "command": config.command.name(),
        "instance": inst.name,
        "input": config.input.to_string_lossy(),
        "point_source": point_desc,
        "seed": config.seed,
        "objective_model": "quadratic",
    });
    if !config.deterministic {
        if let Ok(now) = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
            merge(&mut value, json!({ "generated_at_unix": now.as_secs() }));
        }
    }
    value
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        for (k, v) in b {
            a.insert(k, v);
        }
    }
}

fn load_instance(path: &Path) -> Result<NsdpInstance> {
    if !path.exists() {
        return Err(Error::InvalidInstance(format!(
            "instance file {} does not exist",
            path.display()
        )));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("dat-s") || ext.eq_ignore_ascii_case("dats") {
        load_sdpa(path)
    } else {
        load_native(path)
    }
}

fn parse_point_file(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let arr = match &value {
        Value::Array(_) => Some(value.clone()),
        Value::Object(map) => map.get("x").cloned(),
        _ => None,
    };
    let x: Vec<f64> = match arr {
        Some(a) => serde_json::from_value(a)?,
        None => {
            return Err(Error::InvalidInstance(format!(
                "point file {} must be a JSON array or an object with an \"x\" array",
                path.display()
            )))
        }
    };
    if x.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "point has length {} but the instance has {} variables",
            x.len(),
            dim
        )));
    }
    Ok(x)
}

fn resolve_point(config: &RunConfig, inst: &NsdpInstance) -> Result<(Vec<f64>, String)> {
    match &config.point {
        PointSource::File(path) => {
            let x = parse_point_file(path, inst.var_dim())?;
            Ok((x, format!("file:{}", path.display())))
        }
        PointSource::Solve => {
            let x = solve_for_minimizer(inst, config.seed, config.tol_feas)?;
            if matches!(config.command, Command::Certify | Command::Report) {
                verify_stationary(inst, &x, config.tol_feas)?;
            }
            Ok((x, "solve".to_string()))
        }
    }
}

/// A solved-for candidate only enters certification once a multiplier
/// exists at it.
fn verify_stationary(inst: &NsdpInstance, x: &[f64], tol: f64) -> Result<()> {
    let report = inst.evaluate(x)?;
    let tols = Tolerances { feas: tol, ..Tolerances::default() };
    let sys = multiplier_system(inst, x, &report.vstar, &tols)?;
    match sys.any_multiplier(tol)? {
        Some(_) => Ok(()),
        None => Err(Error::NotStationary(
            "the solved point admits no multiplier; it is not a stationary point".into(),
        )),
    }
}

/// Finds a minimizer of the instance: a feasible point from alternating
/// projections, then re-centred ball-constrained descent, then a tight
/// local refinement so active eigenvalues are resolved to well below the
/// rank tolerance.
fn solve_for_minimizer(inst: &NsdpInstance, seed: u64, tol: f64) -> Result<Vec<f64>> {
    if !inst.gmap.is_affine() {
        return Err(Error::UnsupportedFeature(
            "solving for a candidate point handles affine constraint mappings only".into(),
        ));
    }
    let d = inst.var_dim();
    let n = inst.matrix_order();
    let primal = inst.form == InstanceForm::Primal;

    let problem = if primal {
        AffinePsdProblem {
            free_dim: 0,
            psd_blocks: vec![n],
            eq_rows: inst.eq.rows.clone(),
            eq_rhs: inst.eq.rhs.clone(),
            objective: None,
            ball_radius: None,
        }
    } else {
        let sdim = sym_dim(n);
        let jac: Vec<Vec<f64>> = inst
            .gmap
            .jac_matrices(&vec![0.0; d])
            .iter()
            .map(|g| g.to_svec())
            .collect();
        let g0 = inst.gmap.g0.to_svec();
        let mut rows = Vec::with_capacity(inst.eq.len() + sdim);
        let mut rhs = Vec::with_capacity(inst.eq.len() + sdim);
        for (row, &b) in inst.eq.rows.iter().zip(&inst.eq.rhs) {
            let mut r = vec![0.0; d + sdim];
            r[..d].copy_from_slice(row);
            rows.push(r);
            rhs.push(b);
        }
        for k in 0..sdim {
            let mut r = vec![0.0; d + sdim];
            for (i, ji) in jac.iter().enumerate() {
                r[i] = -ji[k];
            }
            r[d + k] = 1.0;
            rows.push(r);
            rhs.push(g0[k]);
        }
        AffinePsdProblem {
            free_dim: d,
            psd_blocks: vec![n],
            eq_rows: rows,
            eq_rhs: rhs,
            objective: None,
            ball_radius: None,
        }
    };

    let mut x = match solve_feasibility(&problem, tol, MAX_SWEEPS)? {
        SolveOutcome::Feasible { point } => point[..d].to_vec(),
        SolveOutcome::Infeasible { affine_value, cone_value, .. } => {
            return Err(Error::InfeasiblePoint(format!(
                "the instance has no feasible point: affine defect {affine_value:.3e}, \
                 cone defect {cone_value:.3e}"
            )));
        }
        _ => {
            return Err(Error::NumericalFailure {
                context: "feasibility search exhausted its sweep budget".into(),
                residual: f64::NAN,
            })
        }
    };

    let zero_objective =
        inst.objective.qmat.norm_max() == 0.0 && inst.objective.cvec.iter().all(|&c| c == 0.0);
    if zero_objective {
        return Ok(x);
    }

    let zeros = vec![0.0; d];
    for round in 0..10u64 {
        let delta = 1.0 + norm2(&x);
        let sol = solve_tilted_seeded(
            inst,
            &x,
            &zeros,
            delta,
            tol,
            DEFAULT_STARTS,
            derive_seed(seed, 7_000 + round),
        )?;
        let Some(best) = sol.clusters.first() else { break };
        let moved: f64 =
            best.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        x = best.clone();
        if moved <= 1e-8 * (1.0 + norm2(&x)) {
            break;
        }
    }

    // Local refinement in a small ball with tight projections; leaves the
    // point unchanged when the refinement fails to converge cleanly.
    let refine = solve_tilted_seeded(
        inst,
        &x,
        &zeros,
        1e-3 * (1.0 + norm2(&x)),
        1e-11,
        1,
        derive_seed(seed, 7_999),
    );
    if let Ok(sol) = refine {
        if !sol.iteration_limit {
            if let Some(best) = sol.clusters.first() {
                x = best.clone();
            }
        }
    }
    Ok(x)
}

fn three_valued_str(v: ThreeValued) -> &'static str {
    match v {
        ThreeValued::Holds => "holds",
        ThreeValued::Fails => "fails",
        ThreeValued::Inconclusive => "inconclusive",
    }
}

struct MultiplierAnalysis {
    chosen: Multiplier,
    s_rank: usize,
    rank_mode: &'static str,
    rank_pattern: Option<Vec<usize>>,
    trace_value: Option<f64>,
    uniqueness: &'static str,
    max_spread: f64,
}

fn analyze_multiplier(
    inst: &NsdpInstance,
    x: &[f64],
    vstar: &[f64],
    config: &RunConfig,
    tols: &Tolerances,
) -> Result<Option<MultiplierAnalysis>> {
    let sys = multiplier_system(inst, x, vstar, tols)?;
    if sys.any_multiplier(config.tol_feas)?.is_none() {
        return Ok(None);
    }
    let mode = if sys.kernel_order <= EXACT_RANK_MAX_ORDER {
        RankMode::Exact
    } else {
        RankMode::TraceHeuristic
    };
    let rank = min_rank_multiplier(&sys, mode)?;
    let uniqueness = multiplier_s_unique(&sys, 12, derive_seed(config.seed, 11))?;
    let (uniq_str, spread, chosen) = match uniqueness {
        SUniqueness::UniqueS { multiplier, max_spread } => ("unique", max_spread, multiplier),
        SUniqueness::NotUnique { spread, .. } => ("not_unique", spread, rank.multiplier.clone()),
        SUniqueness::Inconclusive { max_spread } => {
            ("inconclusive", max_spread, rank.multiplier.clone())
        }
    };
    Ok(Some(MultiplierAnalysis {
        chosen,
        s_rank: rank.rank,
        rank_mode: match rank.mode {
            RankMode::Exact => "exact",
            RankMode::TraceHeuristic => "trace_heuristic",
        },
        rank_pattern: rank.pattern,
        trace_value: rank.trace_value,
        uniqueness: uniq_str,
        max_spread: spread,
    }))
}

fn analyze_command(
    config: &RunConfig,
    inst: &NsdpInstance,
    x: &[f64],
    point_desc: &str,
) -> Result<RunOutcome> {
    let report = inst.evaluate(x)?;
    let tols = Tolerances {
        feas: config.tol_feas,
        witness: config.tol_witness,
        ..Tolerances::default()
    };
    let analysis = analyze_multiplier(inst, x, &report.vstar, config, &tols)?;
    let stationary = analysis.is_some();

    let gx = inst.gmap.eval(x);
    let smat = match &analysis {
        Some(a) => a.chosen.smat.clone(),
        None => SymMatrix::zeros(gx.dim()),
    };
    let pair = classify(&gx, &smat, EIGEN_TOL)?;
    let regularity = match &analysis {
        Some(a) => Some(regularity_report(inst, x, &a.chosen.smat, &tols)?),
        None => None,
    };

    let stdout = match config.format {
        OutputFormat::Json => {
            let mut envelope = meta(config, inst, point_desc);
            let multiplier_value = match &analysis {
                Some(a) => json!({
                    "y": a.chosen.y,
                    "s_eigvals": pair.eigvals_s,
                    "s_rank": a.s_rank,
                    "rank_mode": a.rank_mode,
                    "rank_pattern": a.rank_pattern,
                    "trace_value": a.trace_value,
                    "uniqueness": a.uniqueness,
                    "max_spread": a.max_spread,
                }),
                None => Value::Null,
            };
            let regularity_value = match &regularity {
                Some(r) => json!({
                    "slater": r.slater.holds,
                    "slater_best_min_eig": r.slater.best_min_eig,
                    "metrically_regular": three_valued_str(r.metrically_regular),
                    "multiplier_map_locally_bounded": three_valued_str(r.m_locally_bounded),
                    "condition_a": r.condition_a,
                    "condition_b": r.condition_b,
                    "kstar_in_range": r.kstar_in_range,
                    "b_injective": r.b_injective,
                }),
                None => Value::Null,
            };
            merge(
                &mut envelope,
                json!({
                    "point": x,
                    "objective_value": inst.objective.value(x),
                    "equality_residual": report.eq_residual,
                    "cone_residual": report.psd_residual,
                    "gradient": report.grad,
                    "vstar": report.vstar,
                    "stationary": stationary,
                    "partition": {
                        "alpha": pair.partition.alpha,
                        "beta": pair.partition.beta,
                        "gamma": pair.partition.gamma,
                        "clusters_simple": pair.partition.all_clusters_simple(),
                    },
                    "eigenvalues_x": pair.eigvals_x,
                    "eigenvalues_s": pair.eigvals_s,
                    "multiplier": multiplier_value,
                }),
            );
            merge(&mut envelope, json!({ "regularity": regularity_value }));
            serde_json::to_string_pretty(&envelope)?
        }
        OutputFormat::Text => {
            let mut out = String::new();
            let mut line = |s: String| {
                out.push_str(&s);
                out.push('\n');
            };
            line(format!(
                "instance: {} ({} variables, matrices of order {})",
                inst.name,
                inst.var_dim(),
                inst.matrix_order()
            ));
            line(format!("point source: {point_desc} (seed {})", config.seed));
            line(format!("x: {x:?}"));
            line(format!("objective value: {:.12e}", inst.objective.value(x)));
            line(format!(
                "equality residual: {:.3e}, cone residual: {:.3e}",
                report.eq_residual, report.psd_residual
            ));
            line(format!("gradient: {:?}", report.grad));
            line(format!("tilt target v*: {:?}", report.vstar));
            line(format!("stationary: {}", if stationary { "yes" } else { "no" }));
            line(format!(
                "index partition: alpha {:?}, beta {:?}, gamma {:?} (simple clusters: {})",
                pair.partition.alpha,
                pair.partition.beta,
                pair.partition.gamma,
                pair.partition.all_clusters_simple()
            ));
            line(format!("eigenvalues of g(x): {:?}", pair.eigvals_x));
            line(format!("eigenvalues of S: {:?}", pair.eigvals_s));
            match &analysis {
                Some(a) => {
                    line(format!("multiplier y: {:?}", a.chosen.y));
                    line(format!(
                        "multiplier S rank: {} ({}), uniqueness: {} (spread {:.3e})",
                        a.s_rank, a.rank_mode, a.uniqueness, a.max_spread
                    ));
                }
                None => line("no multiplier exists at this point".to_string()),
            }
            if let Some(r) = &regularity {
                line(format!(
                    "slater: {}, metrically regular: {}, multiplier map locally bounded: {}",
                    if r.slater.holds { "holds" } else { "fails" },
                    three_valued_str(r.metrically_regular),
                    three_valued_str(r.m_locally_bounded)
                ));
                line(format!(
                    "condition (A): {:?}, condition (B): {:?}, critical span in range: {:?}, \
                     derivative injective: {:?}",
                    r.condition_a, r.condition_b, r.kstar_in_range, r.b_injective
                ));
            }
            out
        }
    };
    Ok(RunOutcome { stdout, exit_code: 0 })
}
