//! Command driver shared by the `yo` binary and the Python bindings.
//!
//! Every command writes `result.json` (deterministic for a fixed config) and
//! `timing.json` (wall-clock only) into `out_dir`. Exit status: 0 on success,
//! 2 when a named check fails or an iterative solver gives up, 1 on input errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::{Dimension, EnergyForm, BoundaryStructure};
use crate::bubbles::{sharp_constant, verify_bubble, BubbleParams, BubbleReport};
use crate::error::{Result, YoError};
use crate::fem::{assemble, build_ball_mesh, MetricData, SimplicialMesh};
use crate::functionals::{check_p, minimize, MinimizeOptions, MinimizeTrace, QuotientReport, StopReason};
use crate::io::{convergence_rows, emit_report, fmt_g17, read_mesh, write_mesh, ConvergenceRow};
use crate::lemmas::{run_suite, LemmaSuite, SuiteConfig};
use crate::obstacle::{fixed_point_distance, obstacle_map, ObstacleOptions, SolverMethod};
use crate::synthetic::{admissible_field, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenMesh,
    SolveObstacle,
    Minimize,
    VerifyLemmas,
    Bubble,
    Sweep,
    Report,
}

/// Exponent selector; `critical` means `p = 2# - 1 = n / (n - 2)` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PSpec {
    Critical,
    Value(f64),
}

impl PSpec {
    pub fn resolve(self, n: u32) -> Result<f64> {
        let dim = Dimension::new(n)?;
        let p = match self {
            PSpec::Critical => dim.critical_p(),
            PSpec::Value(p) => p,
        };
        check_p(dim, p)?;
        Ok(p)
    }
}

impl fmt::Display for PSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PSpec::Critical => f.write_str("critical"),
            PSpec::Value(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for PSpec {
    type Err = YoError;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("critical") {
            return Ok(PSpec::Critical);
        }
        s.parse::<f64>()
            .map(PSpec::Value)
            .map_err(|_| YoError::Input(format!("p must be a number or `critical`, got `{s}`")))
    }
}

impl Serialize for PSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PSpec::Critical => s.serialize_str("critical"),
            PSpec::Value(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for PSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(PSpec::Value(p)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Initial state for `minimize` and `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// `u = 1`, the round metric.
    Constant,
    /// `u = 1 + 0.2 xi` with seeded `xi` uniform in `[-1, 1]`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub n: u32,
    pub p: PSpec,
    pub refinement: u32,
    pub tol: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mesh_path: Option<PathBuf>,
    /// verify-lemmas: largest instance size and number of seeds.
    pub dim: usize,
    pub seeds: u64,
    /// minimize / sweep.
    pub init: InitKind,
    pub max_iters: usize,
    /// sweep: refinement levels.
    pub levels: Vec<u32>,
    /// bubble: pole distance from the origin and bubble scale.
    pub pole_radius: f64,
    pub scale: f64,
    /// report: directory holding `level_*/result.json` (defaults to `out_dir`).
    pub input_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            n: 3,
            p: PSpec::Critical,
            refinement: 3,
            tol: 1e-10,
            seed: 0,
            out_dir: out_dir.into(),
            mesh_path: None,
            dim: 40,
            seeds: 1000,
            init: InitKind::Constant,
            max_iters: 5000,
            levels: vec![2, 3, 4],
            pole_radius: 5.0,
            scale: 1.0,
            input_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(YoError::Input(format!("tol must be positive, got {}", self.tol)));
        }
        self.p.resolve(self.n)?;
        if self.dim < 2 {
            return Err(YoError::Input("dim must be at least 2".into()));
        }
        if self.command == Command::Sweep && self.levels.is_empty() {
            return Err(YoError::Input("sweep needs at least one level".into()));
        }
        if !(self.scale > 0.0) {
            return Err(YoError::Input(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.pole_radius >= 1.0 + crate::bubbles::POLE_MARGIN) {
            return Err(YoError::Input(format!("pole radius must exceed 1, got {}", self.pole_radius)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub package: String,
    pub version: String,
    pub git_rev: String,
}

impl BuildInfo {
    pub fn current() -> Self {
        BuildInfo {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_rev: option_env!("YO_GIT_REV").unwrap_or("unknown").into(),
        }
    }
}

/// A numeric claim with the tolerance it was tested at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `upper`: pass iff value <= tolerance; `lower`: pass iff value >= tolerance.
    pub bound: String,
    pub passed: bool,
}

impl NamedCheck {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        NamedCheck {
            name: name.into(),
            value,
            tolerance,
            bound: "upper".into(),
            passed: value <= tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        NamedCheck {
            name: name.into(),
            value,
            tolerance,
            bound: "lower".into(),
            passed: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub level: Option<u32>,
    pub vertices: usize,
    pub cells: usize,
    pub boundary_vertices: usize,
    pub h: f64,
    pub volume: f64,
    pub boundary_area: f64,
}

impl MeshStats {
    fn of(mesh: &SimplicialMesh, level: Option<u32>) -> Self {
        MeshStats {
            level,
            vertices: mesh.num_vertices(),
            cells: mesh.cells().len(),
            boundary_vertices: mesh.boundary_vertices().len(),
            h: mesh.h(),
            volume: mesh.volume(),
            boundary_area: mesh.boundary_area(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSummary {
    pub dofs: usize,
    pub active: usize,
    pub active_boundary: usize,
    pub interior_zeros: usize,
    pub energy: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub method: SolverMethod,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeSummary {
    pub converged: bool,
    pub stop_reason: StopReason,
    pub accepted_steps: usize,
    pub initial_e: f64,
    pub final_gradient_norm: f64,
    pub tol: f64,
    pub grad_tol: f64,
}

impl MinimizeSummary {
    fn of(trace: &MinimizeTrace, opts: &MinimizeOptions) -> Self {
        MinimizeSummary {
            converged: trace.converged,
            stop_reason: trace.stop_reason,
            accepted_steps: trace.accepted_steps(),
            initial_e: trace.iterates[0].e_value,
            final_gradient_norm: trace.iterates.last().map_or(0.0, |r| r.gradient_norm),
            tol: opts.tol,
            grad_tol: opts.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleEntry {
    pub pole: [f64; 3],
    pub scale: f64,
    pub report: BubbleReport,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: RunConfig,
    pub build: BuildInfo,
    pub passed: bool,
    pub checks: Vec<NamedCheck>,
    pub mesh: Option<MeshStats>,
    pub quotient: Option<QuotientReport>,
    pub minimize: Option<MinimizeSummary>,
    pub obstacle: Option<ObstacleSummary>,
    pub convergence: Vec<ConvergenceRow>,
    pub lemmas: Option<LemmaSuite>,
    pub bubbles: Vec<BubbleEntry>,
}

impl ResultRecord {
    fn new(config: &RunConfig) -> Self {
        ResultRecord {
            config: config.clone(),
            build: BuildInfo::current(),
            passed: true,
            checks: Vec::new(),
            mesh: None,
            quotient: None,
            minimize: None,
            obstacle: None,
            convergence: Vec::new(),
            lemmas: None,
            bubbles: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.checks.iter().all(|c| c.passed) && self.lemmas.as_ref().is_none_or(|l| l.passed);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub record: Option<ResultRecord>,
    /// Human-readable diagnostic for non-zero exits.
    pub message: Option<String>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Exit code for an error escaping a command.
pub fn exit_code_for(err: &YoError) -> i32 {
    match err {
        YoError::Solver { .. } => EXIT_VIOLATION,
        _ => EXIT_INPUT,
    }
}

/// Runs one command, writing its outputs; never panics on bad input.
pub fn run(config: &RunConfig) -> RunOutcome {
    let start = Instant::now();
    let result = config.validate().and_then(|_| dispatch(config));
    match result {
        Ok(record) => {
            let written = write_json(&config.out_dir.join("result.json"), &record).and_then(|_| {
                let timing = serde_json::json!({ "command": config.command, "wall_seconds": start.elapsed().as_secs_f64() });
                write_json(&config.out_dir.join("timing.json"), &timing)
            });
            if let Err(e) = written {
                return RunOutcome {
                    exit_code: EXIT_INPUT,
                    record: Some(record),
                    message: Some(e.to_string()),
                };
            }
            let failed: Vec<String> = record
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.clone())
                .chain(record.lemmas.iter().flat_map(|l| l.failed().map(|c| format!("{:?}", c.name))))
                .collect();
            RunOutcome {
                exit_code: if record.passed { EXIT_OK } else { EXIT_VIOLATION },
                message: (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", "))),
                record: Some(record),
            }
        }
        Err(e) => RunOutcome {
            exit_code: exit_code_for(&e),
            record: None,
            message: Some(e.to_string()),
        },
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| YoError::Input(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn dispatch(config: &RunConfig) -> Result<ResultRecord> {
    let record = match config.command {
        Command::GenMesh => gen_mesh(config),
        Command::SolveObstacle => solve_obstacle_cmd(config),
        Command::Minimize => minimize_cmd(config, config.refinement, &config.out_dir),
        Command::VerifyLemmas => verify_lemmas(config),
        Command::Bubble => bubble_cmd(config),
        Command::Sweep => sweep(config),
        Command::Report => report(config),
    }?;
    Ok(record.finish())
}

/// The mesh named by `mesh_path`, or the ball at `level`.
fn load_mesh(config: &RunConfig, level: u32) -> Result<(SimplicialMesh, Option<u32>)> {
    match &config.mesh_path {
        Some(p) => Ok((read_mesh(p)?, None)),
        None => Ok((build_ball_mesh(level)?, Some(level))),
    }
}

fn flat_system(mesh: &SimplicialMesh, n: u32) -> Result<(EnergyForm, BoundaryStructure)> {
    assemble(mesh, &MetricData::flat_ball(mesh), n)
}

fn gen_mesh(config: &RunConfig) -> Result<ResultRecord> {
    let (mesh, level) = load_mesh(config, config.refinement)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let name = match level {
        Some(l) => format!("mesh_L{l}.json"),
        None => "mesh.json".into(),
    };
    write_mesh(&config.out_dir.join(name), &mesh)?;
    let mut rec = ResultRecord::new(config);
    rec.checks.push(NamedCheck::at_most("sphere-deviation", mesh.sphere_deviation(), 1e-12));
    rec.mesh = Some(MeshStats::of(&mesh, level));
    Ok(rec)
}

fn solve_obstacle_cmd(config: &RunConfig) -> Result<ResultRecord> {
    let (mesh, level) = load_mesh(config, config.refinement)?;
    let (form, bs) = flat_system(&mesh, config.n)?;
    let u = admissible_field(&mut rng(config.seed), &bs);
    let opts = ObstacleOptions::with_tol(config.tol);
    let sol = obstacle_map(&form, &bs, &u, &opts)?;
    let again = fixed_point_distance(&form, &bs, &sol.state, config.tol, &opts)?;
    let mut rec = ResultRecord::new(config);
    rec.checks.push(NamedCheck::at_most("kkt-residual", sol.kkt_residual, config.tol));
    rec.checks.push(NamedCheck::at_most("idempotency", again.distance, 1e-8));
    rec.obstacle = Some(ObstacleSummary {
        dofs: form.size(),
        active: sol.active_set.len(),
        active_boundary: sol.active_set.iter().filter(|&&i| bs.is_boundary(i)).count(),
        interior_zeros: bs.interior_zeros(&sol.state).len(),
        energy: sol.energy,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        method: sol.method,
        tol: config.tol,
    });
    rec.mesh = Some(MeshStats::of(&mesh, level));
    Ok(rec)
}

fn initial_state(config: &RunConfig, mesh: &SimplicialMesh) -> Vec<f64> {
    match config.init {
        InitKind::Constant => vec![1.0; mesh.num_vertices()],
        InitKind::Random => {
            let mut r = rng(config.seed);
            (0..mesh.num_vertices()).map(|_| 1.0 + 0.2 * r.random_range(-1.0..1.0)).collect()
        }
    }
}

/// Tolerance on `|mu - mu_oc| / mu`.
pub const MU_AGREEMENT_TOL: f64 = 1e-6;
/// Fixed-point distance required at the end of a converged run.
pub const FIXED_POINT_TOL: f64 = 1e-6;

fn minimize_cmd(config: &RunConfig, level: u32, out_dir: &Path) -> Result<ResultRecord> {
    let (mesh, level) = load_mesh(config, level)?;
    let (form, bs) = flat_system(&mesh, config.n)?;
    let p = config.p.resolve(config.n)?;
    let opts = MinimizeOptions {
        max_iters: config.max_iters,
        obstacle: ObstacleOptions::with_tol(config.tol),
        ..Default::default()
    };
    let (trace, mut quotient) = minimize(&form, &bs, p, &initial_state(config, &mesh), &opts)?;
    quotient.refinement = level;
    let mut rec = ResultRecord::new(config);
    let mu = quotient.mu_estimate;
    rec.checks.push(NamedCheck::at_most(
        "mu-oc-agreement",
        (mu - quotient.mu_oc_estimate).abs() / mu,
        MU_AGREEMENT_TOL,
    ));
    if trace.converged {
        rec.checks
            .push(NamedCheck::at_most("fixed-point", quotient.fixed_point_distance, FIXED_POINT_TOL));
    }
    let stats = MeshStats::of(&mesh, level);
    if p == Dimension::new(config.n)?.critical_p() {
        let sharp = sharp_constant(config.n)?;
        rec.convergence = convergence_rows(
            &[(level.unwrap_or(0), stats.h, quotient.e_value, quotient.i_value, mu)],
            sharp,
        );
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("trace.csv"), trace_csv(&trace))?;
    rec.minimize = Some(MinimizeSummary::of(&trace, &opts));
    rec.quotient = Some(quotient);
    rec.mesh = Some(stats);
    Ok(rec)
}

fn trace_csv(trace: &MinimizeTrace) -> String {
    let mut out = String::from("iterate,E_value,I_value,gradient_norm,step_size,fixed_point_distance\n");
    for (k, r) in trace.iterates.iter().enumerate() {
        out += &format!(
            "{k},{},{},{},{},{}\n",
            fmt_g17(r.e_value),
            fmt_g17(r.i_value),
            fmt_g17(r.gradient_norm),
            fmt_g17(r.step_size),
            fmt_g17(r.fixed_point_distance)
        );
    }
    out
}

fn verify_lemmas(config: &RunConfig) -> Result<ResultRecord> {
    let cfg = SuiteConfig {
        first_seed: config.seed,
        seeds: config.seeds,
        max_size: config.dim,
        oracle_max_size: config.dim.min(10),
        grad_max_size: config.dim.min(20),
        ..Default::default()
    };
    let mut rec = ResultRecord::new(config);
    rec.lemmas = Some(run_suite(&cfg));
    Ok(rec)
}

/// Unit directions used for bubble poles.
pub const POLE_DIRECTIONS: [[f64; 3]; 5] = [
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.577_350_269_189_625_8, 0.577_350_269_189_625_8, 0.577_350_269_189_625_8],
    [0.0, 0.6, -0.8],
];

pub const BUBBLE_CONSTANT_TOL: f64 = 0.05;
pub const BUBBLE_FIXED_POINT_TOL: f64 = 1e-3;
pub const BUBBLE_SPREAD_TOL: f64 = 0.01;

/// Verifies the bubbles with poles `radius * d` for each of [`POLE_DIRECTIONS`].
pub fn bubble_family(
    mesh: &SimplicialMesh,
    form: &EnergyForm,
    bs: &BoundaryStructure,
    radius: f64,
    scale: f64,
    tol: f64,
) -> Result<Vec<BubbleEntry>> {
    POLE_DIRECTIONS
        .iter()
        .map(|d| {
            let pole = [radius * d[0], radius * d[1], radius * d[2]];
            let params = BubbleParams::new(pole, scale)?;
            Ok(BubbleEntry {
                pole,
                scale,
                report: verify_bubble(mesh, form, bs, &params, tol)?,
            })
        })
        .collect()
}

/// `(max - min) / mean` of the bubble energies.
pub fn energy_spread(entries: &[BubbleEntry]) -> f64 {
    let e: Vec<f64> = entries.iter().map(|b| b.report.e_value).collect();
    let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    (hi - lo) / (e.iter().sum::<f64>() / e.len() as f64)
}

fn bubble_cmd(config: &RunConfig) -> Result<ResultRecord> {
    let (mesh, level) = load_mesh(config, config.refinement)?;
    let (form, bs) = flat_system(&mesh, config.n)?;
    let entries = bubble_family(&mesh, &form, &bs, config.pole_radius, config.scale, config.tol)?;
    let mut rec = ResultRecord::new(config);
    let worst = |f: fn(&BubbleReport) -> f64| entries.iter().map(|b| f(&b.report)).fold(0.0, f64::max);
    rec.checks.push(NamedCheck::at_most("bubble-constant", worst(|r| r.c_relative_error), BUBBLE_CONSTANT_TOL));
    rec.checks
        .push(NamedCheck::at_most("bubble-fixed-point", worst(|r| r.fixed_point_distance), BUBBLE_FIXED_POINT_TOL));
    rec.checks.push(NamedCheck::at_most("bubble-energy-spread", energy_spread(&entries), BUBBLE_SPREAD_TOL));
    rec.bubbles = entries;
    rec.mesh = Some(MeshStats::of(&mesh, level));
    Ok(rec)
}

/// Required observed order of the sharp-constant error.
pub const ORDER_TOL: f64 = 1.5;
/// Relative error of the sharp constant required at level 3.
pub const LEVEL3_ERROR_TOL: f64 = 0.03;

/// Least-squares slope of `log err` against `log h`.
pub fn fitted_order(rows: &[ConvergenceRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h.ln(), r.relative_error.ln())).collect();
    let k = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / k, b + y / k));
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

/// Checks shared by `sweep` and `report` on a convergence table.
fn table_checks(rows: &[ConvergenceRow]) -> Vec<NamedCheck> {
    let mut out = Vec::new();
    if let Some(r3) = rows.iter().find(|r| r.level == 3) {
        out.push(NamedCheck::at_most("level-3-relative-error", r3.relative_error, LEVEL3_ERROR_TOL));
    }
    if rows.len() >= 2 {
        let worst_ratio = rows
            .windows(2)
            .map(|w| w[1].relative_error / w[0].relative_error)
            .fold(0.0, f64::max);
        out.push(NamedCheck::at_most("error-ratio-per-level", worst_ratio, 1.0));
        if let Some(o) = fitted_order(rows) {
            out.push(NamedCheck::at_least("observed-order", o, ORDER_TOL));
        }
    }
    out
}

fn sweep(config: &RunConfig) -> Result<ResultRecord> {
    if config.mesh_path.is_some() {
        return Err(YoError::Input("sweep generates its own meshes; drop mesh_path".into()));
    }
    let mut levels = config.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let runs: Vec<Result<(u32, ResultRecord)>> = levels
        .par_iter()
        .map(|&level| {
            let dir = config.out_dir.join(format!("level_{level}"));
            let sub = RunConfig {
                command: Command::Minimize,
                refinement: level,
                out_dir: dir.clone(),
                ..config.clone()
            };
            let rec = minimize_cmd(&sub, level, &dir)?.finish();
            write_json(&dir.join("result.json"), &rec)?;
            Ok((level, rec))
        })
        .collect();
    let mut rec = ResultRecord::new(config);
    let mut samples = Vec::new();
    for run in runs {
        let (level, sub) = run?;
        for c in &sub.checks {
            rec.checks.push(NamedCheck {
                name: format!("level-{level}/{}", c.name),
                ..c.clone()
            });
        }
        let q = sub.quotient.as_ref().expect("minimize fills the quotient report");
        let h = sub.mesh.as_ref().expect("minimize fills mesh stats").h;
        samples.push((level, h, q.e_value, q.i_value, q.mu_estimate));
    }
    rec.convergence = convergence_rows(&samples, sharp_constant(config.n)?);
    rec.checks.extend(table_checks(&rec.convergence));
    emit_report(&config.out_dir, "convergence", &rec.convergence)?;
    Ok(rec)
}

fn report(config: &RunConfig) -> Result<ResultRecord> {
    let input = config.input_dir.clone().unwrap_or_else(|| config.out_dir.clone());
    let mut samples = Vec::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|s| s.to_str()).is_some_and(|s| s.starts_with("level_")))
        .collect();
    dirs.sort();
    for dir in dirs {
        let path = dir.join("result.json");
        let text = std::fs::read_to_string(&path)?;
        let sub: ResultRecord = serde_json::from_str(&text).map_err(|e| YoError::Input(format!("{}: {e}", path.display())))?;
        let (Some(q), Some(m)) = (sub.quotient, sub.mesh) else {
            return Err(YoError::Input(format!("{} has no quotient report", path.display())));
        };
        samples.push((m.level.unwrap_or(0), m.h, q.e_value, q.i_value, q.mu_estimate));
    }
    let mut rec = ResultRecord::new(config);
    rec.convergence = convergence_rows(&samples, sharp_constant(config.n)?);
    rec.checks.extend(table_checks(&rec.convergence));
    emit_report(&config.out_dir, "report", &rec.convergence)?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_keyword() {
        assert_eq!("critical".parse::<PSpec>().unwrap(), PSpec::Critical);
        assert_eq!(PSpec::Critical.resolve(3).unwrap(), 3.0);
        assert_eq!(PSpec::Critical.resolve(4).unwrap(), 2.0);
        assert!(PSpec::Value(0.5).resolve(3).is_err());
        assert!("x".parse::<PSpec>().is_err());
        let s = serde_json::to_string(&PSpec::Critical).unwrap();
        assert_eq!(serde_json::from_str::<PSpec>(&s).unwrap(), PSpec::Critical);
        assert_eq!(serde_json::from_str::<PSpec>("2.5").unwrap(), PSpec::Value(2.5));
    }

    #[test]
    fn minimize_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(Command::Minimize, dir.path());
        cfg.refinement = 1;
        cfg.init = InitKind::Random;
        cfg.seed = 3;
        let a = run(&cfg);
        assert_eq!(a.exit_code, 0, "{:?}", a.message);
        let first = std::fs::read(dir.path().join("result.json")).unwrap();
        let b = run(&cfg);
        assert_eq!(b.exit_code, 0);
        assert_eq!(first, std::fs::read(dir.path().join("result.json")).unwrap());
    }

    #[test]
    fn input_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(Command::GenMesh, dir.path());
        cfg.tol = -1.0;
        assert_eq!(run(&cfg).exit_code, EXIT_INPUT);
        let mut cfg = RunConfig::new(Command::SolveObstacle, dir.path());
        cfg.mesh_path = Some(dir.path().join("missing.json"));
        assert_eq!(run(&cfg).exit_code, EXIT_INPUT);
    }

    #[test]
    fn failed_check_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(Command::Bubble, dir.path());
        cfg.refinement = 1;
        cfg.pole_radius = 1.2;
        let out = run(&cfg);
        assert_eq!(out.exit_code, EXIT_VIOLATION);
        assert!(out.message.unwrap().contains("bubble-"));
    }
}
