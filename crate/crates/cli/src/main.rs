//! `yo`: command-line driver for the obstacle operator, quotient minimization
//! and verification suites. See `yo --help`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use yo_core::runner::{run, Command, InitKind, PSpec, RunConfig};

#[derive(Parser)]
#[command(name = "yo", version, about = "Boundary obstacle operator and Cherrier-Escobar quotients")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the refined ball mesh as canonical JSON.
    GenMesh(Common),
    /// Solve T(u) for a seeded random admissible field on the ball.
    SolveObstacle(Common),
    /// Run the T-projected minimizing sequence for E_p.
    Minimize(MinimizeArgs),
    /// Run the randomized lemma suite.
    VerifyLemmas(LemmaArgs),
    /// Verify the bubble family on the ball.
    Bubble(BubbleArgs),
    /// Minimize over several refinement levels in parallel and tabulate convergence.
    Sweep(SweepArgs),
    /// Rebuild the convergence table from `level_*/result.json` files.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Dimension of the manifold.
    #[arg(short, long, default_value_t = 3)]
    n: u32,
    /// Exponent p in [1, 2# - 1], or `critical`.
    #[arg(short, long, default_value = "critical")]
    p: String,
    /// Refinement level of the ball mesh.
    #[arg(short, long = "refine", default_value_t = 3)]
    refinement: u32,
    /// Obstacle solver tolerance (relative KKT residual).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(short, long, env = "YO_OUT_DIR", default_value = "yo-out")]
    out_dir: PathBuf,
    /// Mesh JSON to use instead of the generated ball.
    #[arg(short, long = "mesh")]
    mesh_path: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Constant,
    Random,
}

#[derive(Args)]
struct MinimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Initial state: `constant` (u = 1) or `random` (seeded perturbation of 1).
    #[arg(long, value_enum, default_value = "constant")]
    init: Init,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
}

#[derive(Args)]
struct LemmaArgs {
    #[command(flatten)]
    common: Common,
    /// Largest random instance size.
    #[arg(long, default_value_t = 40)]
    dim: usize,
    /// Number of consecutive seeds, starting at --seed.
    #[arg(long, default_value_t = 1000)]
    seeds: u64,
}

#[derive(Args)]
struct BubbleArgs {
    #[command(flatten)]
    common: Common,
    /// Distance of the poles from the origin.
    #[arg(long, default_value_t = 5.0)]
    pole_radius: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    minimize: MinimizeArgs,
    /// Refinement levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    levels: Vec<u32>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Directory with `level_*/result.json` (defaults to the output directory).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn base(command: Command, c: &Common) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::new(command, c.out_dir.clone());
    cfg.n = c.n;
    cfg.p = c.p.parse::<PSpec>().map_err(|e| e.to_string())?;
    cfg.refinement = c.refinement;
    cfg.tol = c.tol;
    cfg.seed = c.seed;
    cfg.mesh_path = c.mesh_path.clone();
    Ok(cfg)
}

fn with_minimize(mut cfg: RunConfig, m: &MinimizeArgs) -> RunConfig {
    cfg.init = match m.init {
        Init::Constant => InitKind::Constant,
        Init::Random => InitKind::Random,
    };
    cfg.max_iters = m.max_iters;
    cfg
}

fn config(cli: Cli) -> Result<RunConfig, String> {
    Ok(match cli.command {
        Cmd::GenMesh(c) => base(Command::GenMesh, &c)?,
        Cmd::SolveObstacle(c) => base(Command::SolveObstacle, &c)?,
        Cmd::Minimize(m) => with_minimize(base(Command::Minimize, &m.common)?, &m),
        Cmd::VerifyLemmas(l) => {
            let mut cfg = base(Command::VerifyLemmas, &l.common)?;
            cfg.dim = l.dim;
            cfg.seeds = l.seeds;
            cfg
        }
        Cmd::Bubble(b) => {
            let mut cfg = base(Command::Bubble, &b.common)?;
            cfg.pole_radius = b.pole_radius;
            cfg.scale = b.scale;
            cfg
        }
        Cmd::Sweep(s) => {
            let mut cfg = with_minimize(base(Command::Sweep, &s.minimize.common)?, &s.minimize);
            cfg.levels = s.levels;
            cfg
        }
        Cmd::Report(r) => {
            let mut cfg = base(Command::Report, &r.common)?;
            cfg.input_dir = r.input;
            cfg
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cfg = match config(cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("yo: {msg}");
            return ExitCode::from(1);
        }
    };
    let outcome = run(&cfg);
    if let Some(msg) = &outcome.message {
        eprintln!("yo: {msg}");
    }
    if outcome.record.is_some() {
        println!("{}", cfg.out_dir.join("result.json").display());
    }
    ExitCode::from(outcome.exit_code as u8)
}
