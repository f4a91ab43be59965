use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conformal_cli::commands;
use conformal_cli::config::RunConfig;
use conformal_cli::{CliError, Overrides};

/// Conformal metrics on plane domains: distances, geodesics, curvature,
/// smoothing and CAT(0) verification.
#[derive(Parser)]
#[command(name = "conformal", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Run configuration (TOML); for `verify`, the suite file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Target spacing, overriding `grid.h`.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Search stencil size: 8, 16 or 32.
    #[arg(long, global = true)]
    stencil: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// ρ-distance and geodesic between `run.a` and `run.b`.
    Distance,
    /// Geodesic with winding `run.winding` about the hole, plus a uniqueness probe.
    GeodesicClass,
    /// CAT(0) comparison test on the triangle `run.a`, `run.b`, `run.c`.
    TriangleCheck,
    /// Stencil curvature on a lattice.
    CurvatureMap,
    /// Mollify `log ρ` at the radii `run.eps`.
    MollifyDemo,
    /// Approximating densities σ_n for `run.ns`.
    SigmaSeq,
    /// Run a verification suite (the bundled one without `--config`).
    Verify,
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let ov = Overrides { out: cli.out.clone(), seed: cli.seed, workers: cli.workers, h: cli.h, stencil: cli.stencil };
    if let Some(w) = cli.workers.filter(|_| !matches!(cli.cmd, Cmd::Verify)) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    if let Cmd::Verify = cli.cmd {
        return commands::verify(cli.config.as_deref(), &ov);
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    match cli.cmd {
        Cmd::Distance => commands::distance(&cfg, &ov),
        Cmd::GeodesicClass => commands::geodesic_class(&cfg, &ov),
        Cmd::TriangleCheck => commands::triangle_check(&cfg, &ov),
        Cmd::CurvatureMap => commands::curvature_map(&cfg, &ov),
        Cmd::MollifyDemo => commands::mollify_demo(&cfg, &ov),
        Cmd::SigmaSeq => commands::sigma_seq(&cfg, &ov),
        Cmd::Verify => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
