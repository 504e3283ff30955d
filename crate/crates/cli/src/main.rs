mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "pcvf", version, about = "Piecewise-constant vector fields: subdivision, SEM operators and experiments")]
struct Cli {
    #[command(flatten)]
    config: RunConfig,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command.
#[derive(Args, Debug, Clone)]
pub struct RunConfig {
    /// Number of subdivision levels.
    #[arg(long, global = true, default_value_t = 1)]
    pub level: usize,
    /// Override the residual tolerance of the command's gate.
    #[arg(long, global = true, value_parser = positive)]
    pub tol: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("tolerance must be positive".into())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Subdivide a mesh with a halfedge field or a directional field.
    Subdivide {
        /// OBJ path or bundled mesh name (tet, octahedron, icosphere, torus, disk).
        #[arg(long)]
        mesh: String,
        /// Halfedge form (`GAMMA`) file.
        #[arg(long, conflicts_with_all = ["dirfield", "matching"])]
        field: Option<PathBuf>,
        /// Directional field (`DIRFIELD`) file.
        #[arg(long, requires = "matching")]
        dirfield: Option<PathBuf>,
        /// Matching (`MATCHING`) file.
        #[arg(long, requires = "dirfield")]
        matching: Option<PathBuf>,
    },
    /// SEM Hodge decomposition of a field (defaults to the procedural test field).
    Hodge {
        #[arg(long)]
        mesh: String,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Error and spectrum experiments.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        #[arg(long)]
        mesh: String,
        /// Number of nonzero eigenvalues compared by `spectrum`.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// Stencil derivation, dump and verification.
    Stencil {
        #[arg(value_enum)]
        action: StencilAction,
        /// Largest interior valence (and boundary face count).
        #[arg(long, default_value_t = 12)]
        max_valence: usize,
    },
    /// Field design from per-face constraints `face vx vy vz`.
    Design {
        #[arg(long)]
        mesh: String,
        #[arg(long)]
        constraints: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    ProjectionError,
    OperatorError,
    Spectrum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StencilAction {
    Derive,
    Dump,
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = cli.config;
    let result = match cli.command {
        Command::Subdivide { mesh, field, dirfield, matching } => match (dirfield, matching) {
            (Some(d), Some(m)) => commands::subdivide_directional(&cfg, &mesh, &d, &m),
            _ => commands::subdivide(&cfg, &mesh, field.as_deref()),
        },
        Command::Hodge { mesh, field } => commands::hodge(&cfg, &mesh, field.as_deref()),
        Command::Experiment { name, mesh, count } => commands::experiment(&cfg, name, &mesh, count),
        Command::Stencil { action, max_valence } => commands::stencil(&cfg, action, max_valence),
        Command::Design { mesh, constraints } => commands::design(&cfg, &mesh, &constraints),
    };
    match result.and_then(|r| r.emit(&cfg).map(|_| r.pass)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gate failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
