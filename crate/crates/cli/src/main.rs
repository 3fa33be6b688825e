//! `slaglab`: batch front end for the slaglab library.
//!
//! Every command accepts `--config <file.json>`; flags given on the command
//! line override keys of the file. Reports are JSON and embed the merged
//! configuration. Exit status: 0 when all asserted checks pass, 1 when a
//! check fails, 2 on usage or input errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "slaglab", version, about = "Special Lagrangian and sigma_2 numerical lab")]
struct Cli {
    /// JSON file with default values for the command's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Residuals of a catalog solution from exact jets on a grid.
    VerifyCatalog(VerifyCatalogArgs),
    /// Newton solve of a Dirichlet problem.
    Solve(SolveArgs),
    /// Rotate the gradient graph of a grid field.
    Rotate(RotateArgs),
    /// Discrete Legendre transform.
    Legendre(LegendreArgs),
    /// Legendre transform of `u + m|x|²/2`.
    Lewy(LewyArgs),
    /// Eigenvalue fields, rank counts and min-principle or splitting verdicts.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo midpoint probe of a phase level set.
    ProbeLevelset(ProbeArgs),
    /// Differential inequalities for the bottom eigenvalues of a solution.
    CheckViscosity(ViscosityArgs),
    /// Audit of the 2-homogeneous extension of a quadratic on the sphere.
    Hom2Audit(Hom2Args),
    /// Catalog utilities.
    Catalog {
        #[command(subcommand)]
        action: CatalogCommand,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogCommand {
    /// Write a catalog entry sampled on a cube to a grid file.
    Sample(SampleArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyCatalogArgs {
    /// warren, li, quadratic or hom2.
    #[arg(long)]
    pub entry: Option<String>,
    /// Half-width of the sampling cube.
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Residual tolerance (default 1e-11).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveArgs {
    /// slag or sigma2.
    #[arg(long)]
    pub op: Option<String>,
    /// Phase level for the slag operator.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Grid file whose boundary values are the Dirichlet data.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Grid file for the solution.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Report path (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotateArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Rotation angle in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Grid file for the rotated potential.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegendreArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LewyArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Dimension used for the shift `m` (default: the grid's).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Grid file to analyze.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// rank or split.
    #[arg(long)]
    pub report: Option<String>,
    /// Shift `a` in the rank of `D²u − aI`.
    #[arg(long, allow_hyphen_values = true)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub tol_rank: Option<f64>,
    /// Phase level for threshold margins (default `(n−2)π/2`).
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// `x=<c>`, `y=<c>` or `z=<c>`: export the `λ_min` slice as CSV and PGM.
    #[arg(long)]
    pub slice: Option<String>,
    /// Path prefix for slice files (default: next to the report, or `slice`).
    #[arg(long)]
    pub slice_prefix: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViscosityArgs {
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// slag or sigma2.
    #[arg(long)]
    pub op: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// 4.1, 4.3, 4.5 or final.
    #[arg(long)]
    pub ineq: Option<String>,
    /// Number of vanishing eigenvalues for `final` (default: detected).
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub slack_factor: Option<f64>,
    #[arg(long)]
    pub residual_tol: Option<f64>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hom2Args {
    /// Diagonal of `A` in `g(ξ) = ½⟨ξ, Aξ⟩`, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub diag: Option<String>,
    /// Phase level (default: `Σ arctan` of the diagonal).
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleArgs {
    #[arg(long)]
    pub entry: Option<String>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Check(String),
}

impl From<slaglab::Error> for Failure {
    fn from(e: slaglab::Error) -> Self {
        use slaglab::Error::*;
        match e {
            Argument(_) | Parse { .. } | Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

/// Overlays the flags that were given onto the config file's keys.
fn merge<T: Serialize + DeserializeOwned>(flags: T, file: &Option<Value>, command: &str) -> Result<T, Failure> {
    let Some(file) = file else { return Ok(flags) };
    let Value::Object(mut base) = file.clone() else {
        return Err(Failure::Usage("config file must hold a JSON object".into()));
    };
    if let Some(c) = base.remove("command") {
        if c.as_str() != Some(command) {
            return Err(Failure::Usage(format!("config is for command {c}, not '{command}'")));
        }
    }
    let Value::Object(given) = serde_json::to_value(&flags).expect("flags serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in given {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Failure::Usage(format!("config: {e}")))
}

fn load_config(path: &Option<PathBuf>) -> Result<Option<Value>, Failure> {
    let Some(p) = path else { return Ok(None) };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("SLAGLAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("SLAGLAB_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Failure::Usage("SLAGLAB_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let file = load_config(&cli.config)?;
    match cli.command {
        Command::VerifyCatalog(a) => commands::verify_catalog(merge(a, &file, "verify-catalog")?),
        Command::Solve(a) => commands::solve(merge(a, &file, "solve")?),
        Command::Rotate(a) => commands::rotate(merge(a, &file, "rotate")?),
        Command::Legendre(a) => commands::legendre(merge(a, &file, "legendre")?),
        Command::Lewy(a) => commands::lewy(merge(a, &file, "lewy")?),
        Command::Analyze(a) => commands::analyze(merge(a, &file, "analyze")?),
        Command::ProbeLevelset(a) => commands::probe_levelset(merge(a, &file, "probe-levelset")?),
        Command::CheckViscosity(a) => commands::check_viscosity(merge(a, &file, "check-viscosity")?),
        Command::Hom2Audit(a) => commands::hom2_audit(merge(a, &file, "hom2-audit")?),
        Command::Catalog {
            action: CatalogCommand::Sample(a),
        } => commands::catalog_sample(merge(a, &file, "catalog-sample")?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
    }
}
