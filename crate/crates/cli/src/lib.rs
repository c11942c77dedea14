//! Command-line front end: model files in, JSON reports and CSV
//! trajectories out.

pub mod analyze;
pub mod error;
pub mod evolve;
pub mod input;
pub mod metadata;
pub mod transform;
pub mod verify;

use clairaut::model::ConventionChoice;
use clairaut::verification::SuiteOptions;
use clairaut::Convention;
use clap::{Parser, Subcommand};
use error::{CliError, CliResult};
use input::ModelSource;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "clairaut", version, about = "Clairaut-Legendre transform for singular Lagrangians")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Velocity-Hessian rank, regular/degenerate split, rank of F and gauge count.
    Analyze {
        /// Model file, or `corpus:<name>` for a built-in model.
        model: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// H0 and h_alpha on a grid, with a polynomial fit for polynomial models.
    Transform {
        model: String,
        /// Grid axis `NAME=START:STOP:COUNT` over a coordinate or regular momentum.
        #[arg(long = "grid", value_name = "AXIS")]
        grid: Vec<String>,
        /// Fixed value `NAME=VALUE` for an off-grid variable (default 0).
        #[arg(long = "at", value_name = "ASSIGN")]
        at: Vec<String>,
        /// Total degree of the fitted polynomial.
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long)]
        no_fit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the model; writes a CSV and a `.meta.json` sidecar.
    Evolve {
        model: String,
        /// CSV path; defaults to `<model>.csv` in the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `A`, `B` or `auto`; overrides the model file.
        #[arg(long)]
        convention: Option<String>,
        /// Gauge velocity `v_NAME=EXPR` in t, q and p; overrides the model file.
        #[arg(long = "gauge", value_name = "ASSIGN")]
        gauge: Vec<String>,
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Full verification suite on the built-in corpus plus any given models.
    Verify {
        models: Vec<String>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Random points per pointwise check.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
}

pub fn parse_convention(s: &str) -> CliResult<ConventionChoice> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(ConventionChoice::Auto);
    }
    Convention::from_label(s)
        .map(ConventionChoice::Fixed)
        .ok_or_else(|| CliError::Usage(format!("convention must be A, B or auto, got `{s}`")))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn warn(stderr: &mut dyn Write, msg: &str) {
    let _ = writeln!(stderr, "warning: {msg}");
}

/// Executes one subcommand.
pub fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Analyze { model, out } => {
            let src = ModelSource::load(&model)?;
            let rep = analyze::analyze(&src)?;
            for w in &rep.warnings {
                warn(stderr, w);
            }
            emit(&to_json(&rep), out.as_deref(), stdout)
        }
        Command::Transform { model, grid, at, degree, no_fit, out } => {
            let src = ModelSource::load(&model)?;
            let grid = grid.iter().map(|g| transform::Axis::parse(g)).collect::<CliResult<_>>()?;
            let opts = transform::TransformOptions { grid, at, degree, fit: !no_fit };
            let rep = transform::transform(&src, &opts)?;
            if let Some(note) = &rep.fit_note {
                warn(stderr, note);
            }
            emit(&to_json(&rep), out.as_deref(), stdout)
        }
        Command::Evolve { model, out, convention, gauge, t1, dt } => {
            let mut src = ModelSource::load(&model)?;
            src.override_gauge(&gauge)?;
            let convention = convention.as_deref().map(parse_convention).transpose()?;
            let opts = evolve::EvolveOptions { convention, t1, dt };
            let result = evolve::evolve(&src, &opts)?;
            for w in &result.metadata.warnings {
                warn(stderr, w);
            }
            let csv = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", src.label)));
            evolve::write_outputs(&result, &csv)?;
            match result.error {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Verify { models, out, points } => {
            let extra = models.iter().map(|m| ModelSource::load(m)).collect::<CliResult<Vec<_>>>()?;
            let opts = SuiteOptions { points, ..SuiteOptions::default() };
            let rep = verify::verify(extra, &opts)?;
            for c in rep.report.failures() {
                let _ = writeln!(
                    stderr,
                    "FAIL {} residual={:e} tolerance={:e}{}",
                    c.name,
                    c.max_residual,
                    c.tolerance,
                    c.note.as_deref().map(|n| format!(" note={n}")).unwrap_or_default()
                );
            }
            emit(&to_json(&rep), out.as_deref(), stdout)?;
            if rep.passed {
                Ok(())
            } else {
                Err(CliError::VerificationFailed { failures: rep.failures.len(), total: rep.report.checks.len() })
            }
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors are reported on `stderr` as a single `error: code=.. kind=..` line.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let text = e.to_string();
            let err = CliError::Usage(text.trim_start_matches("error:").trim().to_string());
            let _ = writeln!(stderr, "{}", err.line());
            return err.code();
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.line());
            e.code()
        }
    }
}
