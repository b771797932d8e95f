//! Experiment runner behind the `qreuse` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 bound violation, 3 I/O failure.

pub mod report;
pub mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use qreuse::analysis::{check_bound_at, check_bound_random, BoundCheck};
use qreuse::dataset::{partition, ConceptDataset};
use qreuse::protocol::{monte_carlo, ProtocolConfig};
use qreuse::statevec::derive_seed;

use crate::report::{BoundSummary, SweepRow};
use crate::spec::{BoundPoints, Cli, Command, DataSource, ExperimentSpec, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BOUND_VIOLATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] qreuse::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{violations} candidate(s) exceeded R <= 1 - L")]
    BoundViolation { violations: u64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::BoundViolation { .. } => EXIT_BOUND_VIOLATION,
        }
    }

    fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

/// Results of one executed spec, rendered but not yet written.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Sweep(Vec<SweepRow>),
    Bounds(Vec<BoundCheck>),
}

/// Datasets of a run or sweep, one per inline class weight.
fn datasets(spec: &ExperimentSpec) -> Result<Vec<ConceptDataset>, CliError> {
    match &spec.data {
        DataSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("reading dataset {}", path.display()), e))?;
            let ds = ConceptDataset::parse(&text)
                .map_err(|e| CliError::Usage(format!("--dataset {}: {e}", path.display())))?;
            Ok(vec![ds])
        }
        DataSource::Inline { xi0, n_bits } => {
            xi0.iter().map(|&x| ConceptDataset::from_class_weight(x, *n_bits).map_err(CliError::from)).collect()
        }
    }
}

pub fn execute(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    match spec.command {
        Command::Run | Command::Sweep => {
            let mut rows = Vec::new();
            for ds in datasets(spec)? {
                for &l in &spec.reliabilities {
                    let index = rows.len() as u64;
                    let cfg = ProtocolConfig {
                        mode: spec.mode,
                        max_cycles: spec.max_cycles,
                        trials: spec.trials,
                        master_seed: derive_seed(spec.seed, index),
                        ..ProtocolConfig::new(l, ds.clone())
                    };
                    log::info!("point {index}: L = {l}, xi0 = {}", partition(&ds).xi0);
                    rows.push(SweepRow::from(&monte_carlo(&cfg)?));
                }
            }
            Ok(Outcome::Sweep(rows))
        }
        Command::VerifyBounds => {
            let samples = usize::try_from(spec.trials).map_err(|_| CliError::Usage("--trials is too large".into()))?;
            let checks = match spec.bound_points {
                BoundPoints::Random(n) => check_bound_random(n as usize, samples, spec.seed)?,
                BoundPoints::Grid => {
                    let xi0s: Vec<f64> = match &spec.data {
                        DataSource::Inline { xi0, .. } => xi0.clone(),
                        DataSource::File(_) => datasets(spec)?.iter().map(|d| partition(d).xi0).collect(),
                    };
                    let points: Vec<(f64, f64)> =
                        xi0s.iter().flat_map(|&x| spec.reliabilities.iter().map(move |&l| (l, x))).collect();
                    check_bound_at(&points, samples, spec.seed)?
                }
            };
            Ok(Outcome::Bounds(checks))
        }
    }
}

/// Report bytes in the requested format.
pub fn render(outcome: &Outcome, format: Format) -> Result<Vec<u8>, CliError> {
    let bytes = match (outcome, format) {
        (Outcome::Sweep(rows), Format::Csv) => report::sweep_csv(rows).map_err(std::io::Error::from),
        (Outcome::Sweep(rows), Format::Json) => report::to_json(rows).map_err(std::io::Error::from),
        (Outcome::Bounds(checks), Format::Csv) => report::bounds_csv(checks).map_err(std::io::Error::from),
        (Outcome::Bounds(checks), Format::Json) => {
            report::to_json(&BoundSummary::new(checks)).map_err(std::io::Error::from)
        }
    };
    bytes.map_err(|e| CliError::io("rendering report", e))
}

/// Writes through a temporary file in the target directory, so a failed
/// run leaves no partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let context = || format!("writing {}", path.display());
    let mut builder = tempfile::Builder::new();
    // Reports are ordinary files, not the owner-only temporaries tempfile defaults to.
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
    let mut tmp = builder.tempfile_in(target_dir(path)).map_err(|e| CliError::io(context(), e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(context(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(context(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(context(), e.error))?;
    Ok(())
}

fn target_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn check_writable(path: &Path) -> Result<(), CliError> {
    let dir = target_dir(path);
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(
            format!("--output {}", path.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("directory {} does not exist", dir.display())),
        ))
    }
}

/// Executes a spec and emits its artifacts.
pub fn run_spec(spec: &ExperimentSpec, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if let Some(path) = &spec.output {
        check_writable(path)?;
    }
    let outcome = execute(spec)?;
    let bytes = render(&outcome, spec.format)?;
    let svg = match (&outcome, spec.plot_path()) {
        (Outcome::Sweep(rows), Some(path)) => Some((path, report::svg_plot(rows))),
        _ => None,
    };
    match &spec.output {
        Some(path) => write_atomic(path, &bytes)?,
        None => stdout.write_all(&bytes).map_err(|e| CliError::io("writing standard output", e))?,
    }
    if let Some((path, svg)) = svg {
        write_atomic(&path, svg.as_bytes())?;
    }
    if let Outcome::Bounds(checks) = &outcome {
        let summary = BoundSummary::new(checks);
        let _ = writeln!(
            stderr,
            "{} points, max R_candidate {}, max excess over 1 - L {}, violations {}",
            checks.len(),
            report::fmt_g(summary.max_r_candidate),
            report::fmt_g(summary.max_excess),
            summary.violations
        );
        if summary.violations > 0 {
            return Err(CliError::BoundViolation { violations: summary.violations });
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = spec::resolve(cli.command).and_then(|spec| run_spec(&spec, stdout, stderr));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
