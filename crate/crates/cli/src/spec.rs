//! Command-line flags, the key=value config file, and the resolved
//! [`ExperimentSpec`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qreuse::dataset::Mode;
use qreuse::protocol::DEFAULT_MAX_CYCLES;
use serde::Serialize;

use crate::CliError;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_BOUND_SAMPLES: u64 = 10_000;
pub const DEFAULT_BOUND_POINTS: u64 = 100;
pub const DEFAULT_XI0: f64 = 0.5;
pub const DEFAULT_N_BITS: u32 = 1;
pub const DEFAULT_GRID: &str = "0.1:0.9:0.1";
const MAX_GRID_POINTS: usize = 100_000;

#[derive(Debug, Parser)]
#[command(name = "qreuse", version, about = "Input-recycling experiments with an unreliable oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Monte Carlo at a single reliability.
    Run(Flags),
    /// Monte Carlo over a reliability grid, one row per (xi0, L) point.
    Sweep(Flags),
    /// Score Haar-random recovery unitaries against R <= 1 - L.
    VerifyBounds(Flags),
}

impl CommandArgs {
    fn split(self) -> (Command, Flags) {
        match self {
            CommandArgs::Run(f) => (Command::Run, f),
            CommandArgs::Sweep(f) => (Command::Sweep, f),
            CommandArgs::VerifyBounds(f) => (Command::VerifyBounds, f),
        }
    }
}

/// Ascending list of values in `[0, 1]`, written `a:b:step` or `a,b,c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Oracle reliability L in [0, 1].
    #[arg(long, value_parser = parse_unit, conflicts_with = "reliability_grid")]
    pub reliability: Option<f64>,
    /// Reliability grid, `start:stop:step` or a comma-separated list.
    #[arg(long, value_parser = parse_grid)]
    pub reliability_grid: Option<Grid>,
    /// Class-0 weight(s) of the built-in dataset; same syntax as the grid.
    #[arg(long, value_parser = parse_grid, conflicts_with = "dataset")]
    pub xi0: Option<Grid>,
    /// Dataset file with `index,label,weight` rows after a header.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Input bits of the built-in dataset (full mode simulates 2^n inputs).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=24), conflicts_with = "dataset")]
    pub n_bits: Option<u32>,
    /// Monte Carlo trials per point, or Haar samples per point for verify-bounds.
    #[arg(long, value_parser = parse_count)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `reduced` (two-dimensional data register) or `full`.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long, value_parser = parse_count)]
    pub max_cycles: Option<u64>,
    /// Random (L, xi0) points for verify-bounds.
    #[arg(long, value_parser = parse_count)]
    pub points: Option<u64>,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write an SVG of R against L next to --output.
    #[arg(long)]
    pub plot: bool,
    /// Flat key=value file using the long flag names; flags given here win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    Sweep,
    VerifyBounds,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::VerifyBounds => "verify-bounds",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Inline { xi0: Vec<f64>, n_bits: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundPoints {
    Random(u64),
    Grid,
}

/// A fully validated experiment with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub reliabilities: Vec<f64>,
    pub data: DataSource,
    pub trials: u64,
    pub seed: u64,
    pub mode: Mode,
    pub max_cycles: u64,
    pub bound_points: BoundPoints,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub plot: bool,
}

impl ExperimentSpec {
    pub fn plot_path(&self) -> Option<PathBuf> {
        self.output.as_ref().filter(|_| self.plot).map(|p| p.with_extension("svg"))
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{v} is outside [0, 1]"));
    }
    Ok(v)
}

fn parse_count(s: &str) -> Result<u64, String> {
    match s.trim().parse::<u64>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("'{s}' is not a positive integer")),
    }
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err("expected start:stop:step".into());
        };
        let (a, b) = (parse_unit(a)?, parse_unit(b)?);
        let step: f64 = step.trim().parse().map_err(|_| format!("step '{step}' is not a number"))?;
        if !step.is_finite() || step <= 0.0 {
            return Err("step must be positive".into());
        }
        if b < a {
            return Err(format!("stop {b} is below start {a}"));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > MAX_GRID_POINTS {
            return Err(format!("{count} points exceed the limit of {MAX_GRID_POINTS}"));
        }
        // Rounded to 12 decimals so 0.1:0.9:0.1 yields 0.3 rather than 0.30000000000000004.
        (0..count).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        s.split(',').map(parse_unit).collect::<Result<Vec<_>, _>>()?
    };
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err("values must be strictly ascending".into());
    }
    Ok(Grid(values))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Reads a config file into `Flags` by handing its pairs to the same parser
/// as the command line.
fn read_config(path: &Path, command: Command) -> Result<Flags, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { context: format!("reading config {}", path.display()), source })?;
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!("config {} line {}: expected key=value", path.display(), lineno + 1)));
        };
        let (key, value) = (key.trim().replace('_', "-"), value.trim().to_string());
        if key == "config" {
            return Err(usage(format!("config {}: nested config files are not supported", path.display())));
        }
        pairs.insert(key, value);
    }
    let mut argv = vec!["qreuse".to_string(), command.to_string()];
    for (key, value) in pairs {
        if key == "plot" {
            match value.as_str() {
                "true" => argv.push("--plot".into()),
                "false" => {}
                _ => return Err(usage(format!("config {}: plot must be true or false", path.display()))),
            }
        } else {
            argv.push(format!("--{key}={value}"));
        }
    }
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| usage(format!("config {}: {}", path.display(), e.render().to_string().trim_end())))?;
    Ok(cli.command.split().1)
}

/// Fills unset flags from `config`. A flag set on the command line also
/// masks the config entries it conflicts with.
fn merge(cli: Flags, config: Flags) -> Flags {
    let reliability_set = cli.reliability.is_some() || cli.reliability_grid.is_some();
    let data_set = cli.dataset.is_some() || cli.xi0.is_some() || cli.n_bits.is_some();
    let (reliability, reliability_grid) = if reliability_set {
        (cli.reliability, cli.reliability_grid)
    } else {
        (config.reliability, config.reliability_grid)
    };
    let (dataset, xi0, n_bits) =
        if data_set { (cli.dataset, cli.xi0, cli.n_bits) } else { (config.dataset, config.xi0, config.n_bits) };
    Flags {
        reliability,
        reliability_grid,
        xi0,
        dataset,
        n_bits,
        trials: cli.trials.or(config.trials),
        seed: cli.seed.or(config.seed),
        mode: cli.mode.or(config.mode),
        max_cycles: cli.max_cycles.or(config.max_cycles),
        points: cli.points.or(config.points),
        output: cli.output.or(config.output),
        format: cli.format.or(config.format),
        plot: cli.plot || config.plot,
        config: None,
    }
}

/// Resolves parsed flags (plus an optional config file) into a spec.
pub fn resolve(args: CommandArgs) -> Result<ExperimentSpec, CliError> {
    let (command, mut flags) = args.split();
    if let Some(path) = flags.config.clone() {
        flags = merge(flags, read_config(&path, command)?);
    }

    let explicit_grid = flags.reliability.is_some() || flags.reliability_grid.is_some();
    let reliabilities = match (flags.reliability, flags.reliability_grid) {
        (Some(l), _) => vec![l],
        (None, Some(Grid(g))) => {
            if command == Command::Run {
                return Err(usage("run takes a single --reliability; use sweep for --reliability-grid"));
            }
            g
        }
        (None, None) => match command {
            Command::Run => return Err(usage("run requires --reliability")),
            Command::Sweep => parse_grid(DEFAULT_GRID).map_err(usage)?.0,
            Command::VerifyBounds => Vec::new(),
        },
    };

    let data = match flags.dataset {
        Some(path) => DataSource::File(path),
        None => {
            let xi0 = flags.xi0.map_or_else(|| vec![DEFAULT_XI0], |g| g.0);
            if command == Command::Run && xi0.len() > 1 {
                return Err(usage("run takes a single --xi0 value"));
            }
            DataSource::Inline { xi0, n_bits: flags.n_bits.unwrap_or(DEFAULT_N_BITS) }
        }
    };

    let bound_points = match (command, explicit_grid, flags.points) {
        (Command::VerifyBounds, false, points) => BoundPoints::Random(points.unwrap_or(DEFAULT_BOUND_POINTS)),
        (Command::VerifyBounds, true, Some(_)) => {
            return Err(usage(
                "--points draws random points and cannot be combined with --reliability or --reliability-grid",
            ))
        }
        (_, _, Some(_)) if command != Command::VerifyBounds => {
            return Err(usage(format!("--points only applies to verify-bounds, not {command}")))
        }
        _ => BoundPoints::Grid,
    };

    if flags.plot {
        if command == Command::VerifyBounds {
            return Err(usage("--plot only applies to run and sweep"));
        }
        if flags.output.is_none() {
            return Err(usage("--plot needs --output; the SVG is written next to it"));
        }
    }

    let default_trials = if command == Command::VerifyBounds { DEFAULT_BOUND_SAMPLES } else { DEFAULT_TRIALS };
    Ok(ExperimentSpec {
        command,
        reliabilities,
        data,
        trials: flags.trials.unwrap_or(default_trials),
        seed: flags.seed.unwrap_or(0),
        mode: flags.mode.unwrap_or_default(),
        max_cycles: flags.max_cycles.unwrap_or(DEFAULT_MAX_CYCLES),
        bound_points,
        output: flags.output,
        format: flags.format.unwrap_or(Format::Csv),
        plot: flags.plot,
    })
}
