use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use comprsma::harness::{
    checks, parse_kinds, parse_values, run_experiment, summarize, write_csv, Axis, ExperimentSpec,
    Solver, FULL_TRIALS,
};
use comprsma::CoreError;

/// Sum-rate optimization for CoMP rate-splitting downlinks with movable antennas.
///
/// Settings are taken from the built-in defaults, then the `--config` file,
/// then the command-line flags, each overriding the previous.
#[derive(Parser)]
#[command(name = "comprsma", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Monte Carlo trials at a single configuration.
    Run(Common),
    /// Monte Carlo trials over a parameter axis.
    Sweep(Common),
    /// Like `run`/`sweep` but with the multi-start gradient-ascent oracle.
    Oracle(Common),
    /// Quick invariant suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Run 150 trials.
    #[arg(long, conflicts_with = "trials")]
    full: bool,
    /// power, threshold, antennas, users, bs-count or none.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated schemes (RSMA-MA, RSMA-FPA, SDMA-MA, SDMA-FPA) or `all`.
    #[arg(long)]
    kinds: Option<String>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(CoreError),
    AllFailed,
    Other(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(io) => Failure::Other(io.to_string()),
            e => Failure::Config(e),
        }
    }
}

fn build_spec(c: &Common, verb: &str) -> Result<ExperimentSpec, CoreError> {
    let mut spec = match &c.config {
        Some(path) => ExperimentSpec::from_config_file(path)
            .map_err(|e| match e {
                CoreError::Io(io) => CoreError::config("config", format!("{}: {io}", path.display())),
                e => e,
            })?,
        None => ExperimentSpec::default(),
    };
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CoreError::config("set", format!("expected KEY=VALUE, got `{kv}`")))?;
        spec.set(k, v)?;
    }
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if let Some(t) = c.trials {
        spec.trials = t;
    }
    if c.full {
        spec.trials = FULL_TRIALS;
    }
    if let Some(a) = &c.axis {
        spec.axis = a.parse()?;
    }
    if let Some(v) = &c.values {
        spec.values = parse_values("values", v)?;
    }
    if let Some(k) = &c.kinds {
        spec.kinds = parse_kinds(k)?;
    }
    if let Some(o) = &c.out {
        spec.out = Some(o.clone());
    }
    if let Some(w) = c.workers {
        spec.workers = w;
    }
    match verb {
        "run" if spec.axis != Axis::None => {
            return Err(CoreError::config("axis", "`run` takes no axis; use `sweep`"));
        }
        "sweep" if spec.axis == Axis::None => {
            return Err(CoreError::config("axis", "`sweep` needs an axis"));
        }
        "oracle" => spec.solver = Solver::Pga,
        _ => {}
    }
    spec.validate()?;
    Ok(spec)
}

fn experiment(c: &Common, verb: &str) -> Result<(), Failure> {
    let spec = build_spec(c, verb)?;
    let rows = run_experiment(&spec)?;
    let users = spec.max_users();
    match &spec.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
            write_csv(&rows, users, std::io::BufWriter::new(file))?;
        }
        None => write_csv(&rows, users, std::io::stdout().lock())?,
    }
    let mut err = std::io::stderr().lock();
    for r in rows.iter().filter(|r| r.failed()) {
        let _ = writeln!(err, "trial seed {} {}: {}", r.seed, r.kind, r.error.as_deref().unwrap_or(""));
    }
    for s in summarize(&rows)? {
        let at = s.axis_value.map_or(String::new(), |v| format!(" {}={v}", spec.axis));
        let stats = match (s.mean, s.ci_half_width) {
            (Some(m), Some(h)) => format!("mean {m:.4} ± {h:.4} bps/Hz"),
            _ => "no feasible trial".to_string(),
        };
        let _ = writeln!(
            err,
            "{}{at}: {stats}, infeasible {:.0}% of {}",
            s.kind,
            100.0 * s.infeasible_fraction,
            s.rows
        );
    }
    if rows.iter().all(|r| r.failed()) {
        return Err(Failure::AllFailed);
    }
    Ok(())
}

fn check(seed: u64) -> Result<bool, Failure> {
    let outcomes = checks::run_checks(seed)?;
    let mut ok = true;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        ok &= o.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Run(c) => experiment(c, "run"),
        Verb::Sweep(c) => experiment(c, "sweep"),
        Verb::Oracle(c) => experiment(c, "oracle"),
        Verb::Check { seed } => match check(*seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::AllFailed) => {
            eprintln!("error: every trial hit a numeric fault");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
