//! Seeded Monte Carlo experiments, parameter sweeps and CSV output.

pub mod checks;
mod config;
mod summary;

pub use config::{parse_entries, parse_kinds, parse_values, Entry};
pub use summary::{summarize, CellSummary};

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{pga_oracle, run_benchmark};
use crate::channel::{dbm_to_watts, sample_scenario, ScenarioParams};
use crate::error::{CoreError, Result};
use crate::gml::MetaConfig;
use crate::rate::Scheme;

/// Trial count used when none is configured.
pub const DEFAULT_TRIALS: usize = 20;
/// Trial count of the full-scale runs.
pub const FULL_TRIALS: usize = 150;

/// Parameter swept by an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Per-BS power budget in dBm.
    Power,
    /// QoS threshold in bps/Hz.
    Threshold,
    /// Transmit antennas per BS.
    Antennas,
    Users,
    BsCount,
    None,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Power => "power",
            Axis::Threshold => "threshold",
            Axis::Antennas => "antennas",
            Axis::Users => "users",
            Axis::BsCount => "bs-count",
            Axis::None => "none",
        }
    }

    fn is_count(&self) -> bool {
        matches!(self, Axis::Antennas | Axis::Users | Axis::BsCount)
    }
}

impl std::str::FromStr for Axis {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "power" => Ok(Axis::Power),
            "threshold" => Ok(Axis::Threshold),
            "antennas" => Ok(Axis::Antennas),
            "users" => Ok(Axis::Users),
            "bs-count" | "bs" => Ok(Axis::BsCount),
            "none" | "" => Ok(Axis::None),
            _ => Err(CoreError::config("axis", format!("unknown axis `{s}`"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which optimizer produces each row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    Gml,
    /// Multi-start projected gradient ascent.
    Pga,
}

impl std::str::FromStr for Solver {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gml" => Ok(Solver::Gml),
            "pga" | "oracle" => Ok(Solver::Pga),
            _ => Err(CoreError::config("solver", format!("expected `gml` or `pga`, got `{s}`"))),
        }
    }
}

/// Everything that determines an experiment's output table.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub meta: MetaConfig,
    pub scenario: ScenarioParams,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub kinds: Vec<Scheme>,
    pub out: Option<PathBuf>,
    /// Master seed; per-trial seeds are derived from it.
    pub seed: u64,
    pub workers: usize,
    /// Record measured wall time in the `wall_ms` column. Off by default,
    /// which leaves the column empty and keeps the CSV reproducible.
    pub wall_time: bool,
    pub solver: Solver,
    pub oracle_starts: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            meta: MetaConfig::default(),
            scenario: ScenarioParams::default(),
            axis: Axis::None,
            values: Vec::new(),
            trials: DEFAULT_TRIALS,
            kinds: Scheme::ALL.to_vec(),
            out: None,
            seed: 0,
            workers: 1,
            wall_time: false,
            solver: Solver::Gml,
            oracle_starts: 20,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CoreError::config("trials", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(CoreError::config("workers", "must be at least 1"));
        }
        if self.kinds.is_empty() {
            return Err(CoreError::config("kinds", "at least one scheme is required"));
        }
        if self.solver == Solver::Pga && self.oracle_starts == 0 {
            return Err(CoreError::config("oracle_starts", "must be at least 1"));
        }
        match self.axis {
            Axis::None => {
                if !self.values.is_empty() {
                    return Err(CoreError::config("values", "axis `none` takes no values"));
                }
            }
            axis => {
                if self.values.is_empty() {
                    return Err(CoreError::config("values", format!("axis `{axis}` needs values")));
                }
                if self.values.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::config("values", "must be finite"));
                }
                if self.values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CoreError::config("values", "must be strictly increasing"));
                }
                if axis.is_count() && self.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                    return Err(CoreError::config("values", format!("axis `{axis}` takes positive integers")));
                }
            }
        }
        for point in self.axis_points() {
            let (scenario, meta) = self.configure(point);
            scenario.validate()?;
            meta.validate()?;
        }
        Ok(())
    }

    /// Axis values to visit; a single `None` for axis `none`.
    pub fn axis_points(&self) -> Vec<Option<f64>> {
        match self.axis {
            Axis::None => vec![None],
            _ => self.values.iter().copied().map(Some).collect(),
        }
    }

    /// Scenario and optimizer settings at one axis value.
    pub fn configure(&self, value: Option<f64>) -> (ScenarioParams, MetaConfig) {
        let mut scenario = self.scenario.clone();
        let mut meta = self.meta.clone();
        if let Some(v) = value {
            match self.axis {
                Axis::Power => meta.power_budget = dbm_to_watts(v),
                Axis::Threshold => meta.rate_threshold = v,
                Axis::Antennas => scenario.n_antennas = v as usize,
                Axis::Users => scenario.n_users = v as usize,
                Axis::BsCount => scenario.n_bs = v as usize,
                Axis::None => {}
            }
        }
        (scenario, meta)
    }

    /// Largest user count over the axis, i.e. the number of rate columns.
    pub fn max_users(&self) -> usize {
        self.axis_points()
            .into_iter()
            .map(|p| self.configure(p).0.n_users)
            .max()
            .unwrap_or(0)
    }

    pub fn expected_rows(&self) -> usize {
        self.axis_points().len() * self.kinds.len() * self.trials
    }
}

/// Seed of trial `trial` under `master`, shared by every kind and axis value
/// so that schemes are compared on the same channels.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = master.wrapping_add((trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One row of the output table.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub kind: Scheme,
    pub axis: Axis,
    pub axis_value: Option<f64>,
    /// NaN for failed trials.
    pub sum_rate: f64,
    pub user_rates: Vec<f64>,
    pub feasible: bool,
    pub wall_ms: Option<f64>,
    /// Set when the trial hit a numeric fault.
    pub error: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Runs one (kind, axis value, trial) cell.
pub fn run_trial(spec: &ExperimentSpec, kind: Scheme, value: Option<f64>, trial: usize) -> TrialResult {
    let seed = trial_seed(spec.seed, trial);
    let (scenario, mut meta) = spec.configure(value);
    meta.seed = seed;
    let start = Instant::now();
    let outcome = sample_scenario(&scenario, seed).and_then(|real| match spec.solver {
        Solver::Gml => run_benchmark(&real, kind, &meta).map(|o| (o.report, o.feasible)),
        Solver::Pga => pga_oracle(&real, &meta, kind, spec.oracle_starts).map(|(_, r)| {
            let feasible = r.is_feasible();
            (r, feasible)
        }),
    });
    let wall_ms = spec.wall_time.then(|| start.elapsed().as_secs_f64() * 1e3);
    let mut row = TrialResult {
        seed,
        kind,
        axis: spec.axis,
        axis_value: value,
        sum_rate: f64::NAN,
        user_rates: Vec::new(),
        feasible: false,
        wall_ms,
        error: None,
    };
    match outcome {
        Ok((report, feasible)) if report.sum_rate.is_finite() => {
            row.sum_rate = report.sum_rate;
            row.user_rates = report.user_rate;
            row.feasible = feasible;
        }
        Ok(_) => row.error = Some("non-finite sum rate".into()),
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every (kind, axis value, trial) cell, `spec.workers` at a time.
/// Rows come back in (kind, axis value, trial) order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let mut jobs = Vec::with_capacity(spec.expected_rows());
    for &kind in &spec.kinds {
        for point in spec.axis_points() {
            for trial in 0..spec.trials {
                jobs.push((kind, point, trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| CoreError::config("workers", e.to_string()))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(kind, point, trial)| run_trial(spec, kind, point, trial))
            .collect()
    }))
}

fn csv_err(e: csv::Error) -> CoreError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CoreError::Io(io),
        other => CoreError::NumericFault(format!("csv: {other:?}")),
    }
}

/// Writes the table with `rate_users` per-user columns.
pub fn write_csv<W: Write>(rows: &[TrialResult], rate_users: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "seed",
        "kind",
        "axis",
        "axis_value",
        "sum_rate_bps_hz",
        "feasible",
        "wall_ms",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    header.extend((1..=rate_users).map(|k| format!("rate_user_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.seed.to_string(),
            r.kind.name().to_string(),
            r.axis.name().to_string(),
            r.axis_value.map_or(String::new(), |v| v.to_string()),
            r.sum_rate.to_string(),
            r.feasible.to_string(),
            r.wall_ms.map_or(String::new(), |v| format!("{v:.3}")),
        ];
        rec.extend((0..rate_users).map(|k| r.user_rates.get(k).map_or(String::new(), f64::to_string)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// The table as CSV text.
pub fn to_csv_string(rows: &[TrialResult], rate_users: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, rate_users, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}
