//! Flat `key = value` configuration files.

use crate::channel::{db_to_linear, dbm_to_watts};
use crate::error::{CoreError, Result};
use crate::gml::PenaltyMode;
use crate::rate::Scheme;

use super::{Axis, ExperimentSpec, Solver};

/// One `key = value` entry with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits a config text into entries. Blank lines and `#` comments are
/// skipped; a `#` anywhere on a line starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CoreError::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(CoreError::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_ascii_lowercase(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CoreError::config(key, format!("cannot parse `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CoreError::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// Comma-separated numbers.
pub fn parse_values(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

/// Comma-separated scheme names such as `RSMA-MA,SDMA-FPA`, or `all`.
pub fn parse_kinds(value: &str) -> Result<Vec<Scheme>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(Scheme::ALL.to_vec());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentSpec {
    /// Applies one setting. Keys are case-insensitive.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        let k = key.as_str();
        let v = value.trim();
        let s = &mut self.scenario;
        let m = &mut self.meta;
        match k {
            "n_bs" | "bs_count" => s.n_bs = num(k, v)?,
            "n_antennas" | "antennas" => s.n_antennas = num(k, v)?,
            "n_users" | "users" => s.n_users = num(k, v)?,
            "n_tx_paths" => s.n_tx_paths = num(k, v)?,
            "n_rx_paths" => s.n_rx_paths = num(k, v)?,
            "wavelength" => s.wavelength = num(k, v)?,
            "region_wavelengths" => s.region_wavelengths = num(k, v)?,
            "noise_power" => s.noise_power = num(k, v)?,
            "noise_dbm" => s.noise_power = dbm_to_watts(num(k, v)?),
            "path_loss_exp" => s.path_loss_exp = num(k, v)?,
            "ref_gain" => s.ref_gain = num(k, v)?,
            "ref_gain_db" => s.ref_gain = db_to_linear(num(k, v)?),
            "bs_radius" => s.bs_radius = num(k, v)?,
            "user_radius" => s.user_radius = num(k, v)?,
            "diagonal_prm" => s.diagonal_prm = flag(k, v)?,

            "inner_iters" => m.inner_iters = num(k, v)?,
            "outer_iters" => m.outer_iters = num(k, v)?,
            "epochs" => m.epochs = num(k, v)?,
            "lr_precoder" => m.lr_precoder = num(k, v)?,
            "lr_common" => m.lr_common = num(k, v)?,
            "lr_position" => m.lr_position = num(k, v)?,
            "zeta1" => m.zeta[0] = num(k, v)?,
            "zeta2" => m.zeta[1] = num(k, v)?,
            "zeta3" => m.zeta[2] = num(k, v)?,
            "zeta4" => m.zeta[3] = num(k, v)?,
            "penalty_mode" => m.penalty_mode = v.parse::<PenaltyMode>()?,
            "rate_threshold" => m.rate_threshold = num(k, v)?,
            "power_budget" => m.power_budget = num(k, v)?,
            "power_dbm" => m.power_budget = dbm_to_watts(num(k, v)?),
            "hidden_precoder" => m.hidden_precoder = num(k, v)?,
            "hidden_common" => m.hidden_common = num(k, v)?,
            "hidden_position" => m.hidden_position = num(k, v)?,
            "step_scale_common" => m.step_scale[0] = num(k, v)?,
            "step_scale_precoder" => m.step_scale[1] = num(k, v)?,
            "step_scale_position" => m.step_scale[2] = num(k, v)?,
            "step_decay" => m.step_decay = num(k, v)?,
            "normalize_inputs" => m.normalize_inputs = flag(k, v)?,

            "axis" => self.axis = v.parse::<Axis>()?,
            "values" => self.values = parse_values(k, v)?,
            "trials" => self.trials = num(k, v)?,
            "kinds" => self.kinds = parse_kinds(v)?,
            "out" => self.out = (!v.is_empty()).then(|| v.into()),
            "seed" => self.seed = num(k, v)?,
            "workers" => self.workers = num(k, v)?,
            "wall_time" => self.wall_time = flag(k, v)?,
            "solver" => self.solver = v.parse::<Solver>()?,
            "oracle_starts" => self.oracle_starts = num(k, v)?,
            _ => return Err(CoreError::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Builds a spec from defaults plus the entries of a config text.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        for e in parse_entries(text)? {
            spec.set(&e.key, &e.value)?;
        }
        Ok(spec)
    }

    pub fn from_config_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_text(&text)
    }
}
