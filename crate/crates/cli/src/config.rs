//! Run configuration: a flat key-value file, one `key = value` per line,
//! `#` comments. Every knob of a run lives here so that one file plus the
//! command-line overrides fully determines the outputs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bompc_core::ecm::CellConstants;
use bompc_core::harness::{MismatchCurves, MismatchMode};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Nominal,
    Backoff,
    Model,
}

impl Case {
    pub fn as_str(&self) -> &'static str {
        match self {
            Case::Nominal => "nominal",
            Case::Backoff => "backoff",
            Case::Model => "model",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: Case,
    /// Path to the cell parameter table, or "builtin".
    pub cell_table: String,
    pub out_dir: PathBuf,
    pub ts_s: f64,
    /// Closed-loop episode length M.
    pub steps: usize,
    /// Prediction horizon N.
    pub horizon: usize,
    /// SOC-shortfall weight in the tuning objective.
    pub c1: f64,
    /// Soft-constraint weight in the OCP.
    pub lambda: f64,
    /// Input regularization in the OCP.
    pub epsilon: f64,
    pub soc_init: f64,
    pub u1_init: f64,
    pub eta: f64,
    pub capacity_ah: f64,
    pub i_max_a: f64,
    pub v_t_min_v: f64,
    pub v_t_max_v: f64,
    /// Disturb the prediction model.
    pub mismatch: bool,
    pub mismatch_seed: u64,
    pub mismatch_delta: f64,
    pub mismatch_params: MismatchCurves,
    pub mismatch_mode: MismatchMode,
    /// Algorithm-1 loop iterations; the total episode count is
    /// `bo_n_init + bo_budget`.
    pub bo_budget: usize,
    pub bo_n_init: usize,
    pub bo_seed: u64,
    pub backoff_max_v: f64,
    pub r1_mult_lo: f64,
    pub r1_mult_hi: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: Case::Nominal,
            cell_table: "builtin".into(),
            out_dir: PathBuf::from("out"),
            ts_s: 10.0,
            steps: 240,
            horizon: 10,
            c1: 1e-3,
            lambda: 1e4,
            epsilon: 1e-8,
            soc_init: 0.1,
            u1_init: 0.0,
            eta: 1.0,
            capacity_ah: 2.0,
            i_max_a: 6.0,
            v_t_min_v: 2.5,
            v_t_max_v: 4.2,
            mismatch: false,
            mismatch_seed: 11,
            mismatch_delta: 0.5,
            mismatch_params: MismatchCurves::default(),
            mismatch_mode: MismatchMode::PerCurve,
            bo_budget: 50,
            bo_n_init: 5,
            bo_seed: 4,
            backoff_max_v: 0.5,
            r1_mult_lo: 0.25,
            r1_mult_hi: 4.0,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str_checked(&text)
    }

    pub fn from_str_checked(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!(
                    "config line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |key: &str, value: &str, want: &str| {
            CliError::Config(format!("config key `{key}`: cannot parse `{value}` as {want}"))
        };
        let as_f64 =
            |key: &str, value: &str| value.parse::<f64>().map_err(|_| bad(key, value, "a number"));
        let as_usize = |key: &str, value: &str| {
            value.parse::<usize>().map_err(|_| bad(key, value, "a non-negative integer"))
        };
        let as_u64 = |key: &str, value: &str| {
            value.parse::<u64>().map_err(|_| bad(key, value, "an unsigned integer"))
        };
        let as_bool = |key: &str, value: &str| match value {
            "true" | "on" | "yes" => Ok(true),
            "false" | "off" | "no" => Ok(false),
            _ => Err(bad(key, value, "a boolean")),
        };
        match key {
            "case" => {
                self.case = match value {
                    "nominal" => Case::Nominal,
                    "backoff" => Case::Backoff,
                    "model" => Case::Model,
                    _ => {
                        return Err(CliError::Config(format!(
                            "config key `case`: expected nominal|backoff|model, got `{value}`"
                        )))
                    }
                }
            }
            "cell_table" => self.cell_table = value.to_string(),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "ts_s" => self.ts_s = as_f64(key, value)?,
            "steps" => self.steps = as_usize(key, value)?,
            "horizon" => self.horizon = as_usize(key, value)?,
            "c1" => self.c1 = as_f64(key, value)?,
            "lambda" => self.lambda = as_f64(key, value)?,
            "epsilon" => self.epsilon = as_f64(key, value)?,
            "soc_init" => self.soc_init = as_f64(key, value)?,
            "u1_init" => self.u1_init = as_f64(key, value)?,
            "eta" => self.eta = as_f64(key, value)?,
            "capacity_ah" => self.capacity_ah = as_f64(key, value)?,
            "i_max_a" => self.i_max_a = as_f64(key, value)?,
            "v_t_min_v" => self.v_t_min_v = as_f64(key, value)?,
            "v_t_max_v" => self.v_t_max_v = as_f64(key, value)?,
            "mismatch" => self.mismatch = as_bool(key, value)?,
            "mismatch_seed" => self.mismatch_seed = as_u64(key, value)?,
            "mismatch_delta" => self.mismatch_delta = as_f64(key, value)?,
            "mismatch_params" => {
                let mut curves = MismatchCurves { r0: false, r1: false, c1: false };
                for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    match part {
                        "r0" => curves.r0 = true,
                        "r1" => curves.r1 = true,
                        "c1" => curves.c1 = true,
                        _ => {
                            return Err(CliError::Config(format!(
                                "config key `mismatch_params`: unknown curve `{part}`"
                            )))
                        }
                    }
                }
                self.mismatch_params = curves;
            }
            "mismatch_mode" => {
                self.mismatch_mode = match value {
                    "per_curve" => MismatchMode::PerCurve,
                    "per_knot" => MismatchMode::PerKnot,
                    _ => {
                        return Err(CliError::Config(format!(
                            "config key `mismatch_mode`: expected per_curve|per_knot, got `{value}`"
                        )))
                    }
                }
            }
            "bo_budget" => self.bo_budget = as_usize(key, value)?,
            "bo_n_init" => self.bo_n_init = as_usize(key, value)?,
            "bo_seed" => self.bo_seed = as_u64(key, value)?,
            "backoff_max_v" => self.backoff_max_v = as_f64(key, value)?,
            "r1_mult_lo" => self.r1_mult_lo = as_f64(key, value)?,
            "r1_mult_hi" => self.r1_mult_hi = as_f64(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.steps == 0 {
            return fail("steps must be at least 1".into());
        }
        if !self.ts_s.is_finite() || self.ts_s <= 0.0 {
            return fail(format!("ts_s must be positive, got {}", self.ts_s));
        }
        if !self.c1.is_finite() || self.c1 <= 0.0 {
            return fail(format!("c1 must be positive, got {}", self.c1));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return fail(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.soc_init) {
            return fail(format!("soc_init must lie in [0, 1], got {}", self.soc_init));
        }
        if !self.u1_init.is_finite() {
            return fail("u1_init must be finite".into());
        }
        if self.eta.is_nan() || self.eta <= 0.0 || self.eta > 1.0 {
            return fail(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !self.capacity_ah.is_finite() || self.capacity_ah <= 0.0 {
            return fail(format!("capacity_ah must be positive, got {}", self.capacity_ah));
        }
        if !self.i_max_a.is_finite() || self.i_max_a <= 0.0 {
            return fail(format!("i_max_a must be positive, got {}", self.i_max_a));
        }
        if self.v_t_min_v.is_nan() || self.v_t_max_v.is_nan() || self.v_t_min_v >= self.v_t_max_v {
            return fail(format!(
                "voltage bounds must satisfy v_t_min_v < v_t_max_v, got [{}, {}]",
                self.v_t_min_v, self.v_t_max_v
            ));
        }
        if !(0.0..1.0).contains(&self.mismatch_delta) {
            return fail(format!(
                "mismatch_delta must lie in [0, 1), got {}",
                self.mismatch_delta
            ));
        }
        if self.bo_budget == 0 {
            return fail("bo_budget must be at least 1".into());
        }
        if self.bo_n_init == 0 {
            return fail("bo_n_init must be at least 1".into());
        }
        if !self.backoff_max_v.is_finite() || self.backoff_max_v <= 0.0 {
            return fail(format!(
                "backoff_max_v must be positive, got {}",
                self.backoff_max_v
            ));
        }
        if self.r1_mult_lo.is_nan() || self.r1_mult_hi.is_nan() || self.r1_mult_lo <= 0.0 || self.r1_mult_lo >= self.r1_mult_hi {
            return fail(format!(
                "r1 multiplier bounds must satisfy 0 < r1_mult_lo < r1_mult_hi, got [{}, {}]",
                self.r1_mult_lo, self.r1_mult_hi
            ));
        }
        Ok(())
    }

    pub fn cell_constants(&self) -> CellConstants {
        CellConstants {
            eta: self.eta,
            capacity_as: self.capacity_ah * 3600.0,
            i_max_a: self.i_max_a,
            v_t_min: self.v_t_min_v,
            v_t_max: self.v_t_max_v,
        }
    }
}
