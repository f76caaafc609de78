//! R-RC equivalent-circuit battery model.
//!
//! A series resistance plus one RC pair, with all four circuit parameters
//! (OCV, R0, R1, C1) given as cubic splines over state of charge. The same
//! model serves as the simulated plant and, with disturbed parameters, as
//! the controller's prediction model.
//!
//! Sign convention: positive current charges the cell and raises the
//! terminal voltage,
//!
//! ```text
//! soc'  = soc + (eta * ts / q) * i
//! u1'   = (u1 - r1 * i) * exp(-ts / (r1 * c1)) + r1 * i
//! v_t   = ocv(soc) + u1' + r0 * i
//! ```
//!
//! with parameters evaluated at the pre-step SOC. The reported terminal
//! voltage is sampled at the end of the hold interval, so it includes the
//! polarization response `u1'` to the current held during the step; this
//! is the quantity a sampled battery-management loop measures right before
//! the next control update, and the one the voltage constraint must cap.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::spline::{Spline, SplineError};

/// Expected header of a cell parameter table.
pub const TABLE_HEADER: &str = "soc,ocv_v,r0_ohm,r1_ohm,c1_f";

/// The synthetic parameter table shipped with the crate.
pub const BUILTIN_TABLE: &str = include_str!("../data/nmc_cell.csv");

#[derive(Debug, Error)]
pub enum EcmError {
    #[error("row {row}: {source}")]
    Table { row: usize, source: TableError },
    #[error("invalid cell constant: {0}")]
    InvalidConstant(String),
    #[error("{curve} interpolant dips to {min} on [0,1]; must stay positive")]
    NonPositiveCurve { curve: &'static str, min: f64 },
    #[error("ocv({soc}) = {ocv} V conflicts with terminal voltage bounds [{lo}, {hi}] V")]
    OcvOutOfBounds { soc: f64, ocv: f64, lo: f64, hi: f64 },
    #[error("non-finite {0} passed to step")]
    NonFiniteInput(&'static str),
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("failed to read parameter table: {0}")]
    Io(String),
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("expected header `{TABLE_HEADER}`, got `{0}`")]
    Header(String),
    #[error("expected 5 columns, got {0}")]
    ColumnCount(usize),
    #[error("column `{col}`: cannot parse `{text}`")]
    Parse { col: &'static str, text: String },
    #[error("column `{col}`: value {value} must be positive")]
    NonPositive { col: &'static str, value: f64 },
    #[error("soc values must be strictly increasing")]
    SocOrder,
    #[error("soc column must cover [0, 1], table spans [{0}, {1}]")]
    SocRange(f64, f64),
    #[error("need at least 2 data rows, got {0}")]
    TooFewRows(usize),
}

/// Scalar cell constants that accompany a parameter table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConstants {
    /// Coulombic efficiency, dimensionless in (0, 1].
    pub eta: f64,
    /// Discharge capacity in ampere-seconds.
    pub capacity_as: f64,
    /// Maximum charging current in amperes.
    pub i_max_a: f64,
    /// Lower terminal voltage bound in volts.
    pub v_t_min: f64,
    /// Upper terminal voltage bound in volts.
    pub v_t_max: f64,
}

impl Default for CellConstants {
    /// 2 Ah cell charged at up to 6 A between 2.5 and 4.2 V.
    fn default() -> Self {
        Self {
            eta: 1.0,
            capacity_as: 7200.0,
            i_max_a: 6.0,
            v_t_min: 2.5,
            v_t_max: 4.2,
        }
    }
}

/// Battery state: state of charge and the polarization voltage across
/// the RC pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcmState {
    /// State of charge, dimensionless, nominally in [0, 1].
    pub soc: f64,
    /// Polarization voltage in volts.
    pub u1: f64,
}

impl EcmState {
    pub fn new(soc: f64, u1: f64) -> Self {
        Self { soc, u1 }
    }

    pub fn is_finite(&self) -> bool {
        self.soc.is_finite() && self.u1.is_finite()
    }
}

impl fmt::Display for EcmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(soc {:.4}, u1 {:.4} V)", self.soc, self.u1)
    }
}

/// Point evaluation of the four parameter curves at one SOC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointParams {
    pub ocv: f64,
    pub r0: f64,
    pub r1: f64,
    pub c1: f64,
}

/// SOC-gridded cell parameters with spline interpolants, plus the scalar
/// constants. Immutable after load; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    soc_grid: Vec<f64>,
    ocv: Spline,
    r0: Spline,
    r1: Spline,
    c1: Spline,
    constants: CellConstants,
}

impl CellParams {
    /// Build cell parameters from explicit grid columns.
    pub fn from_grid(
        soc: Vec<f64>,
        ocv: Vec<f64>,
        r0: Vec<f64>,
        r1: Vec<f64>,
        c1: Vec<f64>,
        constants: CellConstants,
    ) -> Result<Self, EcmError> {
        validate_constants(&constants)?;
        let cell = Self {
            ocv: Spline::new(soc.clone(), ocv)?,
            r0: Spline::new(soc.clone(), r0)?,
            r1: Spline::new(soc.clone(), r1)?,
            c1: Spline::new(soc.clone(), c1)?,
            soc_grid: soc,
            constants,
        };
        cell.validate_curves()?;
        Ok(cell)
    }

    /// Parse a parameter table in the documented CSV format. Lines starting
    /// with `#` are ignored; the header must match [`TABLE_HEADER`] exactly.
    pub fn from_csv_str(text: &str, constants: CellConstants) -> Result<Self, EcmError> {
        let mut rows: Vec<(usize, [f64; 5])> = Vec::new();
        let mut header_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != TABLE_HEADER {
                    return Err(EcmError::Table {
                        row: lineno + 1,
                        source: TableError::Header(line.to_string()),
                    });
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(EcmError::Table {
                    row: lineno + 1,
                    source: TableError::ColumnCount(fields.len()),
                });
            }
            let cols = ["soc", "ocv_v", "r0_ohm", "r1_ohm", "c1_f"];
            let mut parsed = [0.0; 5];
            for (j, (field, col)) in fields.iter().zip(cols.iter()).enumerate() {
                parsed[j] = field.parse::<f64>().map_err(|_| EcmError::Table {
                    row: lineno + 1,
                    source: TableError::Parse { col, text: field.to_string() },
                })?;
                if !parsed[j].is_finite() {
                    return Err(EcmError::Table {
                        row: lineno + 1,
                        source: TableError::Parse { col, text: field.to_string() },
                    });
                }
            }
            for (j, col) in cols.iter().enumerate().skip(2) {
                if parsed[j] <= 0.0 {
                    return Err(EcmError::Table {
                        row: lineno + 1,
                        source: TableError::NonPositive { col, value: parsed[j] },
                    });
                }
            }
            rows.push((lineno + 1, parsed));
        }
        if !header_seen {
            return Err(EcmError::Table { row: 0, source: TableError::Header(String::new()) });
        }
        if rows.len() < 2 {
            return Err(EcmError::Table {
                row: rows.last().map(|(n, _)| *n).unwrap_or(0),
                source: TableError::TooFewRows(rows.len()),
            });
        }
        for w in rows.windows(2) {
            if w[1].1[0] <= w[0].1[0] {
                return Err(EcmError::Table { row: w[1].0, source: TableError::SocOrder });
            }
        }
        let first = rows[0].1[0];
        let last = rows[rows.len() - 1].1[0];
        if first != 0.0 || last != 1.0 {
            return Err(EcmError::Table {
                row: rows[0].0,
                source: TableError::SocRange(first, last),
            });
        }

        let col = |j: usize| rows.iter().map(|(_, r)| r[j]).collect::<Vec<f64>>();
        Self::from_grid(col(0), col(1), col(2), col(3), col(4), constants)
    }

    /// Load a parameter table from a file path.
    pub fn from_csv_path(path: &Path, constants: CellConstants) -> Result<Self, EcmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EcmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text, constants)
    }

    /// The synthetic table shipped with the crate, with default constants.
    pub fn builtin() -> Self {
        Self::from_csv_str(BUILTIN_TABLE, CellConstants::default())
            .expect("builtin table must validate")
    }

    /// The synthetic table with caller-supplied constants.
    pub fn builtin_with(constants: CellConstants) -> Result<Self, EcmError> {
        Self::from_csv_str(BUILTIN_TABLE, constants)
    }

    fn validate_curves(&self) -> Result<(), EcmError> {
        for (curve, spline) in [("r0", &self.r0), ("r1", &self.r1), ("c1", &self.c1)] {
            let min = spline.sampled_min(0.0, 1.0, 1000);
            if min <= 0.0 {
                return Err(EcmError::NonPositiveCurve { curve, min });
            }
        }
        let c = &self.constants;
        let ocv0 = self.ocv.eval(0.0);
        if ocv0 <= c.v_t_min || ocv0 >= c.v_t_max {
            return Err(EcmError::OcvOutOfBounds {
                soc: 0.0,
                ocv: ocv0,
                lo: c.v_t_min,
                hi: c.v_t_max,
            });
        }
        let ocv1 = self.ocv.eval(1.0);
        if ocv1 > c.v_t_max {
            return Err(EcmError::OcvOutOfBounds {
                soc: 1.0,
                ocv: ocv1,
                lo: c.v_t_min,
                hi: c.v_t_max,
            });
        }
        Ok(())
    }

    /// Non-fatal issues worth surfacing: currently a 1000-point scan for
    /// non-monotone interpolated OCV.
    pub fn validation_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let mut prev = self.ocv.eval(0.0);
        for i in 1..=1000 {
            let x = i as f64 / 1000.0;
            let v = self.ocv.eval(x);
            if v < prev {
                warnings.push(format!(
                    "interpolated OCV is non-monotone near soc {x:.3} ({v:.6} V after {prev:.6} V)"
                ));
                break;
            }
            prev = v;
        }
        warnings
    }

    pub fn soc_grid(&self) -> &[f64] {
        &self.soc_grid
    }

    pub fn constants(&self) -> &CellConstants {
        &self.constants
    }

    pub fn ocv_spline(&self) -> &Spline {
        &self.ocv
    }

    pub fn r0_spline(&self) -> &Spline {
        &self.r0
    }

    pub fn r1_spline(&self) -> &Spline {
        &self.r1
    }

    pub fn c1_spline(&self) -> &Spline {
        &self.c1
    }

    /// Mean of the R1 grid values; the reference scale for prediction-model
    /// tuning bounds.
    pub fn mean_r1(&self) -> f64 {
        let vals = self.r1.values();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// Replace one parameter curve with new grid values on the same SOC grid,
    /// revalidating all invariants.
    pub fn with_curve(&self, curve: Curve, values: Vec<f64>) -> Result<Self, EcmError> {
        let mut ocv = self.ocv.values().to_vec();
        let mut r0 = self.r0.values().to_vec();
        let mut r1 = self.r1.values().to_vec();
        let mut c1 = self.c1.values().to_vec();
        match curve {
            Curve::Ocv => ocv = values,
            Curve::R0 => r0 = values,
            Curve::R1 => r1 = values,
            Curve::C1 => c1 = values,
        }
        Self::from_grid(self.soc_grid.clone(), ocv, r0, r1, c1, self.constants)
    }

    /// Replace the R1 interpolant with an arbitrary spline (knots need not
    /// match the SOC grid). Positivity is revalidated.
    pub fn with_r1_spline(&self, r1: Spline) -> Result<Self, EcmError> {
        let cell = Self { r1, ..self.clone() };
        cell.validate_curves()?;
        Ok(cell)
    }

    /// Evaluate the four parameter curves at one SOC (clamped to [0, 1]
    /// by the spline extrapolation rule).
    pub fn params_at(&self, soc: f64) -> PointParams {
        PointParams {
            ocv: self.ocv.eval(soc),
            r0: self.r0.eval(soc),
            r1: self.r1.eval(soc),
            c1: self.c1.eval(soc),
        }
    }

    /// Advance the state one sampling period under `current_a` and return
    /// the next state together with the terminal voltage at the end of
    /// the hold interval.
    pub fn step(
        &self,
        state: EcmState,
        current_a: f64,
        ts_s: f64,
    ) -> Result<(EcmState, f64), EcmError> {
        if !state.is_finite() {
            return Err(EcmError::NonFiniteInput("state"));
        }
        if !current_a.is_finite() {
            return Err(EcmError::NonFiniteInput("current"));
        }
        if !ts_s.is_finite() {
            return Err(EcmError::NonFiniteInput("step size"));
        }
        if ts_s <= 0.0 {
            return Err(EcmError::NonPositiveStep(ts_s));
        }
        let p = self.params_at(state.soc);
        let c = &self.constants;
        let soc_next = state.soc + c.eta * ts_s / c.capacity_as * current_a;
        let decay = (-ts_s / (p.r1 * p.c1)).exp();
        let u1_next = (state.u1 - p.r1 * current_a) * decay + p.r1 * current_a;
        let v_t = p.ocv + u1_next + p.r0 * current_a;
        Ok((EcmState::new(soc_next, u1_next), v_t))
    }
}

fn validate_constants(c: &CellConstants) -> Result<(), EcmError> {
    let fail = |msg: String| Err(EcmError::InvalidConstant(msg));
    if c.eta.is_nan() || c.eta <= 0.0 || c.eta > 1.0 {
        return fail(format!("eta must be in (0, 1], got {}", c.eta));
    }
    if !c.capacity_as.is_finite() || c.capacity_as <= 0.0 {
        return fail(format!("capacity must be positive, got {}", c.capacity_as));
    }
    if !c.i_max_a.is_finite() || c.i_max_a <= 0.0 {
        return fail(format!("i_max must be positive, got {}", c.i_max_a));
    }
    if !c.v_t_min.is_finite() || !c.v_t_max.is_finite() || c.v_t_min >= c.v_t_max {
        return fail(format!(
            "voltage bounds must be ordered and finite, got [{}, {}]",
            c.v_t_min, c.v_t_max
        ));
    }
    Ok(())
}

/// Identifies one of the four parameter curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Ocv,
    R0,
    R1,
    C1,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_cell(r0: f64, r1: f64, c1: f64) -> CellParams {
        CellParams::from_grid(
            vec![0.0, 1.0],
            vec![3.2, 4.0],
            vec![r0, r0],
            vec![r1, r1],
            vec![c1, c1],
            CellConstants::default(),
        )
        .unwrap()
    }

    #[test]
    fn builtin_table_validates() {
        let cell = CellParams::builtin();
        assert_eq!(cell.soc_grid().len(), 11);
        assert_eq!(cell.params_at(0.0).ocv, 3.0);
        assert_eq!(cell.params_at(1.0).ocv, 4.18);
        assert!(cell.validation_warnings().is_empty());
    }

    #[test]
    fn params_at_grid_knot_returns_table_row() {
        let cell = CellParams::builtin();
        let p = cell.params_at(0.5);
        assert!((p.ocv - 3.71).abs() < 1e-12);
        assert!((p.r0 - 0.029).abs() < 1e-12);
        assert!((p.r1 - 0.019).abs() < 1e-12);
        assert!((p.c1 - 325.0).abs() < 1e-9);
    }

    #[test]
    fn params_clamped_below_zero_soc() {
        let cell = CellParams::builtin();
        assert_eq!(cell.params_at(-0.1), cell.params_at(0.0));
        assert_eq!(cell.params_at(1.2), cell.params_at(1.0));
    }

    #[test]
    fn rest_step_preserves_state() {
        let cell = constant_cell(0.03, 0.02, 2000.0);
        let (next, v_t) = cell.step(EcmState::new(0.4, 0.0), 0.0, 10.0).unwrap();
        assert_eq!(next.soc, 0.4);
        assert_eq!(next.u1, 0.0);
        assert!((v_t - cell.params_at(0.4).ocv).abs() < 1e-12);
    }

    #[test]
    fn relaxation_factor_is_analytic() {
        let cell = constant_cell(0.03, 0.02, 2000.0);
        let (next, v_t) = cell.step(EcmState::new(0.4, 0.1), 0.0, 10.0).unwrap();
        let tau: f64 = 0.02 * 2000.0;
        let relaxed = 0.1 * (-10.0 / tau).exp();
        assert!((next.u1 - relaxed).abs() < 1e-15);
        // end-of-interval sampling: the reported voltage carries the
        // relaxed polarization, not the pre-step one
        assert!((v_t - (cell.params_at(0.4).ocv + relaxed)).abs() < 1e-12);
    }

    #[test]
    fn u1_converges_to_r1_times_current() {
        // Fixed point of the u1 recursion under constant current: after
        // 10 time constants the gap to r1*i has shrunk by exp(-10).
        let cell = constant_cell(0.03, 0.02, 2000.0);
        let ts = 10.0;
        let tau: f64 = 0.02 * 2000.0;
        let steps = (10.0 * tau / ts).ceil() as usize;
        let current = 0.5;
        let mut state = EcmState::new(0.1, 0.0);
        for _ in 0..steps {
            state = cell.step(state, current, ts).unwrap().0;
        }
        assert!(
            (state.u1 - 0.02 * current).abs() <= 1e-6,
            "u1 {} vs {}",
            state.u1,
            0.02 * current
        );
    }

    #[test]
    fn rest_voltage_returns_to_ocv() {
        let cell = CellParams::builtin();
        let ts = 10.0;
        let mut state = EcmState::new(0.3, 0.0);
        for _ in 0..40 {
            state = cell.step(state, 6.0, ts).unwrap().0;
        }
        // Longest time constant on the grid is r1*c1 = 0.022 * 400 = 8.8 s;
        // rest for 14 of them so the residual decays below a microvolt.
        let tau_max = 0.022 * 400.0;
        let rest_steps = (14.0 * tau_max / ts).ceil() as usize;
        for _ in 0..rest_steps {
            state = cell.step(state, 0.0, ts).unwrap().0;
        }
        let (_, v_t) = cell.step(state, 0.0, ts).unwrap();
        assert!((v_t - cell.params_at(state.soc).ocv).abs() <= 1e-6);
    }

    #[test]
    fn step_is_deterministic() {
        let cell = CellParams::builtin();
        let a = cell.step(EcmState::new(0.37, 0.04), 3.3, 10.0).unwrap();
        let b = cell.step(EcmState::new(0.37, 0.04), 3.3, 10.0).unwrap();
        assert_eq!(a.0.soc.to_bits(), b.0.soc.to_bits());
        assert_eq!(a.0.u1.to_bits(), b.0.u1.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let cell = CellParams::builtin();
        let s = EcmState::new(0.5, 0.0);
        assert!(cell.step(EcmState::new(f64::NAN, 0.0), 1.0, 10.0).is_err());
        assert!(cell.step(s, f64::INFINITY, 10.0).is_err());
        assert!(cell.step(s, 1.0, 0.0).is_err());
        assert!(cell.step(s, 1.0, -1.0).is_err());
    }

    #[test]
    fn two_row_constant_table_loads() {
        let csv = "soc,ocv_v,r0_ohm,r1_ohm,c1_f\n0.0,3.2,0.03,0.02,2000\n1.0,3.2,0.03,0.02,2000\n";
        let cell = CellParams::from_csv_str(csv, CellConstants::default()).unwrap();
        assert_eq!(cell.params_at(0.5).ocv, 3.2);
        assert_eq!(cell.params_at(0.5).r0, 0.03);
    }

    #[test]
    fn zero_r1_row_rejected_with_row_number() {
        let csv = "soc,ocv_v,r0_ohm,r1_ohm,c1_f\n0.0,3.2,0.03,0.02,2000\n0.5,3.5,0.03,0.0,2000\n1.0,3.9,0.03,0.02,2000\n";
        let err = CellParams::from_csv_str(csv, CellConstants::default()).unwrap_err();
        match err {
            EcmError::Table { row, source: TableError::NonPositive { col, .. } } => {
                assert_eq!(row, 3);
                assert_eq!(col, "r1_ohm");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn table_format_errors() {
        let bad_header = "soc,ocv,r0,r1,c1\n0,3,0.03,0.02,2000\n";
        assert!(matches!(
            CellParams::from_csv_str(bad_header, CellConstants::default()),
            Err(EcmError::Table { source: TableError::Header(_), .. })
        ));
        let bad_range = "soc,ocv_v,r0_ohm,r1_ohm,c1_f\n0.1,3.2,0.03,0.02,2000\n1.0,3.9,0.03,0.02,2000\n";
        assert!(matches!(
            CellParams::from_csv_str(bad_range, CellConstants::default()),
            Err(EcmError::Table { source: TableError::SocRange(..), .. })
        ));
        let unordered = "soc,ocv_v,r0_ohm,r1_ohm,c1_f\n0.0,3.2,0.03,0.02,2000\n0.6,3.6,0.03,0.02,2000\n0.4,3.5,0.03,0.02,2000\n";
        assert!(matches!(
            CellParams::from_csv_str(unordered, CellConstants::default()),
            Err(EcmError::Table { row: 4, source: TableError::SocOrder })
        ));
        let short = "soc,ocv_v,r0_ohm,r1_ohm,c1_f\n0.0,3.2,0.03,0.02,2000\n";
        assert!(matches!(
            CellParams::from_csv_str(short, CellConstants::default()),
            Err(EcmError::Table { source: TableError::TooFewRows(1), .. })
        ));
        let bad_field = "soc,ocv_v,r0_ohm,r1_ohm,c1_f\n0.0,3.2,abc,0.02,2000\n1.0,3.9,0.03,0.02,2000\n";
        assert!(matches!(
            CellParams::from_csv_str(bad_field, CellConstants::default()),
            Err(EcmError::Table { row: 2, source: TableError::Parse { col: "r0_ohm", .. } })
        ));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let csv = "# comment\n\nsoc,ocv_v,r0_ohm,r1_ohm,c1_f\n# another\n0.0,3.2,0.03,0.02,2000\n1.0,3.9,0.03,0.02,2000\n";
        assert!(CellParams::from_csv_str(csv, CellConstants::default()).is_ok());
    }

    #[test]
    fn constants_validated() {
        let bad = CellConstants { eta: 0.0, ..CellConstants::default() };
        assert!(CellParams::builtin_with(bad).is_err());
        let bad = CellConstants { v_t_min: 4.5, ..CellConstants::default() };
        assert!(CellParams::builtin_with(bad).is_err());
    }

    #[test]
    fn ocv_bounds_checked_against_voltage_limits() {
        // ocv(0) at or below v_t_min must be rejected.
        let err = CellParams::from_grid(
            vec![0.0, 1.0],
            vec![2.4, 4.0],
            vec![0.03, 0.03],
            vec![0.02, 0.02],
            vec![2000.0, 2000.0],
            CellConstants::default(),
        );
        assert!(matches!(err, Err(EcmError::OcvOutOfBounds { .. })));
        // ocv(1) above v_t_max must be rejected.
        let err = CellParams::from_grid(
            vec![0.0, 1.0],
            vec![3.0, 4.25],
            vec![0.03, 0.03],
            vec![0.02, 0.02],
            vec![2000.0, 2000.0],
            CellConstants::default(),
        );
        assert!(matches!(err, Err(EcmError::OcvOutOfBounds { .. })));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn soc_non_decreasing_under_charging(
                currents in proptest::collection::vec(0.0f64..6.0, 1..60),
                soc0 in 0.0f64..0.5,
            ) {
                let cell = CellParams::builtin();
                let mut state = EcmState::new(soc0, 0.0);
                let r1_max = 0.03;
                for i in &currents {
                    let (next, _) = cell.step(state, *i, 10.0).unwrap();
                    prop_assert!(next.soc >= state.soc);
                    // |u1| stays within the contraction bound
                    prop_assert!(next.u1.abs() <= r1_max * 6.0 + 1e-9);
                    state = next;
                }
            }
        }
    }
}
