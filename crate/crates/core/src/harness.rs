//! Closed-loop episode execution and the two case-study parameterizations.
//!
//! An episode runs the MPC policy against the plant for a fixed number of
//! steps and scores the result with the global objective
//!
//! ```text
//! G = sum_{k=0..M} [ -c1 * (1 - soc_k)^2 - max(0, v_k - v_max)^2 ]
//! ```
//!
//! which trades charging speed against upper-voltage violations. The plant
//! and the controller's prediction model may use different cell parameters;
//! the mismatch generator produces the disturbed prediction model.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bo::ParamDomain;
use crate::ecm::{CellParams, Curve, EcmError, EcmState};
use crate::ocp::{MpcController, OcpConfig, OcpError};
use crate::sampling;
use crate::spline::{Spline, SplineError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("episode length must be at least 1")]
    ZeroSteps,
    #[error("objective weight must be positive, got {0}")]
    BadWeight(f64),
    #[error("mismatch magnitude {0} must lie in [0, 1)")]
    BadMagnitude(f64),
    #[error("case parameter vector has dimension {got}, expected {expected}")]
    ThetaDimension { got: usize, expected: usize },
    #[error("case domain has dimension {got}, expected {expected}")]
    DomainDimension { got: usize, expected: usize },
    #[error("non-finite case parameter at index {0}")]
    NonFiniteTheta(usize),
    #[error(transparent)]
    Ecm(#[from] EcmError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Default weight balancing SOC shortfall against voltage violations.
pub const DEFAULT_SOC_WEIGHT: f64 = 1e-3;

/// Number of spline grid points both case studies tune.
pub const CASE_KNOT_COUNT: usize = 7;

/// Uniform SOC knots used by both case-study splines.
pub fn case_knots() -> Vec<f64> {
    (0..CASE_KNOT_COUNT).map(|i| i as f64 / (CASE_KNOT_COUNT - 1) as f64).collect()
}

/// SOC thresholds reported in the time-to-SOC table.
pub const TIME_TO_SOC_THRESHOLDS: [f64; 3] = [0.8, 0.9, 0.95];

/// One closed-loop charging episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Visited states, `steps + 1` entries (fewer if the episode failed).
    pub states: Vec<EcmState>,
    /// Applied currents, one per completed step.
    pub inputs: Vec<f64>,
    /// Realized terminal voltages, one per completed step.
    pub voltages: Vec<f64>,
    /// Upper voltage limit the controller enforced at each visited state.
    pub upper_limits: Vec<f64>,
    /// Global objective value (non-positive by construction).
    pub objective: f64,
    /// Largest upper-voltage violation in volts.
    pub max_violation_v: f64,
    /// Seconds to first reach each of [`TIME_TO_SOC_THRESHOLDS`].
    pub time_to_soc_s: [Option<f64>; 3],
    /// Sampling period used by the episode.
    pub ts_s: f64,
    /// True if the solver failed mid-episode (trajectory truncated).
    pub failed: bool,
}

/// Interpolated first-crossing time of an SOC threshold, in seconds.
pub fn time_to_soc(states: &[EcmState], ts_s: f64, threshold: f64) -> Option<f64> {
    if states.first()?.soc >= threshold {
        return Some(0.0);
    }
    for (k, pair) in states.windows(2).enumerate() {
        let (prev, next) = (pair[0].soc, pair[1].soc);
        if next >= threshold {
            let frac = if next > prev { (threshold - prev) / (next - prev) } else { 1.0 };
            return Some((k as f64 + frac) * ts_s);
        }
    }
    None
}

/// Hinge above the plant's upper voltage bound.
fn violation(v: f64, v_t_max: f64) -> f64 {
    (v - v_t_max).max(0.0)
}

/// Global objective over a recorded trajectory: the hinge term uses the
/// plant's upper bound (not the backed-off controller limit), and the
/// missing final-stage voltage is the last step voltage held.
pub fn closed_loop_objective(
    states: &[EcmState],
    voltages: &[f64],
    soc_weight: f64,
    v_t_max: f64,
) -> f64 {
    let mut g = 0.0;
    for (k, s) in states.iter().enumerate() {
        let shortfall = 1.0 - s.soc;
        g -= soc_weight * shortfall * shortfall;
        // voltage of step k; the final state reuses the last step voltage
        let v = voltages.get(k).or(voltages.last());
        if let Some(&v) = v {
            let over = violation(v, v_t_max);
            g -= over * over;
        }
    }
    g
}

/// Run one closed-loop episode of `steps` MPC steps against the plant.
/// A solver failure marks the episode failed and truncates the trajectory
/// instead of propagating the error.
pub fn run_episode(
    plant: &CellParams,
    controller_cfg: &OcpConfig,
    x_init: EcmState,
    steps: usize,
    soc_weight: f64,
) -> Result<EpisodeResult, HarnessError> {
    if steps == 0 {
        return Err(HarnessError::ZeroSteps);
    }
    if !soc_weight.is_finite() || soc_weight <= 0.0 {
        return Err(HarnessError::BadWeight(soc_weight));
    }
    let ts = controller_cfg.ts_s();
    let v_t_max = plant.constants().v_t_max;

    let mut controller = MpcController::new(controller_cfg.clone());
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut voltages = Vec::with_capacity(steps);
    let mut upper_limits = Vec::with_capacity(steps + 1);
    let mut failed = false;

    let mut state = x_init;
    states.push(state);
    upper_limits.push(controller_cfg.upper_limit_at(state.soc));
    for _ in 0..steps {
        let current = match controller.policy(state) {
            Ok(i) => i,
            Err(_) => {
                failed = true;
                break;
            }
        };
        let (next, v_t) = match plant.step(state, current, ts) {
            Ok(r) => r,
            Err(_) => {
                failed = true;
                break;
            }
        };
        inputs.push(current);
        voltages.push(v_t);
        states.push(next);
        upper_limits.push(controller_cfg.upper_limit_at(next.soc));
        state = next;
    }

    let objective = closed_loop_objective(&states, &voltages, soc_weight, v_t_max);
    let max_violation_v =
        voltages.iter().map(|v| violation(*v, v_t_max)).fold(0.0f64, f64::max);
    let time_to_soc_s = [
        time_to_soc(&states, ts, TIME_TO_SOC_THRESHOLDS[0]),
        time_to_soc(&states, ts, TIME_TO_SOC_THRESHOLDS[1]),
        time_to_soc(&states, ts, TIME_TO_SOC_THRESHOLDS[2]),
    ];
    Ok(EpisodeResult {
        states,
        inputs,
        voltages,
        upper_limits,
        objective,
        max_violation_v,
        time_to_soc_s,
        ts_s: ts,
        failed,
    })
}

/// Which parameter curves the mismatch disturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MismatchCurves {
    pub r0: bool,
    pub r1: bool,
    pub c1: bool,
}

impl Default for MismatchCurves {
    fn default() -> Self {
        Self { r0: true, r1: true, c1: true }
    }
}

/// Per-curve or per-knot disturbance factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MismatchMode {
    #[default]
    PerCurve,
    PerKnot,
}

/// Seeded multiplicative disturbance of the prediction model parameters.
/// OCV is never disturbed: it defines the charge-termination target itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchSpec {
    pub seed: u64,
    /// Maximum relative disturbance, in [0, 1).
    pub magnitude: f64,
    pub curves: MismatchCurves,
    pub mode: MismatchMode,
}

impl MismatchSpec {
    pub fn new(seed: u64, magnitude: f64) -> Result<Self, HarnessError> {
        if !(0.0..1.0).contains(&magnitude) {
            return Err(HarnessError::BadMagnitude(magnitude));
        }
        Ok(Self {
            seed,
            magnitude,
            curves: MismatchCurves::default(),
            mode: MismatchMode::default(),
        })
    }
}

/// Disturb the cell's r0/r1/c1 grid values by factors drawn uniformly from
/// `[1 - magnitude, 1 + magnitude]`. Factors are drawn in the fixed order
/// r0, r1, c1 (skipping curves not selected), so a given seed always maps
/// to the same disturbance.
pub fn make_mismatch(cell: &CellParams, spec: &MismatchSpec) -> Result<CellParams, HarnessError> {
    if !(0.0..1.0).contains(&spec.magnitude) {
        return Err(HarnessError::BadMagnitude(spec.magnitude));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let factor = |rng: &mut ChaCha8Rng| {
        1.0 + spec.magnitude * (2.0 * sampling::unit_f64(rng) - 1.0)
    };
    let mut disturbed = cell.clone();
    let selected = [
        (Curve::R0, spec.curves.r0),
        (Curve::R1, spec.curves.r1),
        (Curve::C1, spec.curves.c1),
    ];
    for (curve, enabled) in selected {
        if !enabled {
            continue;
        }
        let values = match curve {
            Curve::R0 => disturbed.r0_spline().values().to_vec(),
            Curve::R1 => disturbed.r1_spline().values().to_vec(),
            Curve::C1 => disturbed.c1_spline().values().to_vec(),
            Curve::Ocv => unreachable!("ocv is never disturbed"),
        };
        let scaled: Vec<f64> = match spec.mode {
            MismatchMode::PerCurve => {
                let f = factor(&mut rng);
                values.iter().map(|v| v * f).collect()
            }
            MismatchMode::PerKnot => values.iter().map(|v| v * factor(&mut rng)).collect(),
        };
        disturbed = disturbed.with_curve(curve, scaled)?;
    }
    Ok(disturbed)
}

/// A case-study controller configuration built from a parameter vector.
#[derive(Debug, Clone)]
pub struct CaseBuild {
    pub cfg: OcpConfig,
    /// True if any component had to be clipped into the domain.
    pub clipped: bool,
}

fn check_theta(theta: &[f64], domain: &ParamDomain) -> Result<(), HarnessError> {
    if theta.len() != CASE_KNOT_COUNT {
        return Err(HarnessError::ThetaDimension { got: theta.len(), expected: CASE_KNOT_COUNT });
    }
    if domain.dim() != CASE_KNOT_COUNT {
        return Err(HarnessError::DomainDimension {
            got: domain.dim(),
            expected: CASE_KNOT_COUNT,
        });
    }
    if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
        return Err(HarnessError::NonFiniteTheta(i));
    }
    Ok(())
}

/// Default tuning domain for the backoff case: each knot in [0, max_v].
pub fn backoff_domain(max_v: f64) -> Result<ParamDomain, HarnessError> {
    Ok(ParamDomain::new(vec![(0.0, max_v); CASE_KNOT_COUNT]).expect("static bounds"))
}

/// Case study 1: install the parameter vector as a cubic-spline backoff on
/// the upper voltage bound, over the uniform SOC knots. Out-of-domain
/// components are clipped and flagged.
pub fn case_backoff(
    theta: &[f64],
    base: &OcpConfig,
    domain: &ParamDomain,
) -> Result<CaseBuild, HarnessError> {
    check_theta(theta, domain)?;
    let clamped = domain.clamp(theta);
    let clipped = clamped.iter().zip(theta.iter()).any(|(a, b)| a != b);
    let spline = Spline::new(case_knots(), clamped)?;
    Ok(CaseBuild { cfg: base.clone().with_backoff(spline), clipped })
}

/// Tuning domain for the prediction-model case: each R1 knot within
/// multiplier bounds of the plant's mean R1.
pub fn model_domain(
    plant: &CellParams,
    lo_mult: f64,
    hi_mult: f64,
) -> Result<ParamDomain, HarnessError> {
    let mean = plant.mean_r1();
    Ok(ParamDomain::new(vec![(lo_mult * mean, hi_mult * mean); CASE_KNOT_COUNT])
        .expect("positive multiplier bounds"))
}

/// Case study 2: replace the prediction model's R1 curve with a cubic
/// spline through the parameter vector over the uniform SOC knots. The
/// other (disturbed) parameters are kept; the backoff is left untouched
/// (zero in the shipped configuration).
pub fn case_model(
    theta: &[f64],
    base: &OcpConfig,
    domain: &ParamDomain,
) -> Result<CaseBuild, HarnessError> {
    check_theta(theta, domain)?;
    let clamped = domain.clamp(theta);
    let clipped = clamped.iter().zip(theta.iter()).any(|(a, b)| a != b);
    let spline = Spline::new(case_knots(), clamped)?;
    let model = base.model().with_r1_spline(spline)?;
    Ok(CaseBuild { cfg: base.clone().with_model(model), clipped })
}

/// Initial parameter vector for the model case: the prediction model's
/// (disturbed) R1 curve sampled at the case knots.
pub fn model_theta0(prediction_model: &CellParams) -> Vec<f64> {
    case_knots().iter().map(|z| prediction_model.r1_spline().eval(*z)).collect()
}
