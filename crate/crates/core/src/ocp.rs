//! Finite-horizon charging OCP and the MPC feedback policy.
//!
//! The controller minimizes the squared SOC shortfall over the horizon,
//! with the terminal-voltage window as one-sided quadratic soft
//! constraints and the current bounds as hard box constraints:
//!
//! ```text
//! min over i_0..i_{N-1} in [i_min, i_max]^N of
//!     sum_{k=0..N}   (1 - soc_k)^2
//!   + lambda * sum_{k=0..N-1} [ max(0, v_k - (v_max - b(soc_k)))^2
//!                             + max(0, v_min - v_k)^2 ]
//!   + eps * sum_k i_k^2
//! ```
//!
//! where predictions roll through the (possibly disturbed) cell model and
//! `b` is the SOC-dependent upper-bound backoff. The solver is direct
//! single shooting over the current vector: projected L-BFGS descent with
//! forward finite-difference gradients. The tiny input regularization
//! makes the fully-charged optimum unique.

use thiserror::Error;

use crate::ecm::{CellParams, EcmError, EcmState};
use crate::spline::Spline;

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("input sequence length {got} does not match horizon {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("initial state is not finite")]
    NonFiniteState,
    #[error("input {index} is not finite")]
    NonFiniteInput { index: usize },
    #[error("invalid OCP configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ecm(#[from] EcmError),
}

/// Soft-constraint weight default, per volt squared of violation.
pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e4;
/// Input regularization default (tie-break toward small currents).
pub const DEFAULT_INPUT_REG: f64 = 1e-8;
/// Horizon default.
pub const DEFAULT_HORIZON: usize = 10;

const MAX_ITERS: usize = 200;
const PG_TOL: f64 = 1e-7;
const COST_DECREASE_TOL: f64 = 1e-12;
const FD_REL_STEP: f64 = 1e-6;
const LBFGS_MEMORY: usize = 8;
const ARMIJO_C: f64 = 1e-4;
const LINE_SEARCH_STEPS: usize = 40;

/// Parameterized charging OCP. Immutable once built; controllers carry
/// their own warm-start memory.
#[derive(Debug, Clone)]
pub struct OcpConfig {
    horizon: usize,
    model: CellParams,
    backoff: Spline,
    penalty_weight: f64,
    input_reg: f64,
    ts_s: f64,
    i_min_a: f64,
    i_max_a: f64,
}

impl OcpConfig {
    /// Charging OCP with zero backoff, default weights, and current bounds
    /// `[0, i_max]` taken from the model constants.
    pub fn new(model: CellParams, horizon: usize, ts_s: f64) -> Result<Self, OcpError> {
        if horizon == 0 {
            return Err(OcpError::InvalidConfig("horizon must be at least 1".into()));
        }
        if !ts_s.is_finite() || ts_s <= 0.0 {
            return Err(OcpError::InvalidConfig(format!(
                "sampling time must be positive, got {ts_s}"
            )));
        }
        let i_max = model.constants().i_max_a;
        let backoff = Spline::constant(vec![0.0, 1.0], 0.0).expect("two-knot constant spline");
        Ok(Self {
            horizon,
            model,
            backoff,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            input_reg: DEFAULT_INPUT_REG,
            ts_s,
            i_min_a: 0.0,
            i_max_a: i_max,
        })
    }

    /// Install an upper-bound backoff curve (volts over SOC). Negative
    /// interpolation dips are clamped to zero at evaluation time.
    pub fn with_backoff(mut self, backoff: Spline) -> Self {
        self.backoff = backoff;
        self
    }

    /// Replace the prediction model.
    pub fn with_model(mut self, model: CellParams) -> Self {
        self.model = model;
        self
    }

    pub fn with_penalty_weight(mut self, weight: f64) -> Result<Self, OcpError> {
        if !weight.is_finite() || weight <= 0.0 {
            return Err(OcpError::InvalidConfig(format!(
                "penalty weight must be positive, got {weight}"
            )));
        }
        self.penalty_weight = weight;
        Ok(self)
    }

    pub fn with_input_reg(mut self, reg: f64) -> Result<Self, OcpError> {
        if !reg.is_finite() || reg < 0.0 {
            return Err(OcpError::InvalidConfig(format!(
                "input regularization must be non-negative, got {reg}"
            )));
        }
        self.input_reg = reg;
        Ok(self)
    }

    pub fn with_input_bounds(mut self, lo: f64, hi: f64) -> Result<Self, OcpError> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(OcpError::InvalidConfig(format!(
                "input bounds [{lo}, {hi}] must be finite and ordered"
            )));
        }
        self.i_min_a = lo;
        self.i_max_a = hi;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn model(&self) -> &CellParams {
        &self.model
    }

    pub fn backoff(&self) -> &Spline {
        &self.backoff
    }

    pub fn penalty_weight(&self) -> f64 {
        self.penalty_weight
    }

    pub fn input_reg(&self) -> f64 {
        self.input_reg
    }

    pub fn ts_s(&self) -> f64 {
        self.ts_s
    }

    pub fn input_bounds(&self) -> (f64, f64) {
        (self.i_min_a, self.i_max_a)
    }

    /// Effective backoff at one SOC, clamped non-negative.
    pub fn backoff_at(&self, soc: f64) -> f64 {
        self.backoff.eval(soc).max(0.0)
    }

    /// Upper voltage limit the controller enforces at one SOC.
    pub fn upper_limit_at(&self, soc: f64) -> f64 {
        self.model.constants().v_t_max - self.backoff_at(soc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    /// The line search stalled before reaching optimality.
    Degenerate,
}

/// Solved OCP: the optimal current sequence with its predicted trajectory.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub inputs: Vec<f64>,
    /// Predicted states, horizon + 1 entries starting at the given state.
    pub states: Vec<EcmState>,
    /// Predicted terminal voltages, one per stage.
    pub voltages: Vec<f64>,
    pub objective: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

/// Predicted trajectory through the prediction model.
fn rollout(
    cfg: &OcpConfig,
    x0: EcmState,
    inputs: &[f64],
) -> Result<(Vec<EcmState>, Vec<f64>), OcpError> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut voltages = Vec::with_capacity(inputs.len());
    states.push(x0);
    let mut state = x0;
    for &current in inputs {
        let (next, v_t) = cfg.model.step(state, current, cfg.ts_s)?;
        voltages.push(v_t);
        states.push(next);
        state = next;
    }
    Ok((states, voltages))
}

fn cost_of_rollout(cfg: &OcpConfig, states: &[EcmState], voltages: &[f64], inputs: &[f64]) -> f64 {
    let constants = cfg.model.constants();
    let mut cost = 0.0;
    for s in states {
        let shortfall = 1.0 - s.soc;
        cost += shortfall * shortfall;
    }
    for (v, s) in voltages.iter().zip(states.iter()) {
        let upper = constants.v_t_max - cfg.backoff_at(s.soc);
        let over = (v - upper).max(0.0);
        let under = (constants.v_t_min - v).max(0.0);
        cost += cfg.penalty_weight * (over * over + under * under);
    }
    cost + cfg.input_reg * inputs.iter().map(|i| i * i).sum::<f64>()
}

/// Objective value of an input sequence: stage costs through the last
/// predicted state, soft voltage penalties over the stages, and the input
/// regularization. Defined for any finite inputs; bounds are the solver's
/// concern.
pub fn ocp_cost(cfg: &OcpConfig, x0: EcmState, inputs: &[f64]) -> Result<f64, OcpError> {
    if inputs.len() != cfg.horizon {
        return Err(OcpError::LengthMismatch { got: inputs.len(), expected: cfg.horizon });
    }
    if !x0.is_finite() {
        return Err(OcpError::NonFiniteState);
    }
    if let Some(index) = inputs.iter().position(|i| !i.is_finite()) {
        return Err(OcpError::NonFiniteInput { index });
    }
    let (states, voltages) = rollout(cfg, x0, inputs)?;
    Ok(cost_of_rollout(cfg, &states, &voltages, inputs))
}

/// Minimize the OCP over the box-constrained input sequence. Cold solves
/// descend from both the full-current and zero-current sequences and keep
/// the better local minimizer; a warm start replaces both. Never panics on
/// non-convergence: the best iterate is returned with its status.
pub fn solve_ocp(
    cfg: &OcpConfig,
    x0: EcmState,
    warm_start: Option<&[f64]>,
) -> Result<OcpSolution, OcpError> {
    if !x0.is_finite() {
        return Err(OcpError::NonFiniteState);
    }
    if let Some(w) = warm_start {
        if w.len() != cfg.horizon {
            return Err(OcpError::LengthMismatch { got: w.len(), expected: cfg.horizon });
        }
        if let Some(index) = w.iter().position(|i| !i.is_finite()) {
            return Err(OcpError::NonFiniteInput { index });
        }
    }

    let (lo, hi) = (cfg.i_min_a, cfg.i_max_a);
    let clamp_all = |v: &mut Vec<f64>| {
        for x in v.iter_mut() {
            *x = x.clamp(lo, hi);
        }
    };
    let starts: Vec<Vec<f64>> = match warm_start {
        Some(w) => {
            let mut s = w.to_vec();
            clamp_all(&mut s);
            vec![s]
        }
        None => vec![vec![hi; cfg.horizon], vec![lo.max(0.0).min(hi); cfg.horizon]],
    };

    let mut best: Option<(f64, Vec<f64>, SolverStatus, usize)> = None;
    for start in starts {
        let (cost, inputs, status, iters) = minimize(cfg, x0, start)?;
        let better = match &best {
            Some((c, ..)) => cost < *c,
            None => true,
        };
        if better {
            best = Some((cost, inputs, status, iters));
        }
    }
    let (_, inputs, status, iterations) = best.expect("at least one start");
    let (states, voltages) = rollout(cfg, x0, &inputs)?;
    let objective = cost_of_rollout(cfg, &states, &voltages, &inputs);
    Ok(OcpSolution { inputs, states, voltages, objective, status, iterations })
}

/// Projected L-BFGS with forward finite-difference gradients and Armijo
/// backtracking along the projected path.
fn minimize(
    cfg: &OcpConfig,
    x0: EcmState,
    mut x: Vec<f64>,
) -> Result<(f64, Vec<f64>, SolverStatus, usize), OcpError> {
    let n = x.len();
    let (lo, hi) = (cfg.i_min_a, cfg.i_max_a);
    let cost = |inputs: &[f64]| -> Result<f64, OcpError> {
        let (states, voltages) = rollout(cfg, x0, inputs)?;
        Ok(cost_of_rollout(cfg, &states, &voltages, inputs))
    };
    let gradient = |inputs: &[f64], f0: f64| -> Result<Vec<f64>, OcpError> {
        let mut g = vec![0.0; n];
        let mut probe = inputs.to_vec();
        for i in 0..n {
            let h = FD_REL_STEP * inputs[i].abs().max(1.0);
            probe[i] = inputs[i] + h;
            g[i] = (cost(&probe)? - f0) / h;
            probe[i] = inputs[i];
        }
        Ok(g)
    };

    let mut fx = cost(&x)?;
    let mut g = gradient(&x, fx)?;
    // L-BFGS memory: (step, gradient difference, 1/(y.s)) triples.
    let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(LBFGS_MEMORY);
    let mut status = SolverStatus::MaxIterations;
    let mut iterations = MAX_ITERS;

    for iter in 0..MAX_ITERS {
        let pg_norm = (0..n)
            .map(|i| (x[i] - (x[i] - g[i]).clamp(lo, hi)).abs())
            .fold(0.0f64, f64::max);
        if pg_norm <= PG_TOL {
            status = SolverStatus::Converged;
            iterations = iter;
            break;
        }

        let mut direction = two_loop(&memory, &g);
        let descent: f64 = direction.iter().zip(g.iter()).map(|(d, gi)| d * gi).sum();
        if descent.is_nan() || descent >= 0.0 {
            memory.clear();
            direction = g.iter().map(|gi| -gi).collect();
        }

        // Backtracking along the projected path.
        let mut t = 1.0;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..LINE_SEARCH_STEPS {
            let trial: Vec<f64> =
                (0..n).map(|i| (x[i] + t * direction[i]).clamp(lo, hi)).collect();
            let step_inf = (0..n).map(|i| (trial[i] - x[i]).abs()).fold(0.0f64, f64::max);
            if step_inf == 0.0 {
                break;
            }
            let dir_deriv: f64 =
                (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if dir_deriv < 0.0 {
                let ft = cost(&trial)?;
                if ft <= fx + ARMIJO_C * dir_deriv {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            if memory.is_empty() {
                // steepest descent already failed: stalled
                status = SolverStatus::Degenerate;
                iterations = iter;
                break;
            }
            memory.clear();
            continue;
        };

        let g_new = gradient(&x_new, f_new)?;
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            if memory.len() == LBFGS_MEMORY {
                memory.remove(0);
            }
            memory.push((s, y, 1.0 / sy));
        }

        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if decrease <= COST_DECREASE_TOL {
            status = SolverStatus::Converged;
            iterations = iter + 1;
            break;
        }
    }

    Ok((fx, x, status, iterations))
}

/// Two-loop recursion: approximate -H * g from the stored curvature pairs.
fn two_loop(memory: &[(Vec<f64>, Vec<f64>, f64)], g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    if memory.is_empty() {
        for v in q.iter_mut() {
            *v = -*v;
        }
        return q;
    }
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let alpha = rho * s.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y.iter()) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    // initial Hessian scaling from the most recent pair
    let (s_last, y_last, _) = memory.last().expect("non-empty memory");
    let yy: f64 = y_last.iter().map(|v| v * v).sum();
    let sy: f64 = s_last.iter().zip(y_last.iter()).map(|(a, b)| a * b).sum();
    let gamma = if yy > 0.0 { sy / yy } else { 1.0 };
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), alpha) in memory.iter().zip(alphas.iter().rev()) {
        let beta = rho * y.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s.iter()) {
            *qi += si * (alpha - beta);
        }
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

/// MPC feedback: repeatedly solve the OCP and apply the first input,
/// warm-starting each solve from the previous solution shifted one stage
/// (last stage duplicated). Single-owner; clone for concurrent loops.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: OcpConfig,
    warm: Option<Vec<f64>>,
    last: Option<OcpSolution>,
}

impl MpcController {
    pub fn new(cfg: OcpConfig) -> Self {
        Self { cfg, warm: None, last: None }
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    /// Applied current for the measured state.
    pub fn policy(&mut self, state: EcmState) -> Result<f64, OcpError> {
        let solution = solve_ocp(&self.cfg, state, self.warm.as_deref())?;
        let applied = solution.inputs[0];
        let mut warm = solution.inputs[1..].to_vec();
        warm.push(*solution.inputs.last().expect("horizon >= 1"));
        self.warm = Some(warm);
        self.last = Some(solution);
        Ok(applied)
    }

    pub fn last_solution(&self) -> Option<&OcpSolution> {
        self.last.as_ref()
    }

    /// Drop warm-start memory (fresh cold solve on the next call).
    pub fn reset(&mut self) {
        self.warm = None;
        self.last = None;
    }
}
