//! Bayesian-optimization outer loop.
//!
//! Expected Improvement acquisition over a fitted GP surrogate, maximized
//! by seeded quasi-uniform sampling with local coordinate refinement, and
//! the strictly sequential tuning loop: fit surrogate, propose, evaluate,
//! append. Everything is deterministic for a given seed.

use thiserror::Error;

use crate::gp::{GpDataset, GpError, GpHyperparams, GpModel};
use crate::sampling;

#[derive(Debug, Error)]
pub enum BoError {
    #[error("domain needs at least one dimension")]
    EmptyDomain,
    #[error("dimension {index}: bounds [{lo}, {hi}] must be finite and ordered")]
    BadBounds { index: usize, lo: f64, hi: f64 },
    #[error("budget and n_init must be at least 1")]
    BadBudget,
    #[error("theta0 has dimension {got}, expected {expected}")]
    Theta0Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Box domain for the tuning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDomain {
    bounds: Vec<(f64, f64)>,
}

impl ParamDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, BoError> {
        if bounds.is_empty() {
            return Err(BoError::EmptyDomain);
        }
        for (index, (lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(BoError::BadBounds { index, lo: *lo, hi: *hi });
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.bounds.iter())
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Project a point onto the box, component-wise.
    pub fn clamp(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(self.bounds.iter())
            .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
            .collect()
    }
}

/// Exploration margin for Expected Improvement, in standardized target
/// units (multiplied by the model's target scale at evaluation time).
pub const EI_MARGIN: f64 = 0.01;

const ACQ_SAMPLES: usize = 512;
const ACQ_TOP: usize = 8;
const ACQ_REFINE_ITERS: usize = 50;

/// Expected improvement of the posterior at `query` over `best`, in the
/// maximization convention. Zero-variance points fall back to the
/// deterministic surplus. Always non-negative.
pub fn expected_improvement(model: &GpModel, query: &[f64], best: f64) -> Result<f64, GpError> {
    let (mean, var) = model.posterior(query)?;
    let margin = EI_MARGIN * model.target_scale();
    let surplus = mean - best - margin;
    let sd = var.sqrt();
    if sd <= 0.0 {
        return Ok(surplus.max(0.0));
    }
    let t = surplus / sd;
    Ok((surplus * norm_cdf(t) + sd * norm_pdf(t)).max(0.0))
}

/// Approximate the EI maximizer over the domain: seeded quasi-uniform
/// candidates, keep the best few, refine each by projected coordinate
/// descent, return the winner. Deterministic for a given seed and model.
pub fn propose_next(model: &GpModel, domain: &ParamDomain, seed: u64) -> Result<Vec<f64>, BoError> {
    let best = model.max_target().unwrap_or(0.0);
    let ei = |point: &[f64]| -> Result<f64, GpError> { expected_improvement(model, point, best) };

    let samples = sampling::quasi_uniform(domain.bounds(), ACQ_SAMPLES, seed);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(samples.len());
    for p in samples {
        scored.push((ei(&p)?, p));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(ACQ_TOP);

    let mut best_point = scored[0].1.clone();
    let mut best_score = scored[0].0;
    for (score0, start) in scored {
        let mut point = start;
        let mut current = score0;
        for iter in 0..ACQ_REFINE_ITERS {
            let shrink = 0.25 * 0.9f64.powi(iter as i32);
            for d in 0..domain.dim() {
                let (lo, hi) = domain.bounds()[d];
                let step = shrink * (hi - lo);
                for dir in [step, -step] {
                    let mut trial = point.clone();
                    trial[d] = (trial[d] + dir).clamp(lo, hi);
                    let s = ei(&trial)?;
                    if s > current {
                        current = s;
                        point = trial;
                    }
                }
            }
        }
        if current > best_score {
            best_score = current;
            best_point = point;
        }
    }
    Ok(best_point)
}

/// One evaluated point in a tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoRecord {
    /// Evaluation index, 0-based over the whole trace.
    pub n: usize,
    pub theta: Vec<f64>,
    /// Recorded objective value (penalized for failed evaluations).
    pub objective: f64,
    pub best_so_far: f64,
    /// Surrogate hyperparameters used to propose this point; `None` for
    /// the initial design.
    pub hypers: Option<GpHyperparams>,
    /// True if the objective failed and a penalty was recorded instead.
    pub failed: bool,
}

/// Full history of a tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoTrace {
    pub records: Vec<BoRecord>,
    pub seed: u64,
}

impl BoTrace {
    pub fn best(&self) -> Option<&BoRecord> {
        self.records
            .iter()
            .filter(|r| !r.failed)
            .max_by(|a, b| a.objective.partial_cmp(&b.objective).unwrap_or(std::cmp::Ordering::Equal))
    }
}

/// Settings for [`run_bo`]. `budget` is the total number of objective
/// evaluations including the initial design; `theta0`, when given, is the
/// first initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoSettings {
    pub budget: usize,
    pub n_init: usize,
    pub seed: u64,
    pub theta0: Option<Vec<f64>>,
}

impl BoSettings {
    pub fn new(budget: usize, n_init: usize, seed: u64) -> Self {
        Self { budget, n_init, seed, theta0: None }
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Self {
        self.theta0 = Some(theta0);
        self
    }
}

/// Run the sequential tuning loop. The objective returns `None` on
/// failure; failed evaluations are recorded as the worst value observed so
/// far minus one target scale and the loop continues. Non-finite objective
/// values are treated as failures.
pub fn run_bo<F>(
    mut objective: F,
    domain: &ParamDomain,
    settings: &BoSettings,
) -> Result<BoTrace, BoError>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    if settings.budget == 0 || settings.n_init == 0 {
        return Err(BoError::BadBudget);
    }
    if let Some(theta0) = &settings.theta0 {
        if theta0.len() != domain.dim() {
            return Err(BoError::Theta0Dimension { got: theta0.len(), expected: domain.dim() });
        }
    }

    let mut records: Vec<BoRecord> = Vec::with_capacity(settings.budget);
    let mut evaluate = |theta: Vec<f64>, hypers: Option<GpHyperparams>, records: &mut Vec<BoRecord>| {
        let outcome = objective(&theta).filter(|g| g.is_finite());
        let failed = outcome.is_none();
        let value = outcome.unwrap_or_else(|| failure_penalty(records));
        let best_so_far = records
            .last()
            .map(|r: &BoRecord| r.best_so_far.max(value))
            .unwrap_or(value);
        records.push(BoRecord {
            n: records.len(),
            theta,
            objective: value,
            best_so_far,
            hypers,
            failed,
        });
    };

    // Initial design: theta0 first, then quasi-uniform points, truncated
    // to the budget.
    let extra = settings.n_init - usize::from(settings.theta0.is_some());
    let mut init: Vec<Vec<f64>> = Vec::with_capacity(settings.n_init);
    if let Some(theta0) = &settings.theta0 {
        init.push(domain.clamp(theta0));
    }
    init.extend(sampling::quasi_uniform(domain.bounds(), extra, settings.seed));
    init.truncate(settings.budget);
    for theta in init {
        evaluate(theta, None, &mut records);
    }

    while records.len() < settings.budget {
        let n = records.len();
        let data = GpDataset::new(
            records.iter().map(|r| r.theta.clone()).collect(),
            records.iter().map(|r| r.objective).collect(),
            0.0,
        )?;
        let iter_seed = sampling::derive_seed(settings.seed, n as u64);
        let (theta, hypers) = match GpModel::fit(&data, domain.bounds()) {
            Ok(model) => {
                let theta = propose_next(&model, domain, iter_seed)?;
                (theta, Some(model.hyperparams().clone()))
            }
            // Surrogate trouble must not abort the run; fall back to a
            // quasi-uniform point for this iteration.
            Err(_) => {
                let fallback = sampling::quasi_uniform(domain.bounds(), 1, iter_seed);
                (fallback.into_iter().next().expect("one point requested"), None)
            }
        };
        evaluate(theta, hypers, &mut records);
    }

    Ok(BoTrace { records, seed: settings.seed })
}

/// Penalty recorded for a failed evaluation: worst observed so far minus
/// one target scale (falls back to -1 before any successes).
fn failure_penalty(records: &[BoRecord]) -> f64 {
    let observed: Vec<f64> =
        records.iter().filter(|r| !r.failed).map(|r| r.objective).collect();
    if observed.is_empty() {
        return -1.0;
    }
    let worst = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let var = observed.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt().max(1.0);
    worst - scale
}

pub(crate) fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF via the Abramowitz-Stegun rational approximation
/// (absolute error below 1e-7, ample for acquisition ranking).
pub(crate) fn norm_cdf(x: f64) -> f64 {
    if x < -8.0 {
        return 0.0;
    }
    if x > 8.0 {
        return 1.0;
    }
    let t = 1.0 / (1.0 + 0.231_641_9 * x.abs());
    let poly = t
        * (0.319_381_530
            + t * (-0.356_563_782 + t * (1.781_477_937 + t * (-1.821_255_978 + t * 1.330_274_429))));
    let tail = norm_pdf(x.abs()) * poly;
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_domain(dim: usize) -> ParamDomain {
        ParamDomain::new(vec![(0.0, 1.0); dim]).unwrap()
    }

    /// Model with two observations at the interval ends, unit scales.
    fn two_point_model() -> GpModel {
        let data = GpDataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0], 0.0).unwrap();
        let hypers = GpHyperparams::new(1.0, vec![0.2], 1e-8).unwrap();
        GpModel::with_hyperparams(&data, hypers, 0.0).unwrap()
    }

    #[test]
    fn ei_zero_for_exact_incumbent_without_uncertainty() {
        let data = GpDataset::new(vec![vec![0.5]], vec![1.0], 0.0).unwrap();
        let hypers = GpHyperparams::new(1.0, vec![0.3], 0.0).unwrap();
        let model = GpModel::with_hyperparams(&data, hypers, 0.0).unwrap();
        // At the training point the posterior is (1.0, ~0).
        let ei = expected_improvement(&model, &[0.5], 1.0).unwrap();
        assert!(ei.abs() < 1e-6, "ei {ei}");
    }

    #[test]
    fn ei_deterministic_surplus_at_zero_variance() {
        // Posterior at a noiseless training point has variance ~0 and mean
        // equal to the target; surplus over best is mean - best - margin.
        let data = GpDataset::new(vec![vec![0.5]], vec![2.0], 0.0).unwrap();
        let hypers = GpHyperparams::new(1.0, vec![0.3], 0.0).unwrap();
        let model = GpModel::with_hyperparams(&data, hypers, 0.0).unwrap();
        let best = 2.0 - EI_MARGIN - 0.5;
        let ei = expected_improvement(&model, &[0.5], best).unwrap();
        assert!((ei - 0.5).abs() < 1e-5, "ei {ei}");
    }

    #[test]
    fn ei_at_zero_surplus_equals_pdf_height() {
        // Choose best so that mean - best - margin = 0 at a far query where
        // the posterior is the prior (mean 0, variance 1): EI = phi(0).
        let model = two_point_model();
        let best = -EI_MARGIN;
        let ei = expected_improvement(&model, &[100.0], best).unwrap();
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((ei - phi0).abs() < 1e-9, "ei {ei} vs {phi0}");
    }

    #[test]
    fn ei_matches_monte_carlo() {
        // E[max(0, X - b)] with X ~ N(mean, 1) estimated from 1e6 draws.
        let model = two_point_model();
        let best = -EI_MARGIN + 0.3; // surplus -0.3 at the prior mean
        let analytic = expected_improvement(&model, &[100.0], best).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sum = 0.0;
        let n = 1_000_000;
        let mut i = 0;
        while i < n {
            // Box-Muller
            let u1 = sampling::unit_f64(&mut rng).max(1e-12);
            let u2 = sampling::unit_f64(&mut rng);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
            for z in [r * c, r * s] {
                let x = 0.0 + z; // prior mean 0, sd 1
                sum += (x - best - EI_MARGIN).max(0.0);
                i += 1;
            }
        }
        let mc = sum / i as f64;
        assert!((analytic - mc).abs() <= 1e-2, "analytic {analytic} vs mc {mc}");
    }

    #[test]
    fn ei_nonnegative_everywhere() {
        let data = GpDataset::new(
            (0..6).map(|i| vec![i as f64 / 5.0]).collect(),
            vec![0.3, -0.1, 0.8, 0.2, -0.4, 0.5],
            0.0,
        )
        .unwrap();
        let model = GpModel::fit(&data, &[(0.0, 1.0)]).unwrap();
        let best = model.max_target().unwrap();
        for p in sampling::quasi_uniform(&[(0.0, 1.0)], 1000, 5) {
            let ei = expected_improvement(&model, &p, best).unwrap();
            assert!(ei >= 0.0, "ei {ei} at {p:?}");
        }
    }

    #[test]
    fn proposals_stay_in_bounds() {
        let domain = ParamDomain::new(vec![(-2.0, -1.0), (3.0, 7.0)]).unwrap();
        let data = GpDataset::new(
            vec![vec![-1.5, 4.0], vec![-1.2, 6.0], vec![-1.8, 3.5]],
            vec![0.1, 0.4, -0.2],
            0.0,
        )
        .unwrap();
        let model = GpModel::fit(&data, domain.bounds()).unwrap();
        for seed in 0..100 {
            let p = propose_next(&model, &domain, seed).unwrap();
            assert!(domain.contains(&p), "{p:?} escaped bounds (seed {seed})");
        }
    }

    #[test]
    fn symmetric_two_point_proposal_prefers_interior() {
        let model = two_point_model();
        let domain = unit_domain(1);
        let p = propose_next(&model, &domain, 11).unwrap();
        assert!(p[0] > 0.05 && p[0] < 0.95, "proposal {p:?}");
        let best = model.max_target().unwrap();
        let ei_p = expected_improvement(&model, &p, best).unwrap();
        for q in [[0.0], [1.0]] {
            let ei_q = expected_improvement(&model, &q, best).unwrap();
            assert!(ei_p >= ei_q);
        }
    }

    #[test]
    fn proposal_dominates_raw_samples() {
        let data = GpDataset::new(
            (0..7).map(|i| vec![i as f64 / 6.0, (i as f64 * 0.37).fract()]).collect(),
            vec![0.0, 0.4, -0.3, 0.9, 0.1, -0.6, 0.2],
            0.0,
        )
        .unwrap();
        let domain = unit_domain(2);
        let model = GpModel::fit(&data, domain.bounds()).unwrap();
        let best = model.max_target().unwrap();
        let seed = 123;
        let proposal = propose_next(&model, &domain, seed).unwrap();
        let ei_proposal = expected_improvement(&model, &proposal, best).unwrap();
        for raw in sampling::quasi_uniform(domain.bounds(), 512, seed) {
            let ei_raw = expected_improvement(&model, &raw, best).unwrap();
            assert!(ei_proposal >= ei_raw - 1e-12);
        }
    }

    #[test]
    fn budget_one_trace_has_single_record_at_theta0() {
        let domain = unit_domain(1);
        let settings = BoSettings::new(1, 1, 4).with_theta0(vec![0.25]);
        let trace = run_bo(|t| Some(-(t[0] - 0.3).powi(2)), &domain, &settings).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].theta, vec![0.25]);
        assert!(trace.records[0].hypers.is_none());
    }

    #[test]
    fn quadratic_1d_converges() {
        let domain = unit_domain(1);
        let settings = BoSettings::new(25, 5, 1).with_theta0(vec![0.9]);
        let trace = run_bo(|t| Some(-(t[0] - 0.3).powi(2)), &domain, &settings).unwrap();
        let best = trace.best().unwrap();
        assert!(
            (best.theta[0] - 0.3).abs() <= 0.05,
            "best theta {:?}",
            best.theta
        );
    }

    #[test]
    fn concave_bowl_2d_converges() {
        let domain = unit_domain(2);
        let f = |t: &[f64]| Some(2.0 - (t[0] - 0.4).powi(2) - (t[1] - 0.6).powi(2));
        let settings = BoSettings::new(30, 5, 2);
        let trace = run_bo(f, &domain, &settings).unwrap();
        let best = trace.best().unwrap();
        assert!(best.objective >= 2.0 * 0.99, "best value {}", best.objective);
    }

    #[test]
    fn incumbent_monotone_and_bounded() {
        let domain = unit_domain(2);
        let f = |t: &[f64]| Some((t[0] * 7.0).sin() * (t[1] * 3.0).cos());
        let trace = run_bo(f, &domain, &BoSettings::new(20, 4, 9)).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for r in &trace.records {
            assert!(r.best_so_far >= prev);
            prev = r.best_so_far;
            assert!(domain.contains(&r.theta));
        }
        assert_eq!(trace.records.len(), 20);
    }

    #[test]
    fn deterministic_traces() {
        let domain = unit_domain(2);
        let f = |t: &[f64]| Some(-(t[0] - 0.2).powi(2) - (t[1] - 0.7).powi(2));
        let settings = BoSettings::new(15, 4, 77);
        let a = run_bo(f, &domain, &settings).unwrap();
        let b = run_bo(f, &domain, &settings).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.theta, rb.theta);
            assert_eq!(ra.objective.to_bits(), rb.objective.to_bits());
            assert_eq!(ra.best_so_far.to_bits(), rb.best_so_far.to_bits());
        }
    }

    #[test]
    fn failures_recorded_and_loop_continues() {
        let domain = unit_domain(1);
        // Fail on roughly half the domain.
        let f = |t: &[f64]| if t[0] > 0.5 { None } else { Some(t[0]) };
        let trace = run_bo(f, &domain, &BoSettings::new(12, 4, 3)).unwrap();
        assert_eq!(trace.records.len(), 12);
        let failures = trace.records.iter().filter(|r| r.failed).count();
        assert!(failures > 0, "expected at least one failure");
        // Penalized values sit at or below the worst success.
        let worst_success = trace
            .records
            .iter()
            .filter(|r| !r.failed)
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        for r in trace.records.iter().filter(|r| r.failed) {
            assert!(r.objective <= worst_success);
        }
        // best() ignores failures
        assert!(!trace.best().unwrap().failed);
    }

    #[test]
    fn settings_validation() {
        let domain = unit_domain(1);
        assert!(matches!(
            run_bo(|_| Some(0.0), &domain, &BoSettings::new(0, 1, 0)),
            Err(BoError::BadBudget)
        ));
        assert!(matches!(
            run_bo(|_| Some(0.0), &domain, &BoSettings::new(1, 0, 0)),
            Err(BoError::BadBudget)
        ));
        let settings = BoSettings::new(2, 1, 0).with_theta0(vec![0.0, 0.0]);
        assert!(matches!(
            run_bo(|_| Some(0.0), &domain, &settings),
            Err(BoError::Theta0Dimension { got: 2, expected: 1 })
        ));
        assert!(ParamDomain::new(vec![]).is_err());
        assert!(ParamDomain::new(vec![(1.0, 0.0)]).is_err());
        assert!(ParamDomain::new(vec![(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn norm_cdf_sanity() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((norm_cdf(1.96) - 0.975).abs() < 2e-4);
        assert!((norm_cdf(-1.96) - 0.025).abs() < 2e-4);
        assert_eq!(norm_cdf(9.0), 1.0);
        assert_eq!(norm_cdf(-9.0), 0.0);
    }
}
