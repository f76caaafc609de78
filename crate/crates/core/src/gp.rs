//! Gaussian-process regression surrogate.
//!
//! Squared-exponential kernel with per-dimension length scales, constant
//! prior mean, and exact posterior inference through a Cholesky
//! factorization of the noisy Gram matrix. Hyperparameters are fitted by
//! maximizing the log marginal likelihood with a gradient-free multi-start
//! coordinate search; inputs are normalized to the unit box and targets
//! standardized internally so the search bounds transfer across problems.

use thiserror::Error;

use crate::sampling;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("inputs and targets have different counts ({inputs} vs {targets})")]
    CountMismatch { inputs: usize, targets: usize },
    #[error("input point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },
    #[error("query has dimension {got}, expected {expected}")]
    QueryDimension { got: usize, expected: usize },
    #[error("non-finite {0} in dataset")]
    NonFinite(&'static str),
    #[error("hyperparameters must be positive: {0}")]
    InvalidHyperparameters(String),
    #[error("gram matrix is not positive definite even after jitter")]
    NotPositiveDefinite,
    #[error("hyperparameter fit requires at least one data point")]
    EmptyFit,
    #[error("fit bounds have dimension {got}, expected {expected}")]
    BoundsDimension { got: usize, expected: usize },
}

/// Observed tuning evaluations: points in the tuning domain with scalar
/// scores and a shared target-noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GpDataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    noise_var: f64,
}

impl GpDataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, noise_var: f64) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::CountMismatch { inputs: inputs.len(), targets: targets.len() });
        }
        if let Some(first) = inputs.first() {
            let expected = first.len();
            for (index, p) in inputs.iter().enumerate() {
                if p.len() != expected {
                    return Err(GpError::DimensionMismatch { index, got: p.len(), expected });
                }
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(GpError::NonFinite("input"));
                }
            }
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(GpError::NonFinite("target"));
        }
        if noise_var.is_nan() || noise_var < 0.0 || !noise_var.is_finite() {
            return Err(GpError::NonFinite("noise variance"));
        }
        Ok(Self { inputs, targets, noise_var })
    }

    pub fn empty(dim: usize) -> Self {
        let _ = dim;
        Self { inputs: Vec::new(), targets: Vec::new(), noise_var: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }
}

/// Kernel hyperparameters: squared-exponential signal variance, one length
/// scale per input dimension, and the observation noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub signal_var: f64,
    pub length_scales: Vec<f64>,
    pub noise_var: f64,
}

impl GpHyperparams {
    pub fn new(signal_var: f64, length_scales: Vec<f64>, noise_var: f64) -> Result<Self, GpError> {
        if !signal_var.is_finite() || signal_var <= 0.0 {
            return Err(GpError::InvalidHyperparameters(format!("signal_var = {signal_var}")));
        }
        if length_scales.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(GpError::InvalidHyperparameters(format!(
                "length_scales = {length_scales:?}"
            )));
        }
        if !noise_var.is_finite() || noise_var < 0.0 {
            return Err(GpError::InvalidHyperparameters(format!("noise_var = {noise_var}")));
        }
        Ok(Self { signal_var, length_scales, noise_var })
    }

    /// Geometric midpoint of the fit search box, in standardized units.
    pub fn mid_range(dim: usize) -> Self {
        Self {
            signal_var: (SIGNAL_VAR_BOUNDS.0 * SIGNAL_VAR_BOUNDS.1).sqrt(),
            length_scales: vec![(LENGTH_SCALE_BOUNDS.0 * LENGTH_SCALE_BOUNDS.1).sqrt(); dim],
            noise_var: (NOISE_VAR_BOUNDS.0 * NOISE_VAR_BOUNDS.1).sqrt(),
        }
    }
}

// Search bounds in standardized space (inputs in the unit box, targets at
// unit variance).
const LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-2, 1e1);
const SIGNAL_VAR_BOUNDS: (f64, f64) = (1e-4, 1e2);
const NOISE_VAR_BOUNDS: (f64, f64) = (1e-8, 1e-2);

const JITTER_FRACTION: f64 = 1e-9;
const FIT_STARTS: usize = 16;
const FIT_SWEEPS: usize = 4;
const FIT_SEED: u64 = 0x6770_5f66_6974; // fixed; fitting must be reproducible

/// Fitted (or directly constructed) GP ready for posterior queries.
/// Immutable; queries are pure.
#[derive(Debug, Clone)]
pub struct GpModel {
    // training data in model space (possibly normalized)
    xs: Vec<Vec<f64>>,
    hypers: GpHyperparams,
    prior_mean: f64,
    chol: Cholesky,
    /// alpha = k_gamma^{ -1 } (gamma - prior)
    alpha: Vec<f64>,
    // affine transforms between raw and model space
    input_offset: Vec<f64>,
    input_scale: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    // raw-space copies for incumbent tracking and refits
    raw_targets: Vec<f64>,
    fit_lml: Option<f64>,
}

impl GpModel {
    /// Construct a model in raw space with explicit hyperparameters; no
    /// normalization is applied.
    pub fn with_hyperparams(
        dataset: &GpDataset,
        hypers: GpHyperparams,
        prior_mean: f64,
    ) -> Result<Self, GpError> {
        if let Some(dim) = dataset.dim() {
            if hypers.length_scales.len() != dim {
                return Err(GpError::InvalidHyperparameters(format!(
                    "{} length scales for dimension {dim}",
                    hypers.length_scales.len()
                )));
            }
        }
        let dim = dataset.dim().unwrap_or(hypers.length_scales.len());
        let chol_alpha = factorize(dataset.inputs(), dataset.targets(), &hypers, prior_mean)?;
        Ok(Self {
            xs: dataset.inputs().to_vec(),
            hypers,
            prior_mean,
            chol: chol_alpha.0,
            alpha: chol_alpha.1,
            input_offset: vec![0.0; dim],
            input_scale: vec![1.0; dim],
            target_mean: 0.0,
            target_scale: 1.0,
            raw_targets: dataset.targets().to_vec(),
            fit_lml: None,
        })
    }

    /// Fit hyperparameters by multi-start coordinate search on the log
    /// marginal likelihood. Inputs are normalized to the unit box over
    /// `bounds` and targets standardized; the prior mean is the target mean.
    ///
    /// Never fails on degenerate data: constant targets or a single point
    /// fall back to floor/mid-range hyperparameters.
    pub fn fit(dataset: &GpDataset, bounds: &[(f64, f64)]) -> Result<Self, GpError> {
        if dataset.is_empty() {
            return Err(GpError::EmptyFit);
        }
        let dim = dataset.dim().expect("non-empty dataset has a dimension");
        if bounds.len() != dim {
            return Err(GpError::BoundsDimension { got: bounds.len(), expected: dim });
        }

        let n = dataset.len();
        let target_mean = dataset.targets().iter().sum::<f64>() / n as f64;
        let target_var =
            dataset.targets().iter().map(|t| (t - target_mean).powi(2)).sum::<f64>() / n as f64;
        let target_scale = target_var.sqrt();
        let degenerate = !(target_scale.is_finite() && target_scale > 1e-12);
        let scale = if degenerate { 1.0 } else { target_scale };

        let xs_norm: Vec<Vec<f64>> = dataset
            .inputs()
            .iter()
            .map(|p| {
                p.iter()
                    .zip(bounds.iter())
                    .map(|(x, (lo, hi))| {
                        let span = hi - lo;
                        if span > 0.0 {
                            (x - lo) / span
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let ys_std: Vec<f64> =
            dataset.targets().iter().map(|t| (t - target_mean) / scale).collect();
        let std_data = GpDataset::new(xs_norm.clone(), ys_std.clone(), 0.0)?;

        let (hypers, fit_lml) = if degenerate || n < 2 {
            let floors = GpHyperparams {
                signal_var: SIGNAL_VAR_BOUNDS.0,
                length_scales: vec![LENGTH_SCALE_BOUNDS.0; dim],
                noise_var: NOISE_VAR_BOUNDS.0,
            };
            (floors, None)
        } else {
            let (h, lml) = search_hyperparams(&std_data);
            (h, Some(lml))
        };

        let (chol, alpha) = factorize(&xs_norm, &ys_std, &hypers, 0.0)?;
        Ok(Self {
            xs: xs_norm,
            hypers,
            prior_mean: 0.0,
            chol,
            alpha,
            input_offset: bounds.iter().map(|(lo, _)| *lo).collect(),
            input_scale: bounds.iter().map(|(lo, hi)| (hi - lo).max(f64::MIN_POSITIVE)).collect(),
            target_mean,
            target_scale: scale,
            raw_targets: dataset.targets().to_vec(),
            fit_lml,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hypers
    }

    /// Log marginal likelihood achieved by [`GpModel::fit`], in standardized
    /// units; `None` for directly constructed or degenerate models.
    pub fn fit_lml(&self) -> Option<f64> {
        self.fit_lml
    }

    pub fn len(&self) -> usize {
        self.raw_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_targets.is_empty()
    }

    /// Best (maximum) observed raw target; `None` for an empty model.
    pub fn max_target(&self) -> Option<f64> {
        self.raw_targets.iter().copied().fold(None, |acc, t| match acc {
            Some(best) if best >= t => Some(best),
            _ => Some(t),
        })
    }

    /// Standard deviation scale of the raw targets (1.0 for raw models).
    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    fn to_model_space(&self, query: &[f64]) -> Vec<f64> {
        query
            .iter()
            .zip(self.input_offset.iter().zip(self.input_scale.iter()))
            .map(|(x, (off, scale))| (x - off) / scale)
            .collect()
    }

    /// Posterior mean and variance at a query point, in raw target units.
    /// Variance is clamped at zero.
    pub fn posterior(&self, query: &[f64]) -> Result<(f64, f64), GpError> {
        let dim = self.hypers.length_scales.len();
        if query.len() != dim {
            return Err(GpError::QueryDimension { got: query.len(), expected: dim });
        }
        let (mean_std, var_std) = self.posterior_unclamped(query)?;
        let mean = self.target_mean + self.target_scale * mean_std;
        let var = var_std.max(0.0) * self.target_scale * self.target_scale;
        Ok((mean, var))
    }

    /// Posterior in model space without the variance clamp; negative values
    /// beyond roundoff indicate a factorization problem.
    pub(crate) fn posterior_unclamped(&self, query: &[f64]) -> Result<(f64, f64), GpError> {
        let q = self.to_model_space(query);
        if self.xs.is_empty() {
            return Ok((self.prior_mean, self.hypers.signal_var));
        }
        let k_star: Vec<f64> =
            self.xs.iter().map(|x| kernel(&q, x, &self.hypers)).collect();
        let mean = self.prior_mean
            + k_star.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum::<f64>();
        let v = self.chol.solve_lower(&k_star);
        let var = self.hypers.signal_var - v.iter().map(|x| x * x).sum::<f64>();
        Ok((mean, var))
    }
}

/// Squared-exponential kernel with per-dimension length scales.
fn kernel(a: &[f64], b: &[f64], hypers: &GpHyperparams) -> f64 {
    let mut dist2 = 0.0;
    for ((x, y), l) in a.iter().zip(b.iter()).zip(hypers.length_scales.iter()) {
        let d = (x - y) / l;
        dist2 += d * d;
    }
    hypers.signal_var * (-0.5 * dist2).exp()
}

fn factorize(
    xs: &[Vec<f64>],
    ys: &[f64],
    hypers: &GpHyperparams,
    prior_mean: f64,
) -> Result<(Cholesky, Vec<f64>), GpError> {
    let n = xs.len();
    let jitter = JITTER_FRACTION * hypers.signal_var;
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel(&xs[i], &xs[j], hypers);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
        gram[i * n + i] += hypers.noise_var + jitter;
    }
    let chol = Cholesky::new(gram, n).ok_or(GpError::NotPositiveDefinite)?;
    let residual: Vec<f64> = ys.iter().map(|y| y - prior_mean).collect();
    let alpha = chol.solve(&residual);
    Ok((chol, alpha))
}

/// Log marginal likelihood of the dataset under the given hyperparameters
/// and constant prior mean.
pub fn log_marginal_likelihood(
    dataset: &GpDataset,
    hypers: &GpHyperparams,
    prior_mean: f64,
) -> Result<f64, GpError> {
    if dataset.is_empty() {
        return Err(GpError::EmptyFit);
    }
    if let Some(dim) = dataset.dim() {
        if hypers.length_scales.len() != dim {
            return Err(GpError::InvalidHyperparameters(format!(
                "{} length scales for dimension {dim}",
                hypers.length_scales.len()
            )));
        }
    }
    let (chol, alpha) = factorize(dataset.inputs(), dataset.targets(), hypers, prior_mean)?;
    let n = dataset.len() as f64;
    let data_fit: f64 = dataset
        .targets()
        .iter()
        .zip(alpha.iter())
        .map(|(y, a)| (y - prior_mean) * a)
        .sum();
    Ok(-0.5 * data_fit - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Multi-start coordinate search over log-space hyperparameters on a
/// standardized dataset. Returns the best hyperparameters and their LML;
/// the result dominates every start point by construction.
fn search_hyperparams(data: &GpDataset) -> (GpHyperparams, f64) {
    let dim = data.dim().expect("standardized dataset is non-empty");
    let n_log_dims = dim + 2;

    let log_bounds: Vec<(f64, f64)> = std::iter::repeat_n(
        (LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln()),
        dim,
    )
    .chain([
        (SIGNAL_VAR_BOUNDS.0.ln(), SIGNAL_VAR_BOUNDS.1.ln()),
        (NOISE_VAR_BOUNDS.0.ln(), NOISE_VAR_BOUNDS.1.ln()),
    ])
    .collect();

    let decode = |log_point: &[f64]| GpHyperparams {
        signal_var: log_point[dim].exp(),
        length_scales: log_point[..dim].iter().map(|l| l.exp()).collect(),
        noise_var: log_point[dim + 1].exp(),
    };
    let score = |log_point: &[f64]| -> f64 {
        log_marginal_likelihood(data, &decode(log_point), 0.0).unwrap_or(f64::NEG_INFINITY)
    };

    // Mid-range default start plus quasi-uniform starts over the log box.
    let mut starts: Vec<Vec<f64>> =
        vec![log_bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()];
    starts.extend(sampling::quasi_uniform(&log_bounds, FIT_STARTS - 1, FIT_SEED));

    let mut best_point = starts[0].clone();
    let mut best_lml = f64::NEG_INFINITY;
    for start in starts {
        let mut point = start;
        let mut current = score(&point);
        for sweep in 0..FIT_SWEEPS {
            // shrink the log-space trial step each sweep
            let step = 1.2 * 0.4f64.powi(sweep as i32);
            for d in 0..n_log_dims {
                for dir in [step, -step] {
                    let mut trial = point.clone();
                    trial[d] = (trial[d] + dir).clamp(log_bounds[d].0, log_bounds[d].1);
                    let s = score(&trial);
                    if s > current {
                        current = s;
                        point = trial;
                    }
                }
            }
        }
        if current > best_lml {
            best_lml = current;
            best_point = point;
        }
    }
    (decode(&best_point), best_lml)
}

/// Dense lower-triangular Cholesky factorization. Row-major, n x n.
#[derive(Debug, Clone)]
struct Cholesky {
    lower: Vec<f64>,
    n: usize,
}

impl Cholesky {
    fn new(matrix: Vec<f64>, n: usize) -> Option<Self> {
        let mut l = matrix;
        for j in 0..n {
            let mut diag = l[j * n + j];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !diag.is_finite() || diag <= 0.0 {
                return None;
            }
            let diag = diag.sqrt();
            l[j * n + j] = diag;
            for i in j + 1..n {
                let mut v = l[i * n + j];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / diag;
            }
        }
        // zero strict upper triangle for tidiness
        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = 0.0;
            }
        }
        Some(Self { lower: l, n })
    }

    /// Solve (L L^T) x = b.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.solve_lower(b);
        let n = self.n;
        for i in (0..n).rev() {
            let mut v = y[i];
            for (k, yk) in y.iter().enumerate().take(n).skip(i + 1) {
                v -= self.lower[k * n + i] * yk;
            }
            y[i] = v / self.lower[i * n + i];
        }
        y
    }

    /// Solve L y = b.
    fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = b[i];
            for (k, yk) in y.iter().enumerate().take(i) {
                v -= self.lower[i * n + k] * yk;
            }
            y[i] = v / self.lower[i * n + i];
        }
        y
    }

    fn log_det(&self) -> f64 {
        let n = self.n;
        2.0 * (0..n).map(|i| self.lower[i * n + i].ln()).sum::<f64>()
    }
}
