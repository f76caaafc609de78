//! One-dimensional natural cubic spline interpolation.
//!
//! Used for the SOC-gridded cell parameter tables, the voltage-constraint
//! backoff curve, and the tuned polarization-resistance curve. Boundary
//! conditions are natural (zero second derivative at both ends) and
//! evaluation outside the knot range clamps to the boundary value, so
//! interpolated resistances cannot go negative when a solver probes
//! slightly out of range.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("knot and value lists have different lengths ({knots} vs {values})")]
    LengthMismatch { knots: usize, values: usize },
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knots must be strictly increasing (violated at index {0})")]
    NonIncreasingKnots(usize),
    #[error("non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("spline evaluated at non-finite abscissa")]
    NonFiniteQuery,
}

/// Cubic polynomial coefficients of one spline segment, in powers of
/// `x - x_lo` for the segment's left knot `x_lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Segment {
    /// Evaluate the segment polynomial at offset `t` from its left knot.
    pub fn at(&self, t: f64) -> f64 {
        self.a + t * (self.b + t * (self.c + t * self.d))
    }
}

/// Natural cubic spline through a set of strictly increasing knots.
///
/// Immutable after construction; evaluation clamps to the boundary values
/// outside the knot range.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    knots: Vec<f64>,
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl Spline {
    /// Build a natural cubic spline through `(knots[i], values[i])`.
    ///
    /// Knots must be strictly increasing, at least two, and everything
    /// finite. Second derivatives at the interior knots come from the
    /// standard tridiagonal system with natural boundary conditions.
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() != values.len() {
            return Err(SplineError::LengthMismatch {
                knots: knots.len(),
                values: values.len(),
            });
        }
        if knots.len() < 2 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        for (i, k) in knots.iter().enumerate() {
            if !k.is_finite() {
                return Err(SplineError::NonFinite { what: "knot", index: i });
            }
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(SplineError::NonFinite { what: "value", index: i });
            }
        }
        for i in 1..knots.len() {
            if knots[i] <= knots[i - 1] {
                return Err(SplineError::NonIncreasingKnots(i));
            }
        }

        let second_derivs = natural_second_derivatives(&knots, &values);
        let n = knots.len();
        let mut segments = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let h = knots[i + 1] - knots[i];
            let m_i = second_derivs[i];
            let m_next = second_derivs[i + 1];
            segments.push(Segment {
                a: values[i],
                b: (values[i + 1] - values[i]) / h - h * (2.0 * m_i + m_next) / 6.0,
                c: m_i / 2.0,
                d: (m_next - m_i) / (6.0 * h),
            });
        }

        Ok(Self { knots, values, segments })
    }

    /// Spline with the same value at every knot.
    pub fn constant(knots: Vec<f64>, value: f64) -> Result<Self, SplineError> {
        let values = vec![value; knots.len()];
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-interval cubic coefficients; segment `i` covers `[knots[i], knots[i+1]]`.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Evaluate the spline, clamping `x` to the knot range (constant
    /// extrapolation). A non-finite `x` propagates as NaN; use
    /// [`Spline::try_eval`] where the query is untrusted.
    pub fn eval(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if x <= first {
            return self.values[0];
        }
        if x >= last {
            return self.values[self.values.len() - 1];
        }
        let idx = self.segment_index(x);
        self.segments[idx].at(x - self.knots[idx])
    }

    /// Checked evaluation: rejects non-finite queries.
    pub fn try_eval(&self, x: f64) -> Result<f64, SplineError> {
        if !x.is_finite() {
            return Err(SplineError::NonFiniteQuery);
        }
        Ok(self.eval(x))
    }

    /// Index of the segment containing `x`; caller guarantees `x` is inside
    /// the open knot range.
    fn segment_index(&self, x: f64) -> usize {
        let pos = self.knots.partition_point(|k| *k <= x);
        pos.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// Minimum of the spline on `[lo, hi]` sampled at `n` points plus knots.
    /// Used by table validation to catch interpolation undershoot.
    pub fn sampled_min(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..=n {
            let x = lo + (hi - lo) * (i as f64) / (n as f64);
            min = min.min(self.eval(x));
        }
        for &k in &self.knots {
            if k >= lo && k <= hi {
                min = min.min(self.eval(k));
            }
        }
        min
    }
}

/// Solve the natural-spline tridiagonal system for the second derivatives
/// at the knots (Thomas algorithm; boundary rows are identity).
fn natural_second_derivatives(knots: &[f64], values: &[f64]) -> Vec<f64> {
    let n = knots.len();
    let mut m = vec![0.0; n];
    if n == 2 {
        return m;
    }

    let interior = n - 2;
    // diag/upper/lower of the interior system, rhs on the right.
    let mut diag = vec![0.0; interior];
    let mut upper = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    for i in 0..interior {
        let h_prev = knots[i + 1] - knots[i];
        let h_next = knots[i + 2] - knots[i + 1];
        diag[i] = 2.0 * (h_prev + h_next);
        upper[i] = h_next;
        rhs[i] = 6.0
            * ((values[i + 2] - values[i + 1]) / h_next
                - (values[i + 1] - values[i]) / h_prev);
    }

    // Forward sweep. The sub-diagonal entry of row i is h between knots
    // i and i+1, equal to the upper entry of the previous row.
    for i in 1..interior {
        let lower = knots[i + 1] - knots[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[interior] = rhs[interior - 1] / diag[interior - 1];
    for i in (0..interior - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}
