use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar functions of a real state, as they appear in drift terms and as
/// test observables for Gaussian models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Constant { value: f64 },
    Linear { slope: f64, intercept: f64 },
    /// `c0 + c1 x + c2 x²`
    Quadratic { c0: f64, c1: f64, c2: f64 },
    /// `1_{[lo, hi)}(x)`
    Indicator { lo: f64, hi: f64 },
    /// `amplitude · tanh(scale · x)`
    Tanh { amplitude: f64, scale: f64 },
    /// `amplitude · sin(frequency · x)`
    Sin { amplitude: f64, frequency: f64 },
}

impl ScalarFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Constant { value } => value,
            ScalarFn::Linear { slope, intercept } => slope * x + intercept,
            ScalarFn::Quadratic { c0, c1, c2 } => c0 + x * (c1 + x * c2),
            ScalarFn::Indicator { lo, hi } => {
                if x >= lo && x < hi {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarFn::Tanh { amplitude, scale } => amplitude * (scale * x).tanh(),
            ScalarFn::Sin { amplitude, frequency } => amplitude * (frequency * x).sin(),
        }
    }

    /// Supremum norm, `None` when unbounded.
    pub fn sup_norm(&self) -> Option<f64> {
        match *self {
            ScalarFn::Constant { value } => Some(value.abs()),
            ScalarFn::Linear { slope, intercept } => (slope == 0.0).then_some(intercept.abs()),
            ScalarFn::Quadratic { c0, c1, c2 } => (c1 == 0.0 && c2 == 0.0).then_some(c0.abs()),
            ScalarFn::Indicator { lo, hi } => Some(if lo < hi { 1.0 } else { 0.0 }),
            ScalarFn::Tanh { amplitude, scale } => Some(if scale == 0.0 { 0.0 } else { amplitude.abs() }),
            ScalarFn::Sin { amplitude, frequency } => Some(if frequency == 0.0 { 0.0 } else { amplitude.abs() }),
        }
    }

    /// `sup f − inf f`, `None` when unbounded.
    pub fn oscillation(&self) -> Option<f64> {
        match *self {
            ScalarFn::Constant { .. } => Some(0.0),
            ScalarFn::Linear { slope, .. } => (slope == 0.0).then_some(0.0),
            ScalarFn::Quadratic { c1, c2, .. } => (c1 == 0.0 && c2 == 0.0).then_some(0.0),
            ScalarFn::Indicator { lo, hi } => Some(if lo < hi { 1.0 } else { 0.0 }),
            ScalarFn::Tanh { amplitude, scale } => Some(if scale == 0.0 { 0.0 } else { 2.0 * amplitude.abs() }),
            ScalarFn::Sin { amplitude, frequency } => Some(if frequency == 0.0 { 0.0 } else { 2.0 * amplitude.abs() }),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm() == Some(0.0)
    }

    /// Polynomial coefficients `[c0, c1, c2]` when the function is one.
    fn polynomial(&self) -> Option<[f64; 3]> {
        match *self {
            ScalarFn::Constant { value } => Some([value, 0.0, 0.0]),
            ScalarFn::Linear { slope, intercept } => Some([intercept, slope, 0.0]),
            ScalarFn::Quadratic { c0, c1, c2 } => Some([c0, c1, c2]),
            _ => None,
        }
    }

    /// `E f(Y)` for `Y ~ N(mean, variance)`, available for polynomials of
    /// degree at most 2 and interval indicators.
    pub fn gaussian_expectation(&self, mean: f64, variance: f64) -> Result<f64> {
        if let Some([c0, c1, c2]) = self.polynomial() {
            return Ok(c0 + c1 * mean + c2 * (mean * mean + variance));
        }
        match *self {
            ScalarFn::Indicator { lo, hi } => Ok(interval_probability(lo, hi, mean, variance)),
            other => Err(Error::UnsupportedObservable(format!("{other:?}"))),
        }
    }

    /// `Var f(Y)` for `Y ~ N(mean, variance)` on the same registered class.
    pub fn gaussian_variance(&self, mean: f64, variance: f64) -> Result<f64> {
        if let Some([_, c1, c2]) = self.polynomial() {
            // f(Y) − E f(Y) = (c1 + 2 c2 m) Z + c2 (Z² − v) with Z = Y − m.
            let lin = c1 + 2.0 * c2 * mean;
            return Ok(lin * lin * variance + 2.0 * c2 * c2 * variance * variance);
        }
        match *self {
            ScalarFn::Indicator { lo, hi } => {
                let p = interval_probability(lo, hi, mean, variance);
                Ok(p * (1.0 - p))
            }
            other => Err(Error::UnsupportedObservable(format!("{other:?}"))),
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn interval_probability(lo: f64, hi: f64, mean: f64, variance: f64) -> f64 {
    if !(lo < hi) {
        return 0.0;
    }
    if variance == 0.0 {
        return if mean >= lo && mean < hi { 1.0 } else { 0.0 };
    }
    let sd = variance.sqrt();
    (normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd)).max(0.0)
}

/// Mean and variance of the Gaussian law `η_n` in the decoupled linear case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: f64,
    pub variance: f64,
}

/// One-dimensional Gaussian mean field transitions
/// `ξ_n = a(ξ_{n-1}) + η_{n-1}(b) c(ξ_{n-1}) + √Q W_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeanFieldModel {
    pub drift_a: ScalarFn,
    pub drift_b: ScalarFn,
    pub drift_c: ScalarFn,
    pub noise_variance: f64,
    pub initial: GaussianMoments,
    pub horizon: usize,
}

impl GaussianMeanFieldModel {
    pub fn new(
        drift_a: ScalarFn,
        drift_b: ScalarFn,
        drift_c: ScalarFn,
        noise_variance: f64,
        initial: GaussianMoments,
        horizon: usize,
    ) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        if drift_b.sup_norm().is_none() || drift_c.sup_norm().is_none() {
            return Err(Error::InvalidParams("drift functions b and c must be bounded".into()));
        }
        if !(initial.variance >= 0.0 && initial.variance.is_finite() && initial.mean.is_finite()) {
            return Err(Error::InvalidParams("initial law needs finite mean and variance >= 0".into()));
        }
        Ok(Self {
            drift_a,
            drift_b,
            drift_c,
            noise_variance,
            initial,
            horizon,
        })
    }

    /// `d(x, η) = a(x) + η(b) c(x)`
    #[inline]
    pub fn drift(&self, x: f64, b_mean: f64) -> f64 {
        self.drift_a.eval(x) + b_mean * self.drift_c.eval(x)
    }

    /// One draw from `K_η(x, ·) = N(d(x, η), Q)` given `η(b)`.
    #[inline]
    pub fn kernel_sample<R: Rng + ?Sized>(&self, x: f64, b_mean: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.drift(x, b_mean) + self.noise_variance.sqrt() * z
    }

    pub fn initial_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.initial.mean + self.initial.variance.sqrt() * z
    }

    pub fn is_decoupled(&self) -> bool {
        self.drift_c.is_zero()
    }

    /// Moment recursion of the exact flow. Only available when `c ≡ 0` and
    /// `a` is affine, where every `η_n` is Gaussian.
    pub fn exact_moments(&self, horizon: usize) -> Result<Vec<GaussianMoments>> {
        if !self.is_decoupled() {
            return Err(Error::NoOracle("Gaussian model with interaction (c != 0)".into()));
        }
        let (slope, intercept) = match self.drift_a {
            ScalarFn::Constant { value } => (0.0, value),
            ScalarFn::Linear { slope, intercept } => (slope, intercept),
            ScalarFn::Quadratic { c0, c1, c2: 0.0 } => (c1, c0),
            _ => return Err(Error::NoOracle("drift a is not affine".into())),
        };
        let mut out = Vec::with_capacity(horizon + 1);
        let mut m = self.initial;
        out.push(m);
        for _ in 0..horizon {
            m = GaussianMoments {
                mean: slope * m.mean + intercept,
                variance: slope * slope * m.variance + self.noise_variance,
            };
            out.push(m);
        }
        Ok(out)
    }
}
