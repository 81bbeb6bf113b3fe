//! Concentration certificates and the parameters they depend on.
//!
//! A certificate at level `x` is a deviation threshold that the fluctuation
//! `V_n^N(f)` (for `osc(f) ≤ 1`) exceeds with probability at most `e^{−x}`.
//! Levels are reported on the `V` scale unless stated otherwise; divide by
//! `√N` for the `η^N − η` scale.

use serde::{Deserialize, Serialize};

use crate::convex::{inverse, ConvexFunctionId};
use crate::error::{Error, Result};
use crate::measure::{BoundedFunction, FiniteKernel, ProbabilityVector};
use crate::models::{FeynmanKacModel, GaussianMeanFieldModel, McKeanGasModel, MeanFieldModel};

fn eps_inv(id: ConvexFunctionId, x: f64) -> Result<f64> {
    Ok(inverse(id, x)?.value)
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("deviation level x must be >= 0, got {x}")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParams("particle count N must be >= 1".into()));
    }
    Ok(n as f64)
}

/// `(r_n, σ̄_n², β_n², b_n*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationParams {
    pub r: f64,
    pub sigma_bar_sq: f64,
    pub beta_sq: f64,
    pub b_star: f64,
}

impl ConcentrationParams {
    pub fn new(r: f64, sigma_bar_sq: f64, beta_sq: f64, b_star: f64) -> Result<Self> {
        let p = Self {
            r,
            sigma_bar_sq,
            beta_sq,
            b_star,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("r", self.r)?;
        check_nonneg("sigma_bar_sq", self.sigma_bar_sq)?;
        check_nonneg("beta_sq", self.beta_sq)?;
        check_nonneg("b_star", self.b_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thm12Events {
    pub bennett: f64,
    pub hoeffding: f64,
    pub bennett_eta: f64,
    pub hoeffding_eta: f64,
}

/// Bennett and Hoeffding levels for `V_n^N(f)`.
pub fn thm12_events(p: &ConcentrationParams, x: f64, n: usize) -> Result<Thm12Events> {
    p.validate()?;
    check_x(x)?;
    let nf = check_n(n)?;
    let sqrt_n = nf.sqrt();
    let second = p.r / sqrt_n * (1.0 + eps_inv(ConvexFunctionId::Alpha0, x)?);
    let bennett_tail = if p.sigma_bar_sq > 0.0 {
        sqrt_n * p.sigma_bar_sq * p.b_star * eps_inv(ConvexFunctionId::Alpha1, x / (nf * p.sigma_bar_sq))?
    } else {
        0.0
    };
    let bennett = second + bennett_tail;
    let hoeffding = second + (2.0 * x).sqrt() * p.beta_sq.sqrt();
    Ok(Thm12Events {
        bennett,
        hoeffding,
        bennett_eta: bennett / sqrt_n,
        hoeffding_eta: hoeffding / sqrt_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinRates {
    pub rate1: f64,
    pub rate2: f64,
}

/// `(A, B)` such that each rate equals `λ²/2 / (B + A λ)`.
fn bernstein_coefficients(p: &ConcentrationParams, nf: f64) -> [(f64, f64); 2] {
    let shift = std::f64::consts::SQRT_2 * p.r / nf.sqrt();
    let b1 = (p.b_star * p.sigma_bar_sq.sqrt() + shift).powi(2);
    let b2 = (p.beta_sq.sqrt() + shift).powi(2);
    [(2.0 * p.r + p.b_star / 3.0, b1), (2.0 * p.r, b2)]
}

fn rate(lambda: f64, a: f64, b: f64) -> Result<f64> {
    let denom = b + a * lambda;
    if denom > 0.0 {
        Ok(lambda * lambda / 2.0 / denom)
    } else if lambda == 0.0 {
        Err(Error::DegenerateRate)
    } else {
        Ok(f64::INFINITY)
    }
}

/// Exponential rates `ρ` with `P([η^N − η](f) ≥ r/N + λ) ≤ e^{−Nρ}`.
pub fn bernstein_rates(p: &ConcentrationParams, lambda: f64, n: usize) -> Result<BernsteinRates> {
    p.validate()?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let [(a1, b1), (a2, b2)] = bernstein_coefficients(p, check_n(n)?);
    Ok(BernsteinRates {
        rate1: rate(lambda, a1, b1)?,
        rate2: rate(lambda, a2, b2)?,
    })
}

/// `V`-scale levels at which each Bernstein bound equals `e^{−x}`: the root
/// of `N ρ(λ) = x`, mapped to `r/√N + √N λ`.
pub fn bernstein_levels(p: &ConcentrationParams, x: f64, n: usize) -> Result<[f64; 2]> {
    p.validate()?;
    check_x(x)?;
    let nf = check_n(n)?;
    let sqrt_n = nf.sqrt();
    let level = |(a, b): (f64, f64)| {
        let h = x * a / nf;
        let lambda = h + (h * h + 2.0 * x * b / nf).sqrt();
        p.r / sqrt_n + sqrt_n * lambda
    };
    let [c1, c2] = bernstein_coefficients(p, nf);
    Ok([level(c1), level(c2)])
}

/// The four `V`-scale certificate levels tested by the verification harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateLevels {
    pub bennett: f64,
    pub hoeffding: f64,
    pub bernstein1: f64,
    pub bernstein2: f64,
}

impl CertificateLevels {
    pub const NAMES: [&'static str; 4] = ["bennett", "hoeffding", "bernstein1", "bernstein2"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.bennett, self.hoeffding, self.bernstein1, self.bernstein2]
    }
}

pub fn certificate_levels(p: &ConcentrationParams, x: f64, n: usize) -> Result<CertificateLevels> {
    let e = thm12_events(p, x, n)?;
    let [bernstein1, bernstein2] = bernstein_levels(p, x, n)?;
    Ok(CertificateLevels {
        bennett: e.bennett,
        hoeffding: e.hoeffding,
        bernstein1,
        bernstein2,
    })
}

/// Conditionally independent, centered array with `a_p ≤ X ≤ b_p`,
/// conditional second moment `≤ c_p²` and perturbation amplitude `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangularArrayParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl TriangularArrayParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || a.len() != c.len() {
            return Err(Error::InvalidParams("a, b, c must be nonempty and of equal length".into()));
        }
        for p in 0..a.len() {
            if !(a[p].is_finite() && b[p].is_finite() && a[p] <= 0.0 && 0.0 <= b[p]) {
                return Err(Error::InvalidParams(format!("generation {p}: need a <= 0 <= b")));
            }
            check_nonneg("c", c[p])?;
        }
        check_nonneg("d", d)?;
        Ok(Self { a, b, c, d })
    }

    /// A one-generation array whose derived quantities are
    /// `(d, c̄², δ̄², b*) = (r, σ̄², β², b*)`. Needs `β ≥ b*/2`.
    pub fn from_concentration(p: &ConcentrationParams) -> Result<Self> {
        p.validate()?;
        let beta = p.beta_sq.sqrt();
        if beta < p.b_star / 2.0 {
            return Err(Error::InvalidParams("need beta >= b_star / 2".into()));
        }
        Self::new(
            vec![p.b_star - 2.0 * beta],
            vec![p.b_star],
            vec![p.b_star * p.sigma_bar_sq.sqrt()],
            p.r,
        )
    }

    pub fn b_star(&self) -> f64 {
        self.b.iter().cloned().fold(0.0, f64::max)
    }

    pub fn c_bar_sq(&self) -> f64 {
        let b = self.b_star();
        if b == 0.0 {
            0.0
        } else {
            self.c.iter().map(|c| c * c).sum::<f64>() / (b * b)
        }
    }

    pub fn delta_bar_sq(&self) -> f64 {
        self.a.iter().zip(&self.b).map(|(a, b)| ((b - a) / 2.0).powi(2)).sum()
    }
}

/// Levels on the `T_n^N = N [η^N − η](f)` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma53Bounds {
    pub bennett: f64,
    pub hoeffding: f64,
    /// `d + A x + √(2 x B)` with `A = 2d + b*/3`, `B = (√2 d + b* c̄ √N)²`.
    pub bernstein_bennett: f64,
    /// `d + A x + √(2 x B)` with `A = 2d`, `B = (√2 d + δ̄ √N)²`.
    pub bernstein_hoeffding: f64,
}

pub fn lemma53_bounds(p: &TriangularArrayParams, x: f64, n: usize) -> Result<Lemma53Bounds> {
    check_x(x)?;
    let nf = check_n(n)?;
    let d = p.d;
    let b_star = p.b_star();
    let c_bar_sq = p.c_bar_sq();
    let delta_bar = p.delta_bar_sq().sqrt();
    let second = d * (1.0 + eps_inv(ConvexFunctionId::Alpha0, x)?);
    let bennett_tail = if c_bar_sq > 0.0 {
        nf * c_bar_sq * b_star * eps_inv(ConvexFunctionId::Alpha1, x / (nf * c_bar_sq))?
    } else {
        0.0
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    let root = (2.0 * x).sqrt();
    Ok(Lemma53Bounds {
        bennett: second + bennett_tail,
        hoeffding: second + delta_bar * (2.0 * x * nf).sqrt(),
        bernstein_bennett: d
            + (2.0 * d + b_star / 3.0) * x
            + root * (sqrt2 * d + b_star * c_bar_sq.sqrt() * nf.sqrt()),
        bernstein_hoeffding: d + 2.0 * d * x + root * (sqrt2 * d + delta_bar * nf.sqrt()),
    })
}

/// Mixing constants of a time-homogeneous Feynman–Kac model:
/// `M^m(x,·) ≥ ε_m M^m(y,·)` and `δ_k` the largest ratio of potential
/// products along admissible paths of length `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingParams {
    pub m: usize,
    pub eps_m: f64,
    pub delta_m: f64,
    pub delta_m_minus_1: f64,
}

impl MixingParams {
    pub fn new(m: usize, eps_m: f64, delta_m: f64, delta_m_minus_1: f64) -> Result<Self> {
        let p = Self {
            m,
            eps_m,
            delta_m,
            delta_m_minus_1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParams("m must be >= 1".into()));
        }
        if !(self.eps_m > 0.0 && self.eps_m <= 1.0) {
            return Err(Error::InvalidParams(format!("eps_m must lie in (0, 1], got {}", self.eps_m)));
        }
        if !(self.delta_m >= 1.0 && self.delta_m.is_finite()) {
            return Err(Error::InvalidParams(format!("delta_m must be >= 1, got {}", self.delta_m)));
        }
        if !(self.delta_m_minus_1 >= 1.0 && self.delta_m_minus_1.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "delta_m_minus_1 must be >= 1, got {}",
                self.delta_m_minus_1
            )));
        }
        if self.eps_m * self.eps_m > self.delta_m_minus_1 {
            return Err(Error::InvalidParams("need eps_m^2 <= delta_m_minus_1".into()));
        }
        Ok(())
    }

    /// Per-block contraction `1 − ε_m²/δ_{m−1}`.
    pub fn contraction(&self) -> f64 {
        1.0 - self.eps_m * self.eps_m / self.delta_m_minus_1
    }

    /// `ϖ_{k,l}(m) = m (δ_m/ε_m)^k / (1 − (1 − ε_m²/δ_{m−1})^l)`
    pub fn varpi(&self, k: u32, l: u32) -> f64 {
        let a = self.eps_m * self.eps_m / self.delta_m_minus_1;
        // 1 − (1 − a)^l without cancellation for small a
        let denom = -(l as f64 * (-a).ln_1p()).exp_m1();
        self.m as f64 * (self.delta_m / self.eps_m).powi(k as i32) / denom
    }

    /// Bound on `q_{p,p+n}`.
    pub fn q_bound(&self) -> f64 {
        self.delta_m / self.eps_m
    }

    /// Bound on `β(P_{p,p+n})`.
    pub fn beta_p_bound(&self, n: usize) -> f64 {
        self.contraction().powi((n / self.m) as i32)
    }

    /// Computes `(ε_m, δ_m, δ_{m−1})` for a model whose potentials and
    /// mutations do not depend on the generation.
    pub fn from_feynman_kac(model: &FeynmanKacModel, m: usize) -> Result<Self> {
        if model.horizon() == 0 {
            return Err(Error::InvalidParams("model has no transitions".into()));
        }
        let g = model.potential(0);
        let mk = model.mutation(1);
        for p in 1..model.horizon() {
            if model.potential(p) != g || model.mutation(p + 1) != mk {
                return Err(Error::InvalidParams("mixing constants need a time-homogeneous model".into()));
            }
        }
        if m == 0 {
            return Err(Error::InvalidParams("m must be >= 1".into()));
        }
        let mut power = mk.clone();
        for _ in 1..m {
            power = power.compose(mk)?;
        }
        let s = mk.rows();
        let mut eps = 1.0_f64;
        for z in 0..s {
            let col: Vec<f64> = (0..s).map(|x| power.entry(x, z)).collect();
            let hi = col.iter().cloned().fold(0.0, f64::max);
            if hi > 0.0 {
                eps = eps.min(col.iter().cloned().fold(f64::INFINITY, f64::min) / hi);
            }
        }
        if eps <= 0.0 {
            return Err(Error::InvalidParams(format!("mutation does not satisfy the mixing condition with m = {m}")));
        }
        Self::new(m, eps, path_ratio(g, mk, m), path_ratio(g, mk, m - 1))
    }
}

/// `sup Π_{p<k} G(x_p)/G(y_p)` over pairs of admissible paths.
fn path_ratio(g: &BoundedFunction, mk: &FiniteKernel, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let s = g.len();
    let mut hi: Vec<f64> = g.values().to_vec();
    let mut lo = hi.clone();
    for _ in 1..k {
        let mut next_hi = vec![0.0; s];
        let mut next_lo = vec![f64::INFINITY; s];
        for y in 0..s {
            for x in 0..s {
                if mk.entry(x, y) > 0.0 {
                    next_hi[y] = f64::max(next_hi[y], hi[x] * g.at(y));
                    next_lo[y] = f64::min(next_lo[y], lo[x] * g.at(y));
                }
            }
        }
        hi = next_hi;
        lo = next_lo;
    }
    let max = hi.iter().cloned().fold(0.0, f64::max);
    let min = lo.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformFkBounds {
    pub params: ConcentrationParams,
    /// `ϖ_{k,l}(m)` for `k = 0..=3` (rows) and `l = 1, 2` (columns).
    pub varpi: [[f64; 2]; 4],
    pub q_bound: f64,
    /// Bounds on `β(DΦ_{p,horizon})` for `p = 0..=horizon`.
    pub beta_dphi: Vec<f64>,
}

/// Horizon-uniform parameters under the mixing condition.
pub fn fk_uniform_params(mix: &MixingParams, sigma_sq: f64, horizon: usize) -> Result<UniformFkBounds> {
    mix.validate()?;
    if !(0.0..=1.0).contains(&sigma_sq) {
        return Err(Error::InvalidParams(format!("sigma_sq must lie in [0, 1], got {sigma_sq}")));
    }
    let mut varpi = [[0.0; 2]; 4];
    for (k, row) in varpi.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = mix.varpi(k as u32, j as u32 + 1);
        }
    }
    let q = mix.q_bound();
    let beta_dphi = (0..=horizon).map(|p| 2.0 * q * mix.beta_p_bound(horizon - p)).collect();
    Ok(UniformFkBounds {
        params: ConcentrationParams::new(
            4.0 * varpi[3][0],
            4.0 * varpi[2][1] * sigma_sq,
            4.0 * varpi[2][1],
            2.0 * q,
        )?,
        varpi,
        q_bound: q,
        beta_dphi,
    })
}

/// `η`-scale levels uniform in the time horizon.
pub fn cor42_uniform_bounds(mix: &MixingParams, sigma_sq: f64, x: f64, n: usize) -> Result<Thm12Events> {
    mix.validate()?;
    check_x(x)?;
    let nf = check_n(n)?;
    let w31 = mix.varpi(3, 1);
    let w22 = mix.varpi(2, 2);
    let second = 4.0 / nf * w31 * (1.0 + eps_inv(ConvexFunctionId::Alpha0, x)?);
    let bennett_tail = if sigma_sq > 0.0 {
        8.0 * mix.q_bound() * w22 * sigma_sq * eps_inv(ConvexFunctionId::Alpha1, x / (4.0 * sigma_sq * w22 * nf))?
    } else {
        0.0
    };
    let bennett_eta = second + bennett_tail;
    let hoeffding_eta = second + 2.0 * (2.0 * w22 * x / nf).sqrt();
    let sqrt_n = nf.sqrt();
    Ok(Thm12Events {
        bennett: bennett_eta * sqrt_n,
        hoeffding: hoeffding_eta * sqrt_n,
        bennett_eta,
        hoeffding_eta,
    })
}

/// Per-pair regularity of a finite Feynman–Kac semigroup `Φ_{p,n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupRegularity {
    pub q: Vec<f64>,
    pub beta_p: Vec<f64>,
    pub beta_dphi: Vec<f64>,
    pub delta_r: Vec<f64>,
}

/// Computes `q_{p,n}`, `β(P_{p,n})` and the induced bounds
/// `β(DΦ_{p,n}) ≤ 2 q β(P)`, `δ(R^{Φ_{p,n}}) ≤ 2 q² β(DΦ)` for `p < n`.
/// At `p = n` the semigroup is the identity: `β(DΦ) = 1`, `δ(R) = 0`.
pub fn fk_semigroup_regularity(model: &FeynmanKacModel, n: usize) -> Result<SemigroupRegularity> {
    let mut out = SemigroupRegularity {
        q: vec![],
        beta_p: vec![],
        beta_dphi: vec![],
        delta_r: vec![],
    };
    for p in 0..=n {
        let sg = model.semigroup(p, n)?;
        let q = sg.mass_ratio();
        let beta_p = sg.markov()?.dobrushin();
        let (bd, dr) = if p == n {
            (1.0, 0.0)
        } else {
            let bd = 2.0 * q * beta_p;
            (bd, 2.0 * q * q * bd)
        };
        out.q.push(q);
        out.beta_p.push(beta_p);
        out.beta_dphi.push(bd);
        out.delta_r.push(dr);
    }
    Ok(out)
}

/// Finite-horizon parameters of a Feynman–Kac model from its exact
/// semigroup, with local variances bounded by `sigma_sq`.
pub fn fk_finite_horizon_params(model: &FeynmanKacModel, n: usize, sigma_sq: f64) -> Result<ConcentrationParams> {
    check_nonneg("sigma_sq", sigma_sq)?;
    let reg = fk_semigroup_regularity(model, n)?;
    let beta_sq: f64 = reg.beta_dphi.iter().map(|b| b * b).sum();
    ConcentrationParams::new(
        reg.delta_r.iter().sum(),
        sigma_sq * beta_sq,
        beta_sq,
        reg.beta_dphi.iter().cloned().fold(0.0, f64::max),
    )
}

/// One-step regularity `(β(DΦ), δ(R^Φ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepRegularity {
    pub beta_dphi: f64,
    pub delta_r: f64,
}

pub fn gas_regularity(model: &McKeanGasModel) -> OneStepRegularity {
    let beta_m = model.post_collision().dobrushin();
    let spread: f64 = model
        .nu()
        .iter()
        .zip(model.collision_weights())
        .map(|(nu, a)| {
            let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
            nu * (hi - lo)
        })
        .sum();
    OneStepRegularity {
        beta_dphi: beta_m * (1.0 + spread),
        delta_r: beta_m * spread,
    }
}

/// Needs the model constant `c_prime` unless the drift interaction `c`
/// vanishes identically.
pub fn gaussian_regularity(model: &GaussianMeanFieldModel, c_prime: Option<f64>) -> Result<OneStepRegularity> {
    if model.drift_c.is_zero() {
        return Ok(OneStepRegularity {
            beta_dphi: 1.0,
            delta_r: 0.0,
        });
    }
    let c_prime = c_prime.ok_or(Error::ConstantRequired)?;
    check_nonneg("c_prime", c_prime)?;
    let unbounded = || Error::InvalidParams("b and c must be bounded".into());
    let c_norm = model.drift_c.sup_norm().ok_or_else(unbounded)?;
    let osc_b = model.drift_b.oscillation().ok_or_else(unbounded)?;
    Ok(OneStepRegularity {
        beta_dphi: 1.0 + c_norm * osc_b,
        delta_r: c_prime * osc_b * (2.0 * c_norm + osc_b),
    })
}

/// State count above which exact local-variance search is refused.
pub const EXACT_SIGMA_MAX_STATES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaMode {
    /// `σ_n² ≤ 1/4`, valid for every model.
    Bound,
    /// Maximum over `{0,1}`-valued `f`, all Dirac measures and the given
    /// measures.
    Exact(Vec<ProbabilityVector>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub value: f64,
    /// True when the supremum over measures was only searched on a grid,
    /// so `value` may undershoot the true `σ_n²`.
    pub grid_search: bool,
}

/// Local variance `σ_n² = sup_f sup_μ μ(K_{n,μ}[f − K_{n,μ} f]²)`.
pub fn local_variance_sigma<M: MeanFieldModel + ?Sized>(model: &M, n: usize, mode: &SigmaMode) -> Result<SigmaEstimate> {
    let grid = match mode {
        SigmaMode::Bound => {
            return Ok(SigmaEstimate {
                value: 0.25,
                grid_search: false,
            })
        }
        SigmaMode::Exact(grid) => grid,
    };
    let s = model.states();
    if s > EXACT_SIGMA_MAX_STATES {
        return Err(Error::UseBoundMode {
            limit: EXACT_SIGMA_MAX_STATES,
        });
    }
    let mut measures: Vec<ProbabilityVector> = (0..s).map(|x| ProbabilityVector::dirac(s, x)).collect::<Result<_>>()?;
    for mu in grid {
        if mu.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: mu.len(),
            });
        }
        measures.push(mu.clone());
    }
    let mut best = 0.0_f64;
    for mu in &measures {
        let k = model.kernel(mu, n)?;
        let rows: Vec<usize> = (0..s).filter(|&x| mu.get(x) > 0.0).collect();
        for mask in 0u32..(1u32 << s) {
            let mut total = 0.0;
            for &x in &rows {
                let row = k.row(x);
                let mean: f64 = (0..s).filter(|&y| mask >> y & 1 == 1).map(|y| row[y]).sum();
                total += mu.get(x) * mean * (1.0 - mean);
            }
            best = best.max(total);
        }
    }
    Ok(SigmaEstimate {
        value: best,
        grid_search: true,
    })
}
