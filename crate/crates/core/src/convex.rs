//! Legendre–Fenchel conjugates of the two log-Laplace majorants used by the
//! certificates, and their inverses.
//!
//! * `α₀(t) = −t − ½ log(1 − 2t)` on `[0, 1/2)`, with `α₀*(λ) = ½(λ − log(1 + λ))`
//! * `α₁(t) = e^t − 1 − t` on `[0, ∞)`, with `α₁*(λ) = (1 + λ) log(1 + λ) − λ`
//!
//! Inverses are computed with the fixed-point form of Newton's method
//! `F(z) = (α((α')⁻¹(z)) + x) / (α')⁻¹(z)` started above the root, so the
//! iterates decrease monotonically onto it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_NEWTON_ITERATIONS: usize = 60;
const RESIDUAL_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-14;
const UNDERFLOW: f64 = 1e-300;

/// `z − log(1 + z)` without cancellation for small `z`.
fn z_minus_ln1p(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // Σ_{k≥2} (−1)^k z^k / k, truncated below 1e-22 relative.
        let mut term = z * z;
        let mut sum = 0.0;
        for k in 2..26 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / k as f64;
            term *= z;
        }
        sum
    } else {
        z - z.ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexFunctionId {
    Alpha0,
    Alpha1,
}

impl ConvexFunctionId {
    pub const ALL: [ConvexFunctionId; 2] = [ConvexFunctionId::Alpha0, ConvexFunctionId::Alpha1];

    pub fn name(self) -> &'static str {
        match self {
            ConvexFunctionId::Alpha0 => "alpha0",
            ConvexFunctionId::Alpha1 => "alpha1",
        }
    }

    /// `α(t)`; `+∞` outside the domain.
    pub fn alpha(self, t: f64) -> f64 {
        match self {
            ConvexFunctionId::Alpha0 if (0.0..0.5).contains(&t) => -t - 0.5 * (-2.0 * t).ln_1p(),
            ConvexFunctionId::Alpha0 => f64::INFINITY,
            ConvexFunctionId::Alpha1 if t >= 0.0 => t.exp_m1() - t,
            ConvexFunctionId::Alpha1 => f64::INFINITY,
        }
    }

    /// `(α')⁻¹(z)`: `log(1 + z)` for `α₁`, `z / (2 + 2z)` for `α₀`.
    pub fn alpha_prime_inverse(self, z: f64) -> f64 {
        match self {
            ConvexFunctionId::Alpha0 => z / (2.0 + 2.0 * z),
            ConvexFunctionId::Alpha1 => z.ln_1p(),
        }
    }

    /// `α*(λ)` without domain checks (caller guarantees `λ ≥ 0`).
    fn conjugate(self, lambda: f64) -> f64 {
        match self {
            ConvexFunctionId::Alpha0 => 0.5 * z_minus_ln1p(lambda),
            ConvexFunctionId::Alpha1 => lambda * lambda.ln_1p() - z_minus_ln1p(lambda),
        }
    }

    /// Newton map `F(z)` for the equation `α*(z) = x`.
    fn newton_map(self, z: f64, x: f64) -> f64 {
        match self {
            // (2x + log(1+z))(1+z)/z − 1, rearranged to avoid cancellation
            ConvexFunctionId::Alpha0 => 2.0 * x * (1.0 + z) / z + z.ln_1p() - z_minus_ln1p(z) / z,
            // (x + z − log(1+z)) / log(1+z)
            ConvexFunctionId::Alpha1 => {
                (x + z_minus_ln1p(z)) / z.ln_1p()
            }
        }
    }

    /// Analytic bracket `[lower, upper]` around `(α*)⁻¹(x)`:
    /// `[√(2x), √(2x) + x/3]` for `α₁`, `[2√x + 4x/3, 2√x + 2x]` for `α₀`.
    pub fn brackets(self, x: f64) -> (f64, f64) {
        match self {
            ConvexFunctionId::Alpha0 => {
                let r = 2.0 * x.sqrt();
                (r + 4.0 * x / 3.0, r + 2.0 * x)
            }
            ConvexFunctionId::Alpha1 => {
                let r = (2.0 * x).sqrt();
                (r, r + x / 3.0)
            }
        }
    }

    /// One Newton step from the upper bracket: a closed-form upper bound
    /// sharper than the bracket.
    pub fn refined_upper(self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            ConvexFunctionId::Alpha0 => {
                let s = x.sqrt();
                let l = (2.0 * x + 2.0 * s).ln_1p();
                2.0 * x + l + (l - 2.0 * s) / (2.0 * x + 2.0 * s)
            }
            ConvexFunctionId::Alpha1 => {
                let s = (2.0 * x).sqrt();
                let l = (x / 3.0 + s).ln_1p();
                (s + 4.0 * x / 3.0 - l) / l
            }
        }
    }
}

impl std::fmt::Display for ConvexFunctionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_nonnegative(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite and >= 0, got {v}")))
    }
}

/// `ε₀ = α₀*` or `ε₁ = α₁*` evaluated at `λ ≥ 0`.
pub fn conjugate_eval(id: ConvexFunctionId, lambda: f64) -> Result<f64> {
    check_nonnegative("lambda", lambda)?;
    Ok(id.conjugate(lambda).max(0.0))
}

/// A computed `(α*)⁻¹(x)` with its analytic bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseResult {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `α*(z) = x` by monotone Newton iteration from the upper bracket,
/// falling back to bisection if the iteration cap is hit.
pub fn inverse(id: ConvexFunctionId, x: f64) -> Result<InverseResult> {
    check_nonnegative("x", x)?;
    if x < UNDERFLOW {
        return Ok(InverseResult {
            value: 0.0,
            lower: 0.0,
            upper: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let (lower, upper) = id.brackets(x);
    let mut z = upper;
    let mut iterations = 0;
    let mut settled = false;
    while iterations < MAX_NEWTON_ITERATIONS {
        let next = id.newton_map(z, x);
        iterations += 1;
        if !(next < z) {
            // Round-off floor: the decreasing sequence cannot improve further.
            settled = true;
            break;
        }
        let step = z - next;
        z = next;
        if step <= STEP_TOL * z.max(1.0) {
            settled = true;
            break;
        }
    }
    let residual_ok = (id.conjugate(z) - x).abs() <= RESIDUAL_TOL * x.max(1.0);
    let converged = settled && residual_ok;
    let value = if converged { z } else { bisect(id, x, lower, upper) };
    Ok(InverseResult {
        value: value.clamp(lower, upper),
        lower,
        upper,
        iterations,
        converged,
    })
}

fn bisect(id: ConvexFunctionId, x: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if id.conjugate(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Independent ground truth for [`inverse`]: plain bisection of the strictly
/// increasing `α*` on a bracket found by doubling, without the analytic
/// estimates.
pub fn bisect_oracle(id: ConvexFunctionId, x: f64) -> Result<f64> {
    check_nonnegative("x", x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while id.conjugate(hi) < x {
        hi *= 2.0;
    }
    Ok(bisect(id, x, 0.0, hi))
}

/// `(L*)⁻¹(x)` for `L(t) = u·α(v·t)`, which equals `u·v·(α*)⁻¹(x/u)`.
pub fn scaled_inverse(id: ConvexFunctionId, u: f64, v: f64, x: f64) -> Result<f64> {
    if !(u > 0.0 && v > 0.0) {
        return Err(Error::Domain(format!("scales must be positive, got u={u}, v={v}")));
    }
    Ok(u * v * inverse(id, x / u)?.value)
}

/// The two sides of the Bennett moment generating function bound for a
/// centered variable `Y ≤ 1` with `E Y² ≤ v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BennettMgf {
    /// `(v e^t + e^{−vt}) / (1 + v)`
    pub middle: f64,
    /// `exp(v α₁(t))`
    pub exponential: f64,
}

pub fn bennett_mgf_bound(v: f64, t: f64) -> Result<BennettMgf> {
    check_nonnegative("v", v)?;
    check_nonnegative("t", t)?;
    Ok(BennettMgf {
        middle: (v * t.exp() + (-v * t).exp()) / (1.0 + v),
        exponential: (v * ConvexFunctionId::Alpha1.alpha(t)).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ConvexFunctionId::{Alpha0, Alpha1};

    #[test]
    fn conjugate_examples() {
        assert_eq!(conjugate_eval(Alpha0, 0.0).unwrap(), 0.0);
        assert_eq!(conjugate_eval(Alpha1, 0.0).unwrap(), 0.0);
        let e1 = 3.0 * 3f64.ln() - 2.0;
        assert!((conjugate_eval(Alpha1, 2.0).unwrap() - e1).abs() < 1e-15);
        assert!((conjugate_eval(Alpha1, 2.0).unwrap() - 1.295_836_866_004_329).abs() < 1e-14);
        assert!((conjugate_eval(Alpha0, 3.5).unwrap() - 0.997_961_301_611_862_9).abs() < 1e-14);
        assert!(matches!(conjugate_eval(Alpha0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn series_matches_direct_form() {
        for z in [0.099, 0.05, 1e-3] {
            let direct = z - f64::ln_1p(z);
            assert!((z_minus_ln1p(z) - direct).abs() < 1e-12 * direct);
        }
        assert!((z_minus_ln1p(1e-8) - 5e-17).abs() < 1e-24);
    }

    #[test]
    fn conjugates_positive_away_from_origin() {
        for id in ConvexFunctionId::ALL {
            for k in -8..4 {
                let lambda = 10f64.powi(k);
                assert!(conjugate_eval(id, lambda).unwrap() > 0.0, "{id} at {lambda}");
            }
        }
    }

    #[test]
    fn conjugate_matches_variational_definition() {
        // α*(λ) = sup_t (λt − α(t)), maximized over a fine grid.
        for id in ConvexFunctionId::ALL {
            for &lambda in &[0.3, 1.0, 4.0] {
                let upper_t = match id {
                    Alpha0 => 0.5,
                    Alpha1 => 5.0,
                };
                let sup = (1..200_000)
                    .map(|i| upper_t * i as f64 / 200_000.0)
                    .map(|t| lambda * t - id.alpha(t))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((sup - id.conjugate(lambda)).abs() < 1e-8, "{id} {lambda}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        for id in ConvexFunctionId::ALL {
            let r = inverse(id, 0.0).unwrap();
            assert_eq!((r.value, r.lower, r.upper), (0.0, 0.0, 0.0));
        }
        // References from an independent root finder (scipy brentq).
        let r = inverse(Alpha1, 2.0).unwrap();
        assert!((r.value - 2.591_121_476_668_622_6).abs() < 1e-12);
        assert!(r.lower == 2.0 && (r.upper - 8.0 / 3.0).abs() < 1e-15);
        let r = inverse(Alpha0, 1.0).unwrap();
        assert!((r.value - 3.505_241_495_792_883_5).abs() < 1e-12);
        assert!((r.lower - 10.0 / 3.0).abs() < 1e-15 && r.upper == 4.0);
        // α₁*(e − 1) = 1 exactly.
        assert!((inverse(Alpha1, 1.0).unwrap().value - (std::f64::consts::E - 1.0)).abs() < 1e-14);
        assert!(inverse(Alpha0, 1e-301).unwrap().value == 0.0);
        assert!(inverse(Alpha0, -1.0).is_err());
    }

    #[test]
    fn bisect_oracle_examples() {
        assert_eq!(bisect_oracle(Alpha1, 0.0).unwrap(), 0.0);
        let z = bisect_oracle(Alpha1, 2.0).unwrap();
        assert!((z - 2.591_121_476_668_622_6).abs() < 1e-12);
        for id in ConvexFunctionId::ALL {
            for x in [0.1, 1.0, 10.0] {
                let z = bisect_oracle(id, x).unwrap();
                assert!((conjugate_eval(id, z).unwrap() - x).abs() < 1e-10 * x.max(1.0));
            }
        }
        assert!((bisect_oracle(Alpha0, 10.0).unwrap() - 23.185_764_204_040_808).abs() < 1e-10);
        assert!((bisect_oracle(Alpha1, 10.0).unwrap() - 7.174_364_667_724_81).abs() < 1e-10);
    }

    #[test]
    fn theorem_example_bracket() {
        let r = inverse(Alpha1, 0.04).unwrap();
        assert!((r.lower - 0.08f64.sqrt()).abs() < 1e-15);
        assert!((r.upper - (0.08f64.sqrt() + 0.04 / 3.0)).abs() < 1e-15);
        assert!((r.value - 0.295_883_323_563_299_44).abs() < 1e-12);
    }

    #[test]
    fn newton_iterates_decrease() {
        for id in ConvexFunctionId::ALL {
            for x in [1e-6, 0.01, 1.0, 50.0, 1e3] {
                let mut z = id.brackets(x).1;
                let root = bisect_oracle(id, x).unwrap();
                for _ in 0..8 {
                    let next = id.newton_map(z, x);
                    assert!(next <= z * (1.0 + 1e-14) && next >= root - 1e-12 * root.max(1.0), "{id} x={x}");
                    z = next;
                }
            }
        }
    }

    #[test]
    fn refined_upper_is_first_newton_iterate() {
        for id in ConvexFunctionId::ALL {
            for x in [0.01, 0.5, 3.0, 400.0] {
                let z1 = id.newton_map(id.brackets(x).1, x);
                assert!((id.refined_upper(x) - z1).abs() < 1e-12 * z1.max(1.0));
            }
        }
    }

    #[test]
    fn bennett_mgf_examples() {
        let b = bennett_mgf_bound(3.0, 0.0).unwrap();
        assert_eq!((b.middle, b.exponential), (1.0, 1.0));
        let b = bennett_mgf_bound(0.0, 5.0).unwrap();
        assert_eq!((b.middle, b.exponential), (1.0, 1.0));
        let b = bennett_mgf_bound(1.0, 1.0).unwrap();
        assert!((b.middle - 1f64.cosh()).abs() < 1e-15);
        assert!((b.middle - 1.543_080_634_815_243_7).abs() < 1e-12);
        assert!((b.exponential - (std::f64::consts::E - 2.0).exp()).abs() < 1e-15);
        assert!(b.middle <= b.exponential);
    }

    #[test]
    fn bennett_mgf_dominates_two_point_law() {
        // Y = 1 w.p. v/(1+v), −v w.p. 1/(1+v) is centered, Y ≤ 1, E Y² = v and
        // its MGF equals the middle expression.
        for v in [0.1, 0.5, 2.0] {
            for t in [0.1, 1.0, 3.0] {
                let b = bennett_mgf_bound(v, t).unwrap();
                let mgf = v / (1.0 + v) * t.exp() + 1.0 / (1.0 + v) * (-v * t).exp();
                assert!((mgf - b.middle).abs() < 1e-12 && b.middle <= b.exponential * (1.0 + 1e-15));
            }
        }
    }
}
