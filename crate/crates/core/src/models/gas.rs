use serde::Serialize;

use super::{check_generation, MeanFieldModel};
use crate::error::{Error, Result};
use crate::measure::{FiniteKernel, ProbabilityVector, NORMALIZATION_TOL};

/// Time-homogeneous McKean collision model
/// `K_η(x,·) = Σ_s ν(s) η(a(s,·)) M((s,x),·)`.
///
/// `post_collision` has one row per `(label, state)` pair, row index
/// `label * states + state`.
#[derive(Debug, Clone, Serialize)]
pub struct McKeanGasModel {
    nu: Vec<f64>,
    collision_weights: Vec<Vec<f64>>,
    post_collision: FiniteKernel,
    initial: ProbabilityVector,
    horizon: usize,
}

impl McKeanGasModel {
    pub fn new(
        nu: Vec<f64>,
        collision_weights: Vec<Vec<f64>>,
        post_collision: FiniteKernel,
        initial: ProbabilityVector,
        horizon: usize,
    ) -> Result<Self> {
        let s = initial.len();
        let labels = nu.len();
        if labels == 0 {
            return Err(Error::InvalidParams("gas model needs at least one collision label".into()));
        }
        if collision_weights.len() != labels {
            return Err(Error::DimensionMismatch {
                expected: labels,
                found: collision_weights.len(),
            });
        }
        if post_collision.rows() != labels * s || post_collision.cols() != s {
            return Err(Error::DimensionMismatch {
                expected: labels * s,
                found: post_collision.rows(),
            });
        }
        if nu.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams("nu must be finite and nonnegative".into()));
        }
        for row in &collision_weights {
            if row.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParams("collision weights must be finite and nonnegative".into()));
            }
        }
        for x in 0..s {
            let total: f64 = nu.iter().zip(&collision_weights).map(|(n, a)| n * a[x]).sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidParams(format!(
                    "collision normalization sum_s nu(s) a(s,{x}) = {total}, expected 1"
                )));
            }
        }
        Ok(Self {
            nu,
            collision_weights,
            post_collision,
            initial,
            horizon,
        })
    }

    /// Two-velocities Maxwellian gas on `{-1, +1}`: state 0 is velocity −1,
    /// state 1 is velocity +1, and a collision with a particle of velocity `s`
    /// maps `x` to `s·x`.
    pub fn two_velocities(initial_plus: f64, horizon: usize) -> Result<Self> {
        let initial = ProbabilityVector::new(vec![1.0 - initial_plus, initial_plus])?;
        let nu = vec![1.0, 1.0];
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let mut rows = Vec::with_capacity(4);
        for s in 0..2 {
            for x in 0..2 {
                rows.push(if s == x { vec![0.0, 1.0] } else { vec![1.0, 0.0] });
            }
        }
        Self::new(nu, a, FiniteKernel::new(rows)?, initial, horizon)
    }

    /// Velocity attached to a state index of the two-velocities model.
    pub fn velocity(state: usize) -> f64 {
        if state == 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn labels(&self) -> usize {
        self.nu.len()
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn collision_weights(&self) -> &[Vec<f64>] {
        &self.collision_weights
    }

    pub fn post_collision(&self) -> &FiniteKernel {
        &self.post_collision
    }

    /// The collision kernel built at `η`.
    pub fn gas_kernel(&self, eta: &ProbabilityVector) -> Result<FiniteKernel> {
        let s = self.initial.len();
        if eta.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: eta.len(),
            });
        }
        let rates: Vec<f64> = self
            .nu
            .iter()
            .zip(&self.collision_weights)
            .map(|(n, a)| n * a.iter().zip(eta.weights()).map(|(a, w)| a * w).sum::<f64>())
            .collect();
        let mut data = vec![0.0; s * s];
        for x in 0..s {
            let out = &mut data[x * s..(x + 1) * s];
            for (label, &rate) in rates.iter().enumerate() {
                if rate == 0.0 {
                    continue;
                }
                for (o, m) in out.iter_mut().zip(self.post_collision.row(label * s + x)) {
                    *o += rate * m;
                }
            }
        }
        FiniteKernel::from_unnormalized_rows(s, s, data)
    }

    /// `η K_η`
    pub fn gas_phi_step(&self, eta: &ProbabilityVector) -> Result<ProbabilityVector> {
        eta.push(&self.gas_kernel(eta)?)
    }
}

impl MeanFieldModel for McKeanGasModel {
    fn states(&self) -> usize {
        self.initial.len()
    }

    fn initial(&self) -> &ProbabilityVector {
        &self.initial
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn phi(&self, eta: &ProbabilityVector, n: usize) -> Result<ProbabilityVector> {
        check_generation(n, self.horizon)?;
        self.gas_phi_step(eta)
    }

    fn kernel(&self, eta: &ProbabilityVector, n: usize) -> Result<FiniteKernel> {
        check_generation(n, self.horizon)?;
        self.gas_kernel(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{BoundedFunction, Integrate};
    use crate::models::exact_flow;
    use proptest::prelude::*;

    fn plus(p: f64) -> ProbabilityVector {
        ProbabilityVector::new(vec![1.0 - p, p]).unwrap()
    }

    #[test]
    fn quadratic_recursion_examples() {
        let gas = McKeanGasModel::two_velocities(0.5, 1).unwrap();
        assert!((gas.gas_phi_step(&plus(0.5)).unwrap().get(1) - 0.5).abs() < 1e-15);
        assert!((gas.gas_phi_step(&plus(0.3)).unwrap().get(1) - 0.58).abs() < 1e-15);
        assert_eq!(gas.gas_phi_step(&plus(1.0)).unwrap().get(1), 1.0);
    }

    #[test]
    fn kernel_examples() {
        let gas = McKeanGasModel::two_velocities(0.3, 1).unwrap();
        let k = gas.gas_kernel(&plus(0.3)).unwrap();
        // K(+1,·) = p δ_{+1} + (1−p) δ_{−1}; K(−1,·) = p δ_{−1} + (1−p) δ_{+1}.
        assert!((k.entry(1, 1) - 0.3).abs() < 1e-15 && (k.entry(1, 0) - 0.7).abs() < 1e-15);
        assert!((k.entry(0, 0) - 0.3).abs() < 1e-15 && (k.entry(0, 1) - 0.7).abs() < 1e-15);

        let k = gas.gas_kernel(&plus(1.0)).unwrap();
        assert_eq!(k.row(1), &[0.0, 1.0]);
        assert_eq!(k.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn exact_flow_from_point_three() {
        let gas = McKeanGasModel::two_velocities(0.3, 6).unwrap();
        let flow = exact_flow(&gas, 6).unwrap();
        let expected = [0.3, 0.58, 0.5128, 0.50032768, 0.500_000_214_748_364_8];
        for (eta, e) in flow.iter().zip(expected) {
            assert!((eta.get(1) - e).abs() < 1e-15);
        }
        let gaps: Vec<f64> = flow.iter().map(|e| (e.get(1) - 0.5).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn normalization_violation_rejected() {
        let m = FiniteKernel::identity(2).unwrap();
        let rows = FiniteKernel::new(vec![m.row(0).to_vec(), m.row(1).to_vec(), m.row(0).to_vec(), m.row(1).to_vec()]).unwrap();
        let err = McKeanGasModel::new(
            vec![1.0, 1.0],
            vec![vec![0.5, 0.5], vec![0.6, 0.5]],
            rows,
            plus(0.5),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    proptest! {
        #[test]
        fn kernel_is_compatible_with_flow(p in 0.0f64..=1.0, f in prop::collection::vec(-2.0f64..2.0, 2)) {
            let gas = McKeanGasModel::two_velocities(0.5, 1).unwrap();
            let eta = plus(p);
            let f = BoundedFunction::new(f).unwrap();
            let via_kernel = eta.push(&gas.gas_kernel(&eta).unwrap()).unwrap().integrate(&f).unwrap();
            let via_phi = gas.gas_phi_step(&eta).unwrap().integrate(&f).unwrap();
            prop_assert!((via_kernel - via_phi).abs() < 1e-12);
            let q = p * p + (1.0 - p) * (1.0 - p);
            prop_assert!((gas.gas_phi_step(&eta).unwrap().get(1) - q).abs() < 1e-15);
        }

        #[test]
        fn two_velocities_flow_is_monotone(p in 0.0f64..=1.0) {
            let gas = McKeanGasModel::two_velocities(p, 12).unwrap();
            let flow = exact_flow(&gas, 12).unwrap();
            for w in flow.windows(2) {
                prop_assert!((w[1].get(1) - 0.5).abs() <= (w[0].get(1) - 0.5).abs() + 1e-16);
            }
        }
    }
}
