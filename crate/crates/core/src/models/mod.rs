//! Model families: Feynman–Kac flows, McKean gas collisions, and
//! one-dimensional Gaussian mean field transitions.

mod feynman_kac;
pub mod file;
mod gas;
mod gaussian;

pub use feynman_kac::{FeynmanKacModel, FkSemigroup};
pub use file::{Model, ModelFile};
pub use gas::McKeanGasModel;
pub use gaussian::{GaussianMeanFieldModel, GaussianMoments, ScalarFn};

use crate::error::{Error, Result};
use crate::measure::{FiniteKernel, ProbabilityVector};

/// A finite-state mean field model: a nonlinear flow `η_n = Φ_n(η_{n-1})`
/// together with a McKean kernel satisfying `η K_{n,η} = Φ_n(η)`.
pub trait MeanFieldModel: Send + Sync {
    fn states(&self) -> usize;

    fn initial(&self) -> &ProbabilityVector;

    /// Last generation `n` for which `Φ_n` and `K_{n,η}` are defined.
    fn horizon(&self) -> usize;

    /// One step of the limiting flow, `Φ_n(η)` for `1 ≤ n ≤ horizon`.
    fn phi(&self, eta: &ProbabilityVector, n: usize) -> Result<ProbabilityVector>;

    /// McKean transition `K_{n,η}` for `1 ≤ n ≤ horizon`.
    fn kernel(&self, eta: &ProbabilityVector, n: usize) -> Result<FiniteKernel>;
}

pub(crate) fn check_generation(n: usize, horizon: usize) -> Result<()> {
    if n == 0 || n > horizon {
        Err(Error::GenerationOutOfRange {
            generation: n,
            max: horizon,
        })
    } else {
        Ok(())
    }
}

/// `[η_0, .., η_horizon]` by iterating the exact one-step map.
pub fn exact_flow<M: MeanFieldModel + ?Sized>(model: &M, horizon: usize) -> Result<Vec<ProbabilityVector>> {
    if horizon > model.horizon() {
        return Err(Error::GenerationOutOfRange {
            generation: horizon,
            max: model.horizon(),
        });
    }
    let mut flow = Vec::with_capacity(horizon + 1);
    flow.push(model.initial().clone());
    for n in 1..=horizon {
        let next = model.phi(&flow[n - 1], n)?;
        flow.push(next);
    }
    Ok(flow)
}
