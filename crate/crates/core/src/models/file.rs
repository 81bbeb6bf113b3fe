//! JSON model definition files.
//!
//! ```json
//! {"type": "feynman_kac", "states": 2, "horizon": 3,
//!  "potentials": [[1, 2]], "mutations": [[[0.7, 0.3], [0.4, 0.6]]],
//!  "epsilons": [0], "initial": [0.8, 0.2]}
//! ```
//!
//! Per-generation lists hold either one entry (repeated over the horizon)
//! or exactly `horizon` entries.

use serde::{Deserialize, Serialize};

use super::{FeynmanKacModel, GaussianMeanFieldModel, GaussianMoments, McKeanGasModel, MeanFieldModel, ScalarFn};
use crate::error::{Error, Result};
use crate::measure::{BoundedFunction, FiniteKernel, ProbabilityVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDrift {
    pub a: ScalarFn,
    pub b: ScalarFn,
    pub c: ScalarFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFile {
    FeynmanKac {
        states: usize,
        horizon: usize,
        potentials: Vec<Vec<f64>>,
        mutations: Vec<Vec<Vec<f64>>>,
        epsilons: Vec<f64>,
        initial: Vec<f64>,
    },
    #[serde(rename = "mckean_gas")]
    McKeanGas {
        states: usize,
        horizon: usize,
        nu: Vec<f64>,
        collision_weights: Vec<Vec<f64>>,
        /// One row per (label, state) pair, label-major.
        post_collision: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
    TwoVelocities {
        horizon: usize,
        /// Initial mass of velocity +1.
        initial_plus: f64,
    },
    Gaussian {
        horizon: usize,
        drift: GaussianDrift,
        noise_variance: f64,
        initial: GaussianMoments,
    },
}

/// A validated model ready for simulation.
#[derive(Debug, Clone)]
pub enum Model {
    FeynmanKac(FeynmanKacModel),
    Gas(McKeanGasModel),
    Gaussian(GaussianMeanFieldModel),
}

fn per_generation<T: Clone>(what: &str, items: Vec<T>, horizon: usize) -> Result<Vec<T>> {
    match items.len() {
        1 => Ok(vec![items[0].clone(); horizon]),
        n if n == horizon => Ok(items),
        n => Err(Error::InvalidConfig(format!(
            "{what}: expected 1 or {horizon} entries, found {n}"
        ))),
    }
}

fn check_states(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{what}: expected {expected} states, found {found}"
        )))
    }
}

impl ModelFile {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelFile::FeynmanKac { horizon, .. }
            | ModelFile::McKeanGas { horizon, .. }
            | ModelFile::TwoVelocities { horizon, .. }
            | ModelFile::Gaussian { horizon, .. } => *horizon,
        }
    }

    /// Replaces the horizon; single-entry per-generation lists stretch to fit.
    pub fn with_horizon(mut self, new_horizon: usize) -> Self {
        match &mut self {
            ModelFile::FeynmanKac { horizon, .. }
            | ModelFile::McKeanGas { horizon, .. }
            | ModelFile::TwoVelocities { horizon, .. }
            | ModelFile::Gaussian { horizon, .. } => *horizon = new_horizon,
        }
        self
    }

    pub fn build(&self) -> Result<Model> {
        match self.clone() {
            ModelFile::FeynmanKac {
                states,
                horizon,
                potentials,
                mutations,
                epsilons,
                initial,
            } => {
                check_states("initial", states, initial.len())?;
                let potentials = per_generation("potentials", potentials, horizon)?
                    .into_iter()
                    .map(BoundedFunction::new)
                    .collect::<Result<Vec<_>>>()?;
                let mutations = per_generation("mutations", mutations, horizon)?
                    .into_iter()
                    .map(FiniteKernel::new)
                    .collect::<Result<Vec<_>>>()?;
                let epsilons = per_generation("epsilons", epsilons, horizon)?;
                let model = FeynmanKacModel::new(potentials, mutations, epsilons, ProbabilityVector::new(initial)?)?;
                Ok(Model::FeynmanKac(model))
            }
            ModelFile::McKeanGas {
                states,
                horizon,
                nu,
                collision_weights,
                post_collision,
                initial,
            } => {
                check_states("initial", states, initial.len())?;
                let kernel = FiniteKernel::with_limit(post_collision, usize::MAX)?;
                let model =
                    McKeanGasModel::new(nu, collision_weights, kernel, ProbabilityVector::new(initial)?, horizon)?;
                Ok(Model::Gas(model))
            }
            ModelFile::TwoVelocities { horizon, initial_plus } => {
                Ok(Model::Gas(McKeanGasModel::two_velocities(initial_plus, horizon)?))
            }
            ModelFile::Gaussian {
                horizon,
                drift,
                noise_variance,
                initial,
            } => Ok(Model::Gaussian(GaussianMeanFieldModel::new(
                drift.a,
                drift.b,
                drift.c,
                noise_variance,
                initial,
                horizon,
            )?)),
        }
    }
}

impl Model {
    pub fn horizon(&self) -> usize {
        match self {
            Model::FeynmanKac(m) => m.horizon(),
            Model::Gas(m) => m.horizon(),
            Model::Gaussian(m) => m.horizon,
        }
    }

    /// The finite-state view, when the model has one.
    pub fn as_finite(&self) -> Option<&dyn MeanFieldModel> {
        match self {
            Model::FeynmanKac(m) => Some(m),
            Model::Gas(m) => Some(m),
            Model::Gaussian(_) => None,
        }
    }
}
