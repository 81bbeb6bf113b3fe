//! Finite-state measures, bounded observables and Markov kernels.
//!
//! Everything here is dense and immutable after construction. The oracles
//! built on top of these types are exact up to floating point, which is why
//! state spaces are kept small (see [`DEFAULT_MAX_STATES`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Default cap on the number of states of a finite state space.
pub const DEFAULT_MAX_STATES: usize = 64;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Validates `weights` as a probability vector and renormalizes away any
/// residual deviation below [`NORMALIZATION_TOL`].
fn normalize_checked(mut weights: Vec<f64>, limit: usize) -> std::result::Result<Vec<f64>, String> {
    if weights.is_empty() {
        return Err("empty state space".into());
    }
    if weights.len() > limit {
        return Err(format!("{} states exceeds limit {}", weights.len(), limit));
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
        return Err(format!("non-finite weight at index {i}"));
    }
    if let Some(i) = weights.iter().position(|&w| w < 0.0) {
        return Err(format!("negative weight {} at index {i}", weights[i]));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(format!("weights sum to {total}"));
    }
    if total != 1.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(weights)
}

/// Something a [`BoundedFunction`] can be integrated against.
pub trait Integrate {
    fn integrate(&self, f: &BoundedFunction) -> Result<f64>;
}

/// A probability measure on `{0, .., S-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.weights
    }
}

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::with_limit(weights, DEFAULT_MAX_STATES)
    }

    pub fn with_limit(weights: Vec<f64>, limit: usize) -> Result<Self> {
        if weights.len() > limit {
            return Err(Error::StateSpaceTooLarge {
                states: weights.len(),
                limit,
            });
        }
        normalize_checked(weights, limit)
            .map(|weights| Self { weights })
            .map_err(Error::InvalidProbability)
    }

    /// Renormalizes a nonnegative vector with positive mass. Internal results
    /// (products of stochastic matrices, reweightings) go through here.
    pub(crate) fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        check_finite(&weights)?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidProbability(format!(
                "cannot normalize vector with total mass {total}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { weights })
    }

    pub fn uniform(states: usize) -> Result<Self> {
        if states == 0 {
            return Err(Error::InvalidProbability("empty state space".into()));
        }
        Self::new(vec![1.0 / states as f64; states])
    }

    pub fn dirac(states: usize, at: usize) -> Result<Self> {
        if at >= states {
            return Err(Error::DimensionMismatch {
                expected: states,
                found: at + 1,
            });
        }
        let mut w = vec![0.0; states];
        w[at] = 1.0;
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, state: usize) -> f64 {
        self.weights[state]
    }

    /// `η[(f − η(f))²]`
    pub fn variance(&self, f: &BoundedFunction) -> Result<f64> {
        let mean = self.integrate(f)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values())
            .map(|(w, v)| w * (v - mean) * (v - mean))
            .sum())
    }

    /// `η[(f − η f)(g − η g)]`
    pub fn covariance(&self, f: &BoundedFunction, g: &BoundedFunction) -> Result<f64> {
        let mf = self.integrate(f)?;
        let mg = self.integrate(g)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values().iter().zip(g.values()))
            .map(|(w, (a, b))| w * (a - mf) * (b - mg))
            .sum())
    }

    /// The push-forward `ηK`.
    pub fn push(&self, kernel: &FiniteKernel) -> Result<ProbabilityVector> {
        check_dim(kernel.rows(), self.len())?;
        let mut out = vec![0.0; kernel.cols()];
        for (x, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(kernel.row(x)) {
                *o += w * k;
            }
        }
        Self::from_unnormalized(out)
    }

    /// `(1 − t)·self + t·other` for `t ∈ [0, 1]`.
    pub fn mix(&self, other: &ProbabilityVector, t: f64) -> Result<ProbabilityVector> {
        check_dim(self.len(), other.len())?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("mixture weight {t} outside [0,1]")));
        }
        Self::from_unnormalized(
            self.weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        )
    }

    /// Cumulative weights, last entry forced to exactly 1.
    pub fn cdf(&self) -> Vec<f64> {
        cumulative(&self.weights)
    }

    /// Largest total-variation distance to `other`.
    pub fn total_variation(&self, other: &ProbabilityVector) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(tv(&self.weights, &other.weights))
    }
}

impl Integrate for ProbabilityVector {
    fn integrate(&self, f: &BoundedFunction) -> Result<f64> {
        check_dim(self.len(), f.len())?;
        Ok(self.weights.iter().zip(f.values()).map(|(w, v)| w * v).sum())
    }
}

pub(crate) fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Inverse-CDF lookup: smallest index with `cdf[i] > u`, skipping
/// zero-probability states.
#[inline]
pub(crate) fn sample_index(cdf: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|&c| c <= u);
    i.min(cdf.len() - 1)
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// A real observable on `{0, .., S-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BoundedFunction {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BoundedFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<BoundedFunction> for Vec<f64> {
    fn from(f: BoundedFunction) -> Self {
        f.values
    }
}

impl BoundedFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("function on an empty state space".into()));
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn constant(states: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; states])
    }

    pub fn indicator(states: usize, at: usize) -> Result<Self> {
        if at >= states {
            return Err(Error::DimensionMismatch {
                expected: states,
                found: at + 1,
            });
        }
        let mut v = vec![0.0; states];
        v[at] = 1.0;
        Self::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| op(v)).collect())
    }

    /// Rescales to oscillation exactly 1 (constants are returned unchanged).
    pub fn normalized_oscillation(&self) -> Self {
        let osc = self.oscillation();
        if osc == 0.0 {
            return self.clone();
        }
        Self {
            values: self.values.iter().map(|v| v / osc).collect(),
        }
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }
}

/// A Markov kernel from `{0, .., rows-1}` to `{0, .., cols-1}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FiniteKernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for FiniteKernel {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<FiniteKernel> for Vec<Vec<f64>> {
    fn from(k: FiniteKernel) -> Self {
        k.data.chunks(k.cols).map(|r| r.to_vec()).collect()
    }
}

impl FiniteKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_limit(rows, DEFAULT_MAX_STATES)
    }

    pub fn with_limit(rows: Vec<Vec<f64>>, limit: usize) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::InvalidKernel {
                row: 0,
                reason: "kernel has no rows".into(),
            });
        }
        if n_rows > limit {
            return Err(Error::StateSpaceTooLarge {
                states: n_rows,
                limit,
            });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(n_rows * cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            let row = normalize_checked(row, limit)
                .map_err(|reason| Error::InvalidKernel { row: i, reason })?;
            data.extend(row);
        }
        Ok(Self {
            rows: n_rows,
            cols,
            data,
        })
    }

    /// Builds a kernel from rows that are known to be nonnegative with
    /// positive mass; each row is renormalized.
    pub(crate) fn from_unnormalized_rows(rows: usize, cols: usize, mut data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(data.len(), rows * cols);
        for (i, row) in data.chunks_mut(cols).enumerate() {
            let total: f64 = row.iter().sum();
            if !(total > 0.0) || row.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::InvalidKernel {
                    row: i,
                    reason: format!("row mass {total}"),
                });
            }
            row.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(states: usize) -> Result<Self> {
        let rows = (0..states)
            .map(|i| (0..states).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(rows)
    }

    /// Every row equal to `target`.
    pub fn constant(rows: usize, target: &ProbabilityVector) -> Result<Self> {
        Self::new(vec![target.weights().to_vec(); rows])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.cols + y]
    }

    pub fn row_measure(&self, x: usize) -> ProbabilityVector {
        ProbabilityVector {
            weights: self.row(x).to_vec(),
        }
    }

    /// `K(f)(x) = Σ_y K(x,y) f(y)`
    pub fn apply(&self, f: &BoundedFunction) -> Result<BoundedFunction> {
        check_dim(self.cols, f.len())?;
        BoundedFunction::new(
            (0..self.rows)
                .map(|x| self.row(x).iter().zip(f.values()).map(|(k, v)| k * v).sum())
                .collect(),
        )
    }

    /// Row-wise conditional variance `K[(f − K(f)(x))²](x)`.
    pub fn conditional_variance(&self, f: &BoundedFunction) -> Result<BoundedFunction> {
        self.conditional_covariance(f, f)
    }

    /// Row-wise conditional covariance `K[(f − Kf(x))(g − Kg(x))](x)`.
    pub fn conditional_covariance(&self, f: &BoundedFunction, g: &BoundedFunction) -> Result<BoundedFunction> {
        let kf = self.apply(f)?;
        let kg = self.apply(g)?;
        BoundedFunction::new(
            (0..self.rows)
                .map(|x| {
                    let (mf, mg) = (kf.at(x), kg.at(x));
                    self.row(x)
                        .iter()
                        .zip(f.values().iter().zip(g.values()))
                        .map(|(k, (a, b))| k * (a - mf) * (b - mg))
                        .sum()
                })
                .collect(),
        )
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &FiniteKernel) -> Result<FiniteKernel> {
        check_dim(self.cols, other.rows)?;
        let mut data = vec![0.0; self.rows * other.cols];
        for x in 0..self.rows {
            let out = &mut data[x * other.cols..(x + 1) * other.cols];
            for (z, &k) in self.row(x).iter().enumerate() {
                if k == 0.0 {
                    continue;
                }
                for (o, m) in out.iter_mut().zip(other.row(z)) {
                    *o += k * m;
                }
            }
        }
        Self::from_unnormalized_rows(self.rows, other.cols, data)
    }

    /// Dobrushin ergodic coefficient: the largest total-variation distance
    /// between two rows.
    pub fn dobrushin(&self) -> f64 {
        let mut best: f64 = 0.0;
        for x in 0..self.rows {
            for y in (x + 1)..self.rows {
                best = best.max(tv(self.row(x), self.row(y)));
            }
        }
        best.min(1.0)
    }

    /// Per-row CDFs for inverse-CDF sampling.
    pub fn row_cdfs(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|x| cumulative(self.row(x))).collect()
    }
}

pub fn dobrushin(kernel: &FiniteKernel) -> f64 {
    kernel.dobrushin()
}

pub fn compose(first: &FiniteKernel, second: &FiniteKernel) -> Result<FiniteKernel> {
    first.compose(second)
}

/// Boltzmann–Gibbs transform `Ψ_G(η)(x) = η(x) G(x) / η(G)`.
pub fn boltzmann_gibbs(eta: &ProbabilityVector, potential: &BoundedFunction) -> Result<ProbabilityVector> {
    check_dim(eta.len(), potential.len())?;
    if let Some((index, &value)) = potential.values().iter().enumerate().find(|(_, &g)| !(g > 0.0)) {
        return Err(Error::NonPositivePotential { index, value });
    }
    ProbabilityVector::from_unnormalized(
        eta.weights()
            .iter()
            .zip(potential.values())
            .map(|(w, g)| w * g)
            .collect(),
    )
}

/// `N` particle states at one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud<S> {
    pub states: Vec<S>,
    pub generation: usize,
}

impl<S> ParticleCloud<S> {
    pub fn new(states: Vec<S>, generation: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParams("particle cloud needs N >= 1".into()));
        }
        Ok(Self { states, generation })
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }
}

impl ParticleCloud<usize> {
    /// Occupation measure `η^N = (1/N) Σ δ_{ξ^i}` on `states` points.
    pub fn empirical_measure(&self, states: usize) -> Result<ProbabilityVector> {
        let mut counts = vec![0usize; states];
        for &s in &self.states {
            if s >= states {
                return Err(Error::DimensionMismatch {
                    expected: states,
                    found: s + 1,
                });
            }
            counts[s] += 1;
        }
        let n = self.states.len() as f64;
        Ok(ProbabilityVector {
            weights: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }
}

impl Integrate for ParticleCloud<usize> {
    fn integrate(&self, f: &BoundedFunction) -> Result<f64> {
        if let Some(&s) = self.states.iter().find(|&&s| s >= f.len()) {
            return Err(Error::DimensionMismatch {
                expected: f.len(),
                found: s + 1,
            });
        }
        let total: f64 = self.states.iter().map(|&s| f.at(s)).sum();
        Ok(total / self.states.len() as f64)
    }
}

impl ParticleCloud<f64> {
    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.states.iter().map(|&x| f(x)).sum::<f64>() / self.states.len() as f64
    }
}
