use serde::Serialize;

use super::{check_generation, exact_flow, MeanFieldModel};
use crate::error::{Error, Result};
use crate::measure::{boltzmann_gibbs, BoundedFunction, FiniteKernel, Integrate, ParticleCloud, ProbabilityVector};

/// Feynman–Kac flow `η_n = Ψ_{G_{n-1}}(η_{n-1}) M_n` on a finite state space.
///
/// Indexing: `potentials[p] = G_p` and `epsilons[p] = ε_p` for
/// `0 ≤ p < horizon`, `mutations[n - 1] = M_n` for `1 ≤ n ≤ horizon`.
#[derive(Debug, Clone, Serialize)]
pub struct FeynmanKacModel {
    potentials: Vec<BoundedFunction>,
    mutations: Vec<FiniteKernel>,
    epsilons: Vec<f64>,
    initial: ProbabilityVector,
}

impl FeynmanKacModel {
    pub fn new(
        potentials: Vec<BoundedFunction>,
        mutations: Vec<FiniteKernel>,
        epsilons: Vec<f64>,
        initial: ProbabilityVector,
    ) -> Result<Self> {
        let horizon = mutations.len();
        for (what, len) in [("potentials", potentials.len()), ("epsilons", epsilons.len())] {
            if len != horizon {
                return Err(Error::InvalidParams(format!(
                    "{what} has {len} entries but there are {horizon} mutation kernels"
                )));
            }
        }
        let s = initial.len();
        for g in &potentials {
            if g.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    found: g.len(),
                });
            }
            if let Some((index, &value)) = g.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                return Err(Error::NonPositivePotential { index, value });
            }
        }
        for m in &mutations {
            if m.rows() != s || m.cols() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    found: if m.rows() != s { m.rows() } else { m.cols() },
                });
            }
        }
        for (p, (&eps, g)) in epsilons.iter().zip(&potentials).enumerate() {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::InvalidParams(format!("epsilon_{p} = {eps} outside [0,1]")));
            }
            if eps * g.max() > 1.0 {
                return Err(Error::EpsilonTooLarge {
                    generation: p,
                    epsilon: eps,
                    potential: g.max(),
                });
            }
        }
        Ok(Self {
            potentials,
            mutations,
            epsilons,
            initial,
        })
    }

    /// Time-homogeneous model `(G, M, ε)` repeated over `horizon` steps.
    pub fn homogeneous(
        potential: BoundedFunction,
        mutation: FiniteKernel,
        epsilon: f64,
        initial: ProbabilityVector,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(
            vec![potential; horizon],
            vec![mutation; horizon],
            vec![epsilon; horizon],
            initial,
        )
    }

    pub fn potential(&self, p: usize) -> &BoundedFunction {
        &self.potentials[p]
    }

    pub fn mutation(&self, n: usize) -> &FiniteKernel {
        &self.mutations[n - 1]
    }

    pub fn epsilon(&self, p: usize) -> f64 {
        self.epsilons[p]
    }

    /// `Φ_n(η) = Ψ_{G_{n-1}}(η) M_n`
    pub fn phi_step(&self, eta: &ProbabilityVector, n: usize) -> Result<ProbabilityVector> {
        check_generation(n, self.horizon())?;
        boltzmann_gibbs(eta, &self.potentials[n - 1])?.push(&self.mutations[n - 1])
    }

    /// Selection/mutation transition
    /// `K_{n,η}(x,·) = ε G(x) M_n(x,·) + (1 − ε G(x)) Φ_n(η)` with
    /// `ε = ε_{n-1}`, `G = G_{n-1}`.
    pub fn mckean_kernel(&self, eta: &ProbabilityVector, n: usize) -> Result<FiniteKernel> {
        check_generation(n, self.horizon())?;
        let eps = self.epsilons[n - 1];
        let g = &self.potentials[n - 1];
        let m = &self.mutations[n - 1];
        if eps * g.max() > 1.0 {
            return Err(Error::EpsilonTooLarge {
                generation: n - 1,
                epsilon: eps,
                potential: g.max(),
            });
        }
        let target = self.phi_step(eta, n)?;
        let s = self.states();
        let mut data = Vec::with_capacity(s * s);
        for x in 0..s {
            let keep = eps * g.at(x);
            data.extend(
                m.row(x)
                    .iter()
                    .zip(target.weights())
                    .map(|(mv, tv)| keep * mv + (1.0 - keep) * tv),
            );
        }
        FiniteKernel::from_unnormalized_rows(s, s, data)
    }

    /// `Z_n = Π_{0≤p<n} η_p(G_p)` along the exact flow.
    pub fn partition_function(&self, horizon: usize) -> Result<f64> {
        let flow = exact_flow(self, horizon)?;
        flow.iter()
            .take(horizon)
            .enumerate()
            .try_fold(1.0, |z, (p, eta)| Ok(z * eta.integrate(&self.potentials[p])?))
    }

    /// Unbiased particle estimate `Π_{0≤p<n} η_p^N(G_p)` from clouds of
    /// generations `0..n`.
    pub fn particle_partition_function(&self, clouds: &[ParticleCloud<usize>]) -> Result<f64> {
        if clouds.len() > self.horizon() {
            return Err(Error::GenerationOutOfRange {
                generation: clouds.len(),
                max: self.horizon(),
            });
        }
        clouds
            .iter()
            .enumerate()
            .try_fold(1.0, |z, (p, c)| Ok(z * c.integrate(&self.potentials[p])?))
    }

    /// `Q_k(x,y) = G_{k-1}(x) M_k(x,y)`, composed over `p < k ≤ n`.
    pub fn semigroup(&self, p: usize, n: usize) -> Result<FkSemigroup> {
        if p > n || n > self.horizon() {
            return Err(Error::GenerationOutOfRange {
                generation: n.max(p),
                max: self.horizon(),
            });
        }
        let s = self.states();
        let mut q = FkSemigroup::identity(s);
        for k in (p + 1)..=n {
            let g = &self.potentials[k - 1];
            let m = &self.mutations[k - 1];
            let mut data = vec![0.0; s * s];
            for x in 0..s {
                for z in 0..s {
                    let qxz = q.at(x, z);
                    if qxz == 0.0 {
                        continue;
                    }
                    let w = qxz * g.at(z);
                    for (y, mv) in m.row(z).iter().enumerate() {
                        data[x * s + y] += w * mv;
                    }
                }
            }
            q = FkSemigroup { states: s, data };
        }
        Ok(q)
    }

    /// First-order operator `D_η Φ_{p,n}(f) = G_{p,n,η} · P_{p,n}(f − Φ_{p,n}(η)(f))`.
    pub fn first_order_operator(
        &self,
        eta: &ProbabilityVector,
        p: usize,
        n: usize,
        f: &BoundedFunction,
    ) -> Result<BoundedFunction> {
        let q = self.semigroup(p, n)?;
        let mass = q.mass();
        let eta_mass = eta.integrate(&mass)?;
        let target = q.propagate(eta)?;
        let shift = target.integrate(f)?;
        let pf = q.markov()?.apply(f)?;
        BoundedFunction::new(
            (0..self.states())
                .map(|x| mass.at(x) / eta_mass * (pf.at(x) - shift))
                .collect(),
        )
    }
}

impl MeanFieldModel for FeynmanKacModel {
    fn states(&self) -> usize {
        self.initial.len()
    }

    fn initial(&self) -> &ProbabilityVector {
        &self.initial
    }

    fn horizon(&self) -> usize {
        self.mutations.len()
    }

    fn phi(&self, eta: &ProbabilityVector, n: usize) -> Result<ProbabilityVector> {
        self.phi_step(eta, n)
    }

    fn kernel(&self, eta: &ProbabilityVector, n: usize) -> Result<FiniteKernel> {
        self.mckean_kernel(eta, n)
    }
}

/// Unnormalized Feynman–Kac semigroup `Q_{p,n}` as a dense positive matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FkSemigroup {
    states: usize,
    data: Vec<f64>,
}

impl FkSemigroup {
    fn identity(states: usize) -> Self {
        let mut data = vec![0.0; states * states];
        for x in 0..states {
            data[x * states + x] = 1.0;
        }
        Self { states, data }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.states + y]
    }

    /// `Q_{p,n}(1)`
    pub fn mass(&self) -> BoundedFunction {
        BoundedFunction::new(self.data.chunks(self.states).map(|r| r.iter().sum()).collect())
            .expect("finite semigroup")
    }

    /// `P_{p,n} = Q_{p,n}(·) / Q_{p,n}(1)`
    pub fn markov(&self) -> Result<FiniteKernel> {
        FiniteKernel::from_unnormalized_rows(self.states, self.states, self.data.clone())
    }

    /// `Φ_{p,n}(η) = η Q_{p,n} / η Q_{p,n}(1)`
    pub fn propagate(&self, eta: &ProbabilityVector) -> Result<ProbabilityVector> {
        let mut out = vec![0.0; self.states];
        for (x, w) in eta.weights().iter().enumerate() {
            for (o, q) in out.iter_mut().zip(&self.data[x * self.states..(x + 1) * self.states]) {
                *o += w * q;
            }
        }
        ProbabilityVector::from_unnormalized(out)
    }

    /// `q_{p,n} = sup_{x,y} Q_{p,n}(1)(x) / Q_{p,n}(1)(y)`
    pub fn mass_ratio(&self) -> f64 {
        let m = self.mass();
        m.max() / m.min()
    }
}
