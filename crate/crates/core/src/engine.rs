//! The `N`-particle mean field Markov chain, local error fields
//! `W_n^N = √N [η_n^N − η_{n-1}^N K_{n,η_{n-1}^N}]` and fluctuation fields
//! `V_n^N = √N [η_n^N − η_n]`.
//!
//! Every replication draws from its own ChaCha8 stream selected by
//! `(master_seed, replication)`, so trajectories do not depend on how
//! replications are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{sample_index, BoundedFunction, Integrate, ParticleCloud, ProbabilityVector};
use crate::models::{GaussianMeanFieldModel, MeanFieldModel, ScalarFn};
use crate::report::fmt_real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub particles: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub replication: u64,
}

impl SimulationConfig {
    pub fn new(particles: usize, horizon: usize, master_seed: u64, replication: u64) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidParams("particle count N must be >= 1".into()));
        }
        Ok(Self {
            particles,
            horizon,
            master_seed,
            replication,
        })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        stream_rng(self.master_seed, self.replication)
    }
}

/// Independent stream `replication` of the generator keyed by `master_seed`.
pub fn stream_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}

/// Clouds of generations `0..=horizon` of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub clouds: Vec<ParticleCloud<S>>,
}

impl<S> Trajectory<S> {
    pub fn particles(&self) -> usize {
        self.clouds[0].size()
    }

    pub fn horizon(&self) -> usize {
        self.clouds.len() - 1
    }

    pub fn cloud(&self, n: usize) -> Result<&ParticleCloud<S>> {
        self.clouds.get(n).ok_or(Error::GenerationOutOfRange {
            generation: n,
            max: self.horizon(),
        })
    }
}

/// `N` iid draws from `η₀`.
pub fn init_cloud<M, R>(model: &M, particles: usize, rng: &mut R) -> Result<ParticleCloud<usize>>
where
    M: MeanFieldModel + ?Sized,
    R: Rng + ?Sized,
{
    let cdf = model.initial().cdf();
    let states = (0..particles).map(|_| sample_index(&cdf, rng.gen::<f64>())).collect();
    ParticleCloud::new(states, 0)
}

/// Moves every particle independently through `K_{n+1,η_n^N}`.
pub fn mean_field_step<M, R>(model: &M, cloud: &ParticleCloud<usize>, rng: &mut R) -> Result<ParticleCloud<usize>>
where
    M: MeanFieldModel + ?Sized,
    R: Rng + ?Sized,
{
    let next = cloud.generation + 1;
    if next > model.horizon() {
        return Err(Error::GenerationOutOfRange {
            generation: next,
            max: model.horizon(),
        });
    }
    let eta = cloud.empirical_measure(model.states())?;
    let cdfs = model.kernel(&eta, next)?.row_cdfs();
    let states = cloud
        .states
        .iter()
        .map(|&x| sample_index(&cdfs[x], rng.gen::<f64>()))
        .collect();
    ParticleCloud::new(states, next)
}

pub fn simulate<M: MeanFieldModel + ?Sized>(model: &M, config: &SimulationConfig) -> Result<Trajectory<usize>> {
    let mut rng = config.rng();
    let mut clouds = Vec::with_capacity(config.horizon + 1);
    clouds.push(init_cloud(model, config.particles, &mut rng)?);
    for n in 0..config.horizon {
        let next = mean_field_step(model, &clouds[n], &mut rng)?;
        clouds.push(next);
    }
    Ok(Trajectory { clouds })
}

/// One-step predictor `η_{n-1}^N K_{n,η_{n-1}^N}`, or `η₀` at `n = 0`.
pub fn predictor<M: MeanFieldModel + ?Sized>(model: &M, traj: &Trajectory<usize>, n: usize) -> Result<ProbabilityVector> {
    traj.cloud(n)?;
    if n == 0 {
        return Ok(model.initial().clone());
    }
    let prev = traj.cloud(n - 1)?.empirical_measure(model.states())?;
    prev.push(&model.kernel(&prev, n)?)
}

/// `W_n^N(f)` for several observables sharing one predictor.
pub fn local_error_fields<M: MeanFieldModel + ?Sized>(
    model: &M,
    traj: &Trajectory<usize>,
    n: usize,
    fs: &[BoundedFunction],
) -> Result<Vec<f64>> {
    let pred = predictor(model, traj, n)?;
    let cloud = traj.cloud(n)?;
    let scale = (traj.particles() as f64).sqrt();
    fs.iter()
        .map(|f| {
            if f.oscillation() == 0.0 {
                return Ok(0.0);
            }
            Ok(scale * (cloud.integrate(f)? - pred.integrate(f)?))
        })
        .collect()
}

pub fn local_error_field<M: MeanFieldModel + ?Sized>(
    model: &M,
    traj: &Trajectory<usize>,
    n: usize,
    f: &BoundedFunction,
) -> Result<f64> {
    Ok(local_error_fields(model, traj, n, std::slice::from_ref(f))?[0])
}

/// Conditional variance of `W_n^N(f)` given generation `n − 1`:
/// `η_{n-1}^N K[(f − K f)²]` with `K = K_{n,η_{n-1}^N}`.
pub fn conditional_variance<M: MeanFieldModel + ?Sized>(
    model: &M,
    traj: &Trajectory<usize>,
    n: usize,
    f: &BoundedFunction,
) -> Result<f64> {
    traj.cloud(n)?;
    if n == 0 {
        return model.initial().variance(f);
    }
    let prev = traj.cloud(n - 1)?.empirical_measure(model.states())?;
    let k = model.kernel(&prev, n)?;
    prev.integrate(&k.conditional_variance(f)?)
}

/// `V_n^N(f)` against a precomputed exact flow.
pub fn fluctuation_fields(
    traj: &Trajectory<usize>,
    n: usize,
    flow: &[ProbabilityVector],
    fs: &[BoundedFunction],
) -> Result<Vec<f64>> {
    let cloud = traj.cloud(n)?;
    let exact = flow.get(n).ok_or_else(|| Error::NoOracle(format!("exact flow has no generation {n}")))?;
    let scale = (traj.particles() as f64).sqrt();
    fs.iter()
        .map(|f| {
            if f.oscillation() == 0.0 {
                return Ok(0.0);
            }
            Ok(scale * (cloud.integrate(f)? - exact.integrate(f)?))
        })
        .collect()
}

pub fn fluctuation_field(
    traj: &Trajectory<usize>,
    n: usize,
    flow: &[ProbabilityVector],
    f: &BoundedFunction,
) -> Result<f64> {
    Ok(fluctuation_fields(traj, n, flow, std::slice::from_ref(f))?[0])
}

pub fn init_gaussian_cloud<R: Rng + ?Sized>(
    model: &GaussianMeanFieldModel,
    particles: usize,
    rng: &mut R,
) -> Result<ParticleCloud<f64>> {
    ParticleCloud::new((0..particles).map(|_| model.initial_sample(rng)).collect(), 0)
}

pub fn gaussian_step<R: Rng + ?Sized>(
    model: &GaussianMeanFieldModel,
    cloud: &ParticleCloud<f64>,
    rng: &mut R,
) -> Result<ParticleCloud<f64>> {
    let next = cloud.generation + 1;
    if next > model.horizon {
        return Err(Error::GenerationOutOfRange {
            generation: next,
            max: model.horizon,
        });
    }
    let b_mean = cloud.mean_of(|x| model.drift_b.eval(x));
    let states = cloud
        .states
        .iter()
        .map(|&x| model.kernel_sample(x, b_mean, rng))
        .collect();
    ParticleCloud::new(states, next)
}

pub fn simulate_gaussian(model: &GaussianMeanFieldModel, config: &SimulationConfig) -> Result<Trajectory<f64>> {
    let mut rng = config.rng();
    let mut clouds = Vec::with_capacity(config.horizon + 1);
    clouds.push(init_gaussian_cloud(model, config.particles, &mut rng)?);
    for n in 0..config.horizon {
        let next = gaussian_step(model, &clouds[n], &mut rng)?;
        clouds.push(next);
    }
    Ok(Trajectory { clouds })
}

/// `W_n^N(f)` for a Gaussian model; `f` must have a closed-form Gaussian
/// integral (polynomial of degree ≤ 2 or interval indicator).
pub fn gaussian_local_error_field(
    model: &GaussianMeanFieldModel,
    traj: &Trajectory<f64>,
    n: usize,
    f: &ScalarFn,
) -> Result<f64> {
    let cloud = traj.cloud(n)?;
    let q = model.noise_variance;
    let predicted = if n == 0 {
        f.gaussian_expectation(model.initial.mean, model.initial.variance)?
    } else {
        let prev = traj.cloud(n - 1)?;
        let b_mean = prev.mean_of(|x| model.drift_b.eval(x));
        let mut total = 0.0;
        for &x in &prev.states {
            total += f.gaussian_expectation(model.drift(x, b_mean), q)?;
        }
        total / prev.size() as f64
    };
    Ok((traj.particles() as f64).sqrt() * (cloud.mean_of(|x| f.eval(x)) - predicted))
}

/// `V_n^N(f)` for a decoupled linear Gaussian model.
pub fn gaussian_fluctuation_field(
    model: &GaussianMeanFieldModel,
    traj: &Trajectory<f64>,
    n: usize,
    f: &ScalarFn,
) -> Result<f64> {
    let moments = model.exact_moments(n)?;
    let exact = f.gaussian_expectation(moments[n].mean, moments[n].variance)?;
    let cloud = traj.cloud(n)?;
    Ok((traj.particles() as f64).sqrt() * (cloud.mean_of(|x| f.eval(x)) - exact))
}

/// Runs `job(r)` for `r in 0..replications`, in parallel, returning results
/// in replication order. `threads = None` uses the machine's parallelism.
pub fn replicate<T, F>(replications: u64, threads: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..replications).into_par_iter().map(&job).collect())
}

/// Particle states as CSV fields.
pub trait CsvState: Copy {
    fn csv_field(self) -> String;
}

impl CsvState for usize {
    fn csv_field(self) -> String {
        self.to_string()
    }
}

impl CsvState for f64 {
    fn csv_field(self) -> String {
        fmt_real(self)
    }
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["replication", "generation", "particle_index", "state"];
pub const STATISTICS_HEADER: [&str; 4] = ["replication", "generation", "statistic", "value"];

/// `replication,generation,particle_index,state` rows.
pub fn write_trajectory_csv<W: Write, S: CsvState>(
    writer: &mut csv::Writer<W>,
    replication: u64,
    traj: &Trajectory<S>,
) -> std::io::Result<()> {
    for cloud in &traj.clouds {
        for (i, &s) in cloud.states.iter().enumerate() {
            writer.write_record([
                replication.to_string(),
                cloud.generation.to_string(),
                i.to_string(),
                s.csv_field(),
            ])?;
        }
    }
    Ok(())
}

/// `replication,generation,statistic,value` rows: occupation frequencies of
/// every state for finite models.
pub fn write_occupation_csv<W: Write>(
    writer: &mut csv::Writer<W>,
    replication: u64,
    states: usize,
    traj: &Trajectory<usize>,
) -> Result<()> {
    for cloud in &traj.clouds {
        let eta = cloud.empirical_measure(states)?;
        for (s, w) in eta.weights().iter().enumerate() {
            writer
                .write_record([
                    replication.to_string(),
                    cloud.generation.to_string(),
                    format!("eta[{s}]"),
                    fmt_real(*w),
                ])?;
        }
    }
    Ok(())
}

/// Same layout for Gaussian clouds: empirical mean and variance.
pub fn write_moments_csv<W: Write>(writer: &mut csv::Writer<W>, replication: u64, traj: &Trajectory<f64>) -> Result<()> {
    for cloud in &traj.clouds {
        let mean = cloud.mean_of(|x| x);
        let var = cloud.mean_of(|x| (x - mean) * (x - mean));
        for (name, v) in [("mean", mean), ("variance", var)] {
            writer
                .write_record([replication.to_string(), cloud.generation.to_string(), name.to_string(), fmt_real(v)])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::FiniteKernel;
    use crate::models::{exact_flow, FeynmanKacModel, GaussianMoments, McKeanGasModel};

    fn pv(w: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(w.to_vec()).unwrap()
    }

    fn bf(v: &[f64]) -> BoundedFunction {
        BoundedFunction::new(v.to_vec()).unwrap()
    }

    fn fk(eta0: &[f64], horizon: usize) -> FeynmanKacModel {
        FeynmanKacModel::homogeneous(
            bf(&[1.0, 2.0]),
            FiniteKernel::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
            0.0,
            pv(eta0),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn dirac_initial_law() {
        let model = fk(&[0.0, 1.0], 1);
        let cloud = init_cloud(&model, 1000, &mut stream_rng(1, 0)).unwrap();
        assert!(cloud.states.iter().all(|&s| s == 1));
    }

    #[test]
    fn uniform_initial_law_frequency() {
        let model = fk(&[0.5, 0.5], 1);
        let n = 100_000;
        let cloud = init_cloud(&model, n, &mut stream_rng(7, 0)).unwrap();
        let frac = cloud.states.iter().filter(|&&s| s == 0).count() as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.005, "{frac}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let model = fk(&[0.8, 0.2], 3);
        let cfg = SimulationConfig::new(500, 3, 42, 5).unwrap();
        assert_eq!(simulate(&model, &cfg).unwrap(), simulate(&model, &cfg).unwrap());
        let other = SimulationConfig::new(500, 3, 42, 6).unwrap();
        assert_ne!(simulate(&model, &cfg).unwrap(), simulate(&model, &other).unwrap());
    }

    #[test]
    fn step_past_horizon_fails() {
        let model = fk(&[0.8, 0.2], 1);
        let cfg = SimulationConfig::new(10, 1, 0, 0).unwrap();
        let traj = simulate(&model, &cfg).unwrap();
        assert!(matches!(
            mean_field_step(&model, &traj.clouds[1], &mut stream_rng(0, 0)),
            Err(Error::GenerationOutOfRange { .. })
        ));
        assert!(SimulationConfig::new(0, 1, 0, 0).is_err());
    }

    #[test]
    fn constant_kernel_ignores_current_states() {
        // ε = 0 with a constant mutation: K(x,·) = M(·) regardless of η^N.
        let target = pv(&[0.2, 0.5, 0.3]);
        let model = FeynmanKacModel::homogeneous(
            bf(&[1.0, 1.0, 1.0]),
            FiniteKernel::constant(3, &target).unwrap(),
            0.0,
            pv(&[1.0, 0.0, 0.0]),
            1,
        )
        .unwrap();
        let a = ParticleCloud::new(vec![0; 50], 0).unwrap();
        let b = ParticleCloud::new(vec![2; 50], 0).unwrap();
        let next_a = mean_field_step(&model, &a, &mut stream_rng(3, 0)).unwrap();
        let next_b = mean_field_step(&model, &b, &mut stream_rng(3, 0)).unwrap();
        assert_eq!(next_a, next_b);
    }

    #[test]
    fn absorbing_two_velocities_cloud() {
        let gas = McKeanGasModel::two_velocities(1.0, 4).unwrap();
        let traj = simulate(&gas, &SimulationConfig::new(200, 4, 9, 0).unwrap()).unwrap();
        assert!(traj.clouds.iter().all(|c| c.states.iter().all(|&s| s == 1)));
    }

    #[test]
    fn genetic_step_frequencies_follow_weights() {
        // ε = 0 and M = Id: new particles are drawn with probability
        // proportional to G(ξ^i).
        let model = FeynmanKacModel::homogeneous(
            bf(&[1.0, 3.0]),
            FiniteKernel::identity(2).unwrap(),
            0.0,
            pv(&[0.5, 0.5]),
            1,
        )
        .unwrap();
        let cloud = ParticleCloud::new((0..200_000).map(|i| i % 2).collect(), 0).unwrap();
        let next = mean_field_step(&model, &cloud, &mut stream_rng(11, 0)).unwrap();
        let frac = next.states.iter().filter(|&&s| s == 1).count() as f64 / 200_000.0;
        // Binomial sd at p = 0.75 is ~0.00097.
        assert!((frac - 0.75).abs() < 0.004, "{frac}");
    }

    #[test]
    fn local_error_field_of_constant_is_zero() {
        let model = fk(&[0.8, 0.2], 2);
        let traj = simulate(&model, &SimulationConfig::new(101, 2, 1, 0).unwrap()).unwrap();
        for n in 0..=2 {
            assert_eq!(local_error_field(&model, &traj, n, &bf(&[3.0, 3.0])).unwrap(), 0.0);
        }
        let flow = exact_flow(&model, 2).unwrap();
        assert_eq!(fluctuation_field(&traj, 2, &flow, &bf(&[-1.0, -1.0])).unwrap(), 0.0);
    }

    #[test]
    fn fluctuation_at_generation_zero_equals_local_error() {
        let model = fk(&[0.8, 0.2], 2);
        let traj = simulate(&model, &SimulationConfig::new(64, 2, 2, 1).unwrap()).unwrap();
        let flow = exact_flow(&model, 2).unwrap();
        let f = bf(&[0.0, 1.0]);
        let w = local_error_field(&model, &traj, 0, &f).unwrap();
        let v = fluctuation_field(&traj, 0, &flow, &f).unwrap();
        assert!((w - v).abs() < 1e-15);
    }

    #[test]
    fn exchangeable_statistics() {
        let model = fk(&[0.8, 0.2], 2);
        let traj = simulate(&model, &SimulationConfig::new(300, 2, 4, 0).unwrap()).unwrap();
        let mut shuffled = traj.clone();
        for c in &mut shuffled.clouds {
            c.states.reverse();
        }
        let f = bf(&[0.0, 1.0]);
        for n in 0..=2 {
            assert_eq!(
                local_error_field(&model, &traj, n, &f).unwrap(),
                local_error_field(&model, &shuffled, n, &f).unwrap()
            );
        }
    }

    #[test]
    fn conditional_variance_matches_kernel_formula() {
        // ε = 0: K rows are Φ(η^N), so the conditional variance is Var_{Φ(η^N)}(f).
        let model = fk(&[0.8, 0.2], 1);
        let traj = simulate(&model, &SimulationConfig::new(50, 1, 5, 0).unwrap()).unwrap();
        let f = bf(&[0.0, 1.0]);
        let eta = traj.clouds[0].empirical_measure(2).unwrap();
        let target = model.phi_step(&eta, 1).unwrap();
        let v = conditional_variance(&model, &traj, 1, &f).unwrap();
        assert!((v - target.get(1) * target.get(0)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_registered_class_only() {
        let model = GaussianMeanFieldModel::new(
            ScalarFn::Linear { slope: 0.5, intercept: 0.0 },
            ScalarFn::Tanh { amplitude: 1.0, scale: 1.0 },
            ScalarFn::Constant { value: 0.4 },
            1.0,
            GaussianMoments { mean: 0.0, variance: 1.0 },
            2,
        )
        .unwrap();
        let traj = simulate_gaussian(&model, &SimulationConfig::new(200, 2, 0, 0).unwrap()).unwrap();
        let sin = ScalarFn::Sin { amplitude: 1.0, frequency: 1.0 };
        assert!(matches!(
            gaussian_local_error_field(&model, &traj, 1, &sin),
            Err(Error::UnsupportedObservable(_))
        ));
        let ind = ScalarFn::Indicator { lo: 0.0, hi: 1.0 };
        assert!(gaussian_local_error_field(&model, &traj, 2, &ind).unwrap().is_finite());
        assert!(matches!(gaussian_fluctuation_field(&model, &traj, 1, &ind), Err(Error::NoOracle(_))));
    }

    #[test]
    fn gaussian_local_error_is_centered() {
        let model = GaussianMeanFieldModel::new(
            ScalarFn::Linear { slope: 0.9, intercept: 0.1 },
            ScalarFn::Tanh { amplitude: 1.0, scale: 2.0 },
            ScalarFn::Constant { value: 0.5 },
            0.5,
            GaussianMoments { mean: 1.0, variance: 0.3 },
            2,
        )
        .unwrap();
        let f = ScalarFn::Quadratic { c0: 0.0, c1: 0.3, c2: 0.1 };
        let reps = 4000;
        let ws = replicate(reps, None, |r| {
            let traj = simulate_gaussian(&model, &SimulationConfig::new(100, 2, 77, r)?)?;
            gaussian_local_error_field(&model, &traj, 2, &f)
        })
        .unwrap();
        let mean = ws.iter().sum::<f64>() / reps as f64;
        let sd = (ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / reps as f64).sqrt();
        assert!(mean.abs() < 4.0 * sd / (reps as f64).sqrt(), "{mean} sd {sd}");
    }

    #[test]
    fn trajectory_csv_layout() {
        let model = McKeanGasModel::two_velocities(0.3, 0).unwrap();
        let traj = simulate(&model, &SimulationConfig::new(1, 0, 0, 0).unwrap()).unwrap();
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(TRAJECTORY_HEADER).unwrap();
        write_trajectory_csv(&mut w, 0, &traj).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1] == "0,0,0,0" || lines[1] == "0,0,0,1");
    }
}
