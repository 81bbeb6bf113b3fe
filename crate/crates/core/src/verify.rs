//! Replicated Monte Carlo checks of certificate validity, CLT variances,
//! local error field covariances and Khintchine moment bounds.
//!
//! All checks draw from one set of per-replication samples; reductions run
//! sequentially in replication order, so reports are bit-reproducible from
//! the master seed whatever the thread count.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{certificate_levels, fk_finite_horizon_params, CertificateLevels, ConcentrationParams};
use crate::engine::{fluctuation_fields, local_error_fields, replicate, simulate, stream_rng, SimulationConfig};
use crate::error::{Error, Result};
use crate::measure::{BoundedFunction, Integrate, ProbabilityVector};
use crate::models::{exact_flow, FeynmanKacModel, MeanFieldModel};
use crate::report::fmt_real;

/// Pass thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Exceedance passes iff `freq ≤ e^{−x} + k·SE`.
    pub exceedance_se: f64,
    /// Allowed `|ratio − 1|` between empirical and asymptotic variance.
    pub variance_rel_tol: f64,
    /// Same, against the closed-form generation-0 variance.
    pub initial_variance_rel_tol: f64,
    /// Covariance entries pass within this many standard errors.
    pub covariance_se: f64,
    /// Moments pass iff `emp ≤ bound·(1 + k·relSE)`.
    pub khintchine_rel_se: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            exceedance_se: 3.0,
            variance_rel_tol: 0.1,
            initial_variance_rel_tol: 0.05,
            covariance_se: 4.0,
            khintchine_rel_se: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub f: BoundedFunction,
}

/// Indicator of every state plus one seeded random `±½`-valued function.
pub fn default_test_functions(states: usize, master_seed: u64) -> Result<Vec<TestFunction>> {
    let mut out = (0..states)
        .map(|s| {
            Ok(TestFunction {
                id: format!("indicator_{s}"),
                f: BoundedFunction::indicator(states, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = stream_rng(master_seed, u64::MAX);
    let signs = (0..states).map(|_| if rng.gen::<bool>() { 0.5 } else { -0.5 }).collect();
    out.push(TestFunction {
        id: "random_sign".into(),
        f: BoundedFunction::new(signs)?,
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub particles: usize,
    pub horizon: usize,
    pub replications: u64,
    pub functions: Vec<TestFunction>,
    pub xs: Vec<f64>,
    /// Generations to check; all of `0..=horizon` when empty.
    pub generations: Vec<usize>,
    pub master_seed: u64,
    /// Worker threads; `None` uses the machine's parallelism.
    pub threads: Option<usize>,
    /// Local variance bound used to build certificate parameters.
    pub sigma_sq: f64,
    pub thresholds: Thresholds,
}

impl ExperimentSpec {
    pub fn new(particles: usize, horizon: usize, replications: u64, functions: Vec<TestFunction>, master_seed: u64) -> Self {
        Self {
            particles,
            horizon,
            replications,
            functions,
            xs: vec![0.5, 1.0, 2.0, 3.0],
            generations: vec![],
            master_seed,
            threads: None,
            sigma_sq: 0.25,
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self, states: usize) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParams("particle count N must be >= 1".into()));
        }
        if self.replications < 2 {
            return Err(Error::InvalidParams("need at least 2 replications".into()));
        }
        for tf in &self.functions {
            if tf.f.len() != states {
                return Err(Error::DimensionMismatch {
                    expected: states,
                    found: tf.f.len(),
                });
            }
            if tf.f.oscillation() > 1.0 + 1e-12 {
                return Err(Error::InvalidParams(format!("test function {} has oscillation > 1", tf.id)));
            }
        }
        if let Some(&n) = self.generations.iter().find(|&&n| n > self.horizon) {
            return Err(Error::GenerationOutOfRange {
                generation: n,
                max: self.horizon,
            });
        }
        if self.xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParams("x grid must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn checked_generations(&self) -> Vec<usize> {
        if self.generations.is_empty() {
            (0..=self.horizon).collect()
        } else {
            self.generations.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub check: String,
    pub generation: usize,
    pub function_id: String,
    pub x_or_m: Option<f64>,
    pub empirical: f64,
    pub bound: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: [&str; 8] = [
    "check",
    "generation",
    "function_id",
    "x_or_m",
    "empirical",
    "bound",
    "std_error",
    "pass",
];

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn merge(mut self, other: ExperimentReport) -> Self {
        self.rows.extend(other.rows);
        self
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.check.clone(),
                r.generation.to_string(),
                r.function_id.clone(),
                r.x_or_m.map(fmt_real).unwrap_or_default(),
                fmt_real(r.empirical),
                fmt_real(r.bound),
                fmt_real(r.std_error),
                r.pass.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

/// `W_n^N(f)` and `V_n^N(f)` for every generation and test function, one
/// entry per replication: `w[rep][n][f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub w: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<Vec<f64>>>,
    pub flow: Vec<ProbabilityVector>,
}

pub fn collect_samples<M: MeanFieldModel + ?Sized>(model: &M, spec: &ExperimentSpec) -> Result<Samples> {
    spec.validate(model.states())?;
    let flow = exact_flow(model, spec.horizon)?;
    let fs: Vec<BoundedFunction> = spec.functions.iter().map(|t| t.f.clone()).collect();
    let per_rep = replicate(spec.replications, spec.threads, |r| {
        let cfg = SimulationConfig::new(spec.particles, spec.horizon, spec.master_seed, r)?;
        let traj = simulate(model, &cfg)?;
        let mut w = Vec::with_capacity(spec.horizon + 1);
        let mut v = Vec::with_capacity(spec.horizon + 1);
        for n in 0..=spec.horizon {
            w.push(local_error_fields(model, &traj, n, &fs)?);
            v.push(fluctuation_fields(&traj, n, &flow, &fs)?);
        }
        Ok((w, v))
    })?;
    let (w, v) = per_rep.into_iter().unzip();
    Ok(Samples { w, v, flow })
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for x in xs {
        sum += x;
        count += 1;
    }
    (sum / count as f64, count)
}

/// Mean and standard error of the mean.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let (m, r) = mean(xs.iter().cloned());
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (r as f64 - 1.0);
    (m, (var / r as f64).sqrt())
}

/// Fraction of replications where `V_n^N(f)` exceeds each certificate.
pub fn exceedance_rows(samples: &Samples, spec: &ExperimentSpec, params: &[ConcentrationParams]) -> Result<Vec<ReportRow>> {
    let r = samples.v.len() as f64;
    let mut rows = vec![];
    for n in spec.checked_generations() {
        let p = params.get(n).ok_or_else(|| Error::InvalidParams(format!("no certificate parameters for generation {n}")))?;
        for &x in &spec.xs {
            let levels = certificate_levels(p, x, spec.particles)?.as_array();
            let target = (-x).exp();
            for (fi, tf) in spec.functions.iter().enumerate() {
                for (ci, name) in CertificateLevels::NAMES.iter().enumerate() {
                    let hits = samples.v.iter().filter(|rep| rep[n][fi] > levels[ci]).count();
                    let freq = hits as f64 / r;
                    let se = (freq * (1.0 - freq) / r).sqrt();
                    rows.push(ReportRow {
                        check: format!("exceedance_{name}"),
                        generation: n,
                        function_id: tf.id.clone(),
                        x_or_m: Some(x),
                        empirical: freq,
                        bound: target,
                        std_error: se,
                        pass: freq <= target + spec.thresholds.exceedance_se * se,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Tests each certificate event of the concentration theorem.
pub fn exceedance_experiment<M: MeanFieldModel + ?Sized>(
    model: &M,
    spec: &ExperimentSpec,
    params: &[ConcentrationParams],
) -> Result<ExperimentReport> {
    let samples = collect_samples(model, spec)?;
    Ok(ExperimentReport {
        rows: exceedance_rows(&samples, spec, params)?,
    })
}

/// Certificate parameters for generations `0..=horizon` from the exact
/// semigroup of a Feynman–Kac model.
pub fn fk_certificate_params(model: &FeynmanKacModel, horizon: usize, sigma_sq: f64) -> Result<Vec<ConcentrationParams>> {
    (0..=horizon).map(|n| fk_finite_horizon_params(model, n, sigma_sq)).collect()
}

/// Limiting variance of `W_p(h)` along the exact flow:
/// `η_{p−1} K[(h − K h)²]` with `K = K_{p,η_{p−1}}`, or `Var_{η₀}(h)` at `p = 0`.
pub fn wfield_variance<M: MeanFieldModel + ?Sized>(
    model: &M,
    flow: &[ProbabilityVector],
    p: usize,
    h: &BoundedFunction,
) -> Result<f64> {
    if p == 0 {
        return model.initial().variance(h);
    }
    let prev = &flow[p - 1];
    let k = model.kernel(prev, p)?;
    prev.integrate(&k.conditional_variance(h)?)
}

/// Limiting variance of `V_n(f)`: `Σ_p E(W_p[D_{η_p}Φ_{p,n}(f)]²)`.
pub fn fk_asymptotic_variance(model: &FeynmanKacModel, n: usize, f: &BoundedFunction) -> Result<f64> {
    if f.oscillation() == 0.0 {
        return Ok(0.0);
    }
    let flow = exact_flow(model, n)?;
    let mut total = 0.0;
    for p in 0..=n {
        let h = model.first_order_operator(&flow[p], p, n, f)?;
        total += wfield_variance(model, &flow, p, &h)?;
    }
    Ok(total)
}

/// Sample variance and an estimate of its standard error.
fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let (m, r) = mean(xs.iter().cloned());
    let rf = r as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / rf;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / rf;
    (m2 * rf / (rf - 1.0), ((m4 - m2 * m2).max(0.0) / rf).sqrt())
}

fn ratio_pass(empirical: f64, exact: f64, tol: f64) -> bool {
    if exact == 0.0 {
        empirical == 0.0
    } else {
        (empirical / exact - 1.0).abs() <= tol
    }
}

pub fn clt_rows(model: &FeynmanKacModel, samples: &Samples, spec: &ExperimentSpec) -> Result<Vec<ReportRow>> {
    let mut rows = vec![];
    for n in spec.checked_generations() {
        for (fi, tf) in spec.functions.iter().enumerate() {
            let vs: Vec<f64> = samples.v.iter().map(|rep| rep[n][fi]).collect();
            let (var, se) = sample_variance(&vs);
            let exact = fk_asymptotic_variance(model, n, &tf.f)?;
            rows.push(ReportRow {
                check: "clt_variance".into(),
                generation: n,
                function_id: tf.id.clone(),
                x_or_m: None,
                empirical: var,
                bound: exact,
                std_error: se,
                pass: ratio_pass(var, exact, spec.thresholds.variance_rel_tol),
            });
            if n == 0 {
                let closed = model.initial().variance(&tf.f)?;
                rows.push(ReportRow {
                    check: "clt_variance_initial".into(),
                    generation: 0,
                    function_id: tf.id.clone(),
                    x_or_m: None,
                    empirical: var,
                    bound: closed,
                    std_error: se,
                    pass: ratio_pass(var, closed, spec.thresholds.initial_variance_rel_tol),
                });
            }
        }
    }
    Ok(rows)
}

/// Compares the empirical variance of `V_n^N(f)` with its limit.
pub fn clt_variance_check(model: &FeynmanKacModel, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let samples = collect_samples(model, spec)?;
    Ok(ExperimentReport {
        rows: clt_rows(model, &samples, spec)?,
    })
}

/// Entries `E(W_p(f) W_q(f))` for `p ≤ q`: the diagonal against its limit
/// along the exact flow, the rest against 0. The check name records `p`
/// and the row generation records `q`.
pub fn wfield_rows<M: MeanFieldModel + ?Sized>(model: &M, samples: &Samples, spec: &ExperimentSpec) -> Result<Vec<ReportRow>> {
    let gens = spec.checked_generations();
    let k = spec.thresholds.covariance_se;
    let mut rows = vec![];
    for (fi, tf) in spec.functions.iter().enumerate() {
        for (i, &p) in gens.iter().enumerate() {
            for &q in &gens[i..] {
                let prods: Vec<f64> = samples.w.iter().map(|rep| rep[p][fi] * rep[q][fi]).collect();
                let (emp, se) = mean_se(&prods);
                let target = if p == q {
                    wfield_variance(model, &samples.flow, p, &tf.f)?
                } else {
                    0.0
                };
                rows.push(ReportRow {
                    check: format!("wfield_cov_p{p}"),
                    generation: q,
                    function_id: tf.id.clone(),
                    x_or_m: None,
                    empirical: emp,
                    bound: target,
                    std_error: se,
                    pass: (emp - target).abs() <= k * se,
                });
            }
        }
    }
    Ok(rows)
}

pub fn wfield_covariance_check<M: MeanFieldModel + ?Sized>(model: &M, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let samples = collect_samples(model, spec)?;
    Ok(ExperimentReport {
        rows: wfield_rows(model, &samples, spec)?,
    })
}

/// `b(2m)^{2m} = 2^{−m} (2m)! / m!`
pub fn khintchine_moment_bound(m: u32) -> f64 {
    let mut v = 1.0;
    for k in (m + 1)..=(2 * m) {
        v *= k as f64;
    }
    v / 2f64.powi(m as i32)
}

pub fn khintchine_rows(samples: &Samples, spec: &ExperimentSpec) -> Vec<ReportRow> {
    let mut rows = vec![];
    for n in spec.checked_generations() {
        for (fi, tf) in spec.functions.iter().enumerate() {
            for m in 1..=3u32 {
                let powers: Vec<f64> = samples.w.iter().map(|rep| rep[n][fi].powi(2 * m as i32)).collect();
                let (emp, se) = mean_se(&powers);
                let bound = khintchine_moment_bound(m);
                let rel = if emp > 0.0 { se / emp } else { 0.0 };
                rows.push(ReportRow {
                    check: "khintchine".into(),
                    generation: n,
                    function_id: tf.id.clone(),
                    x_or_m: Some(m as f64),
                    empirical: emp,
                    bound,
                    std_error: se,
                    pass: emp <= bound * (1.0 + spec.thresholds.khintchine_rel_se * rel),
                });
            }
        }
    }
    rows
}

pub fn khintchine_check<M: MeanFieldModel + ?Sized>(model: &M, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let samples = collect_samples(model, spec)?;
    Ok(ExperimentReport {
        rows: khintchine_rows(&samples, spec),
    })
}

/// All four checks for a Feynman–Kac model from one set of replications.
pub fn verify_feynman_kac(model: &FeynmanKacModel, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let samples = collect_samples(model, spec)?;
    let params = fk_certificate_params(model, spec.horizon, spec.sigma_sq)?;
    let mut rows = exceedance_rows(&samples, spec, &params)?;
    rows.extend(clt_rows(model, &samples, spec)?);
    rows.extend(wfield_rows(model, &samples, spec)?);
    rows.extend(khintchine_rows(&samples, spec));
    Ok(ExperimentReport { rows })
}

/// Checks for any finite-state model. Exceedance rows need certificate
/// parameters for every generation; they are skipped when `params` is `None`.
pub fn verify_finite<M: MeanFieldModel + ?Sized>(
    model: &M,
    spec: &ExperimentSpec,
    params: Option<&[ConcentrationParams]>,
) -> Result<ExperimentReport> {
    let samples = collect_samples(model, spec)?;
    let mut rows = match params {
        Some(p) => exceedance_rows(&samples, spec, p)?,
        None => vec![],
    };
    rows.extend(wfield_rows(model, &samples, spec)?);
    rows.extend(khintchine_rows(&samples, spec));
    Ok(ExperimentReport { rows })
}
