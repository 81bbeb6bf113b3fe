//! `mfps`: simulate mean field particle models, evaluate concentration
//! certificates, tabulate Legendre inverses and run verification reports.
//!
//! Every run resolves a JSON config file (optional) and command line flags
//! into one configuration, writes its outputs to the output directory and
//! records the resolved configuration in `manifest.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use meanfield::bounds::{certificate_levels, fk_uniform_params, ConcentrationParams, MixingParams};
use meanfield::convex::{inverse, ConvexFunctionId};
use meanfield::engine::{
    replicate, simulate, simulate_gaussian, write_moments_csv, write_occupation_csv, write_trajectory_csv,
    SimulationConfig, STATISTICS_HEADER, TRAJECTORY_HEADER,
};
use meanfield::models::{Model, ModelFile};
use meanfield::report::fmt_real;
use meanfield::verify::{default_test_functions, verify_feynman_kac, verify_finite, ExperimentSpec, Thresholds};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "MFC_SEED";

const DEFAULT_PARTICLES: usize = 1000;
const DEFAULT_SIM_REPLICATIONS: u64 = 1;
const DEFAULT_VERIFY_REPLICATIONS: u64 = 1000;
const DEFAULT_XS: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

#[derive(Debug, Parser)]
#[command(name = "mfps", version, about = "Mean field particle simulation and concentration certificates")]
pub struct Cli {
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving all outputs.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the particle system and dump trajectories.
    Simulate(Overrides),
    /// Evaluate certificate levels over an (x, N) grid.
    Certify(Overrides),
    /// Tabulate inverses of the Legendre transforms.
    Legendre(Overrides),
    /// Run the Monte Carlo verification report.
    Verify(Overrides),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Certify(_) => "certify",
            Command::Legendre(_) => "legendre",
            Command::Verify(_) => "verify",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Simulate(o) | Command::Certify(o) | Command::Legendre(o) | Command::Verify(o) => o,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Model definition JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Certificate parameter JSON.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Particle count N.
    #[arg(long = "particles", short = 'n')]
    pub particles: Option<usize>,
    /// Replication count R.
    #[arg(long, short = 'r')]
    pub replications: Option<u64>,
    /// Time horizon (overrides the model file).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated deviation levels x.
    #[arg(long, value_delimiter = ',')]
    pub xs: Option<Vec<f64>>,
    /// Comma-separated particle counts for `certify`.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model_file: Option<PathBuf>,
    pub params_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub particles: Option<usize>,
    pub replications: Option<u64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub xs: Option<Vec<f64>>,
    pub ns: Option<Vec<usize>>,
    pub threads: Option<usize>,
    pub sigma_sq: Option<f64>,
    pub generations: Option<Vec<usize>>,
    pub thresholds: Option<Thresholds>,
    /// Per-generation certificate parameters for non-Feynman–Kac models.
    pub certificate_params: Option<Vec<ConcentrationParams>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.model_file, &mut cfg.params_file, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved run configuration, echoed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub subcommand: String,
    pub model_file: Option<PathBuf>,
    pub params_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub particles: usize,
    pub replications: u64,
    pub horizon: Option<usize>,
    pub seed: u64,
    pub seed_source: String,
    pub xs: Vec<f64>,
    pub ns: Vec<usize>,
    pub threads: Option<usize>,
    pub sigma_sq: f64,
    pub generations: Vec<usize>,
    pub thresholds: Thresholds,
    pub certificate_params: Option<Vec<ConcentrationParams>>,
}

/// Flag, then `MFC_SEED`, then config file, then 0.
fn resolve_seed(flag: Option<u64>, env: Option<String>, file: Option<u64>) -> Result<(u64, &'static str)> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    if let Some(text) = env {
        let s = text
            .trim()
            .parse()
            .map_err(|_| anyhow!("{SEED_ENV}={text:?} is not an unsigned 64-bit integer"))?;
        return Ok((s, "env"));
    }
    match file {
        Some(s) => Ok((s, "config")),
        None => Ok((0, "default")),
    }
}

pub fn resolve(cli: &Cli, env_seed: Option<String>) -> Result<ResolvedConfig> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let o = cli.command.overrides();
    let sub = cli.command.name();
    let (seed, seed_source) = resolve_seed(o.seed, env_seed, file.seed)?;
    let default_reps = if sub == "verify" {
        DEFAULT_VERIFY_REPLICATIONS
    } else {
        DEFAULT_SIM_REPLICATIONS
    };
    let particles = o.particles.or(file.particles).unwrap_or(DEFAULT_PARTICLES);
    let cfg = ResolvedConfig {
        subcommand: sub.to_string(),
        model_file: o.model.clone().or(file.model_file),
        params_file: o.params.clone().or(file.params_file),
        output_dir: cli.output_dir.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        particles,
        replications: o.replications.or(file.replications).unwrap_or(default_reps),
        horizon: o.horizon.or(file.horizon),
        seed,
        seed_source: seed_source.to_string(),
        xs: o.xs.clone().or(file.xs).unwrap_or_else(|| DEFAULT_XS.to_vec()),
        ns: o.ns.clone().or(file.ns).unwrap_or_else(|| vec![particles]),
        threads: cli.threads.or(file.threads),
        sigma_sq: file.sigma_sq.unwrap_or(0.25),
        generations: file.generations.unwrap_or_default(),
        thresholds: file.thresholds.unwrap_or_default(),
        certificate_params: file.certificate_params,
    };
    if cfg.particles == 0 || cfg.ns.contains(&0) {
        bail!("particle counts must be >= 1");
    }
    if cfg.replications == 0 {
        bail!("replications must be >= 1");
    }
    if cfg.xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        bail!("x grid must be finite and nonnegative");
    }
    if cfg.threads == Some(0) {
        bail!("threads must be >= 1");
    }
    Ok(cfg)
}

/// Certificate parameter file: either the parameters themselves or mixing
/// constants of a time-homogeneous Feynman–Kac model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsFile {
    Direct {
        r: f64,
        sigma_bar_sq: f64,
        beta_sq: f64,
        b_star: f64,
    },
    Mixing {
        mixing: MixingParams,
        sigma_sq: f64,
    },
}

impl ParamsFile {
    pub fn resolve(&self) -> Result<ConcentrationParams> {
        Ok(match *self {
            ParamsFile::Direct {
                r,
                sigma_bar_sq,
                beta_sq,
                b_star,
            } => ConcentrationParams::new(r, sigma_bar_sq, beta_sq, b_star)?,
            ParamsFile::Mixing { mixing, sigma_sq } => fk_uniform_params(&mixing, sigma_sq, 0)?.params,
        })
    }
}

/// How a run ended, short of an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    schema_version: u32,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool_version: &'static str,
    created_unix_seconds: u64,
    seed: u64,
    config: &'a ResolvedConfig,
    outputs: Vec<OutputEntry>,
    outcome: &'static str,
}

fn load_model(cfg: &ResolvedConfig) -> Result<Model> {
    let path = cfg.model_file.as_ref().ok_or_else(|| anyhow!("{} needs a model file (--model)", cfg.subcommand))?;
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let mut file = ModelFile::from_json(&text).with_context(|| format!("parsing model {}", path.display()))?;
    if let Some(h) = cfg.horizon {
        file = file.with_horizon(h);
    }
    Ok(file.build()?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn run_simulate(cfg: &ResolvedConfig, dir: &Path) -> Result<Vec<String>> {
    let model = load_model(cfg)?;
    let horizon = model.horizon();
    let mut traj_out = csv_writer(&dir.join("trajectory.csv"))?;
    let mut stats_out = csv_writer(&dir.join("statistics.csv"))?;
    traj_out.write_record(TRAJECTORY_HEADER)?;
    stats_out.write_record(STATISTICS_HEADER)?;
    let config = |r| SimulationConfig::new(cfg.particles, horizon, cfg.seed, r);
    match &model {
        Model::Gaussian(g) => {
            let trajs = replicate(cfg.replications, cfg.threads, |r| simulate_gaussian(g, &config(r)?))?;
            for (r, t) in trajs.iter().enumerate() {
                write_trajectory_csv(&mut traj_out, r as u64, t)?;
                write_moments_csv(&mut stats_out, r as u64, t)?;
            }
        }
        _ => {
            let finite = model.as_finite().expect("finite-state model");
            let trajs = replicate(cfg.replications, cfg.threads, |r| simulate(finite, &config(r)?))?;
            for (r, t) in trajs.iter().enumerate() {
                write_trajectory_csv(&mut traj_out, r as u64, t)?;
                write_occupation_csv(&mut stats_out, r as u64, finite.states(), t)?;
            }
        }
    }
    traj_out.flush()?;
    stats_out.flush()?;
    Ok(vec!["trajectory.csv".into(), "statistics.csv".into()])
}

pub const CERTIFICATE_HEADER: [&str; 6] = ["x", "N", "bennett", "hoeffding", "bernstein_rate1", "bernstein_rate2"];

fn run_certify(cfg: &ResolvedConfig, dir: &Path) -> Result<Vec<String>> {
    let path = cfg.params_file.as_ref().ok_or_else(|| anyhow!("certify needs a params file (--params)"))?;
    let text = fs::read_to_string(path).with_context(|| format!("reading params {}", path.display()))?;
    let file: ParamsFile = serde_json::from_str(&text).with_context(|| format!("parsing params {}", path.display()))?;
    let params = file.resolve()?;
    let mut out = csv_writer(&dir.join("certificates.csv"))?;
    out.write_record(CERTIFICATE_HEADER)?;
    for &n in &cfg.ns {
        for &x in &cfg.xs {
            let c = certificate_levels(&params, x, n)?;
            out.write_record([
                fmt_real(x),
                n.to_string(),
                fmt_real(c.bennett),
                fmt_real(c.hoeffding),
                fmt_real(c.bernstein1),
                fmt_real(c.bernstein2),
            ])?;
        }
    }
    out.flush()?;
    Ok(vec!["certificates.csv".into()])
}

pub const LEGENDRE_HEADER: [&str; 7] = ["function", "x", "value", "lower", "upper", "iterations", "converged"];

fn run_legendre(cfg: &ResolvedConfig, dir: &Path) -> Result<Vec<String>> {
    let mut out = csv_writer(&dir.join("legendre.csv"))?;
    out.write_record(LEGENDRE_HEADER)?;
    for id in ConvexFunctionId::ALL {
        for &x in &cfg.xs {
            let inv = inverse(id, x)?;
            out.write_record([
                id.name().to_string(),
                fmt_real(x),
                fmt_real(inv.value),
                fmt_real(inv.lower),
                fmt_real(inv.upper),
                inv.iterations.to_string(),
                inv.converged.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(vec!["legendre.csv".into()])
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    schema_version: u32,
    passed: bool,
    spec: &'a ExperimentSpec,
    rows: &'a [meanfield::verify::ReportRow],
}

fn run_verify(cfg: &ResolvedConfig, dir: &Path) -> Result<(Vec<String>, Outcome)> {
    let model = load_model(cfg)?;
    let finite = model
        .as_finite()
        .ok_or_else(|| anyhow!("verify needs a finite-state model with an exact flow"))?;
    let functions = default_test_functions(finite.states(), cfg.seed)?;
    let mut spec = ExperimentSpec::new(cfg.particles, model.horizon(), cfg.replications, functions, cfg.seed);
    spec.xs = cfg.xs.clone();
    spec.generations = cfg.generations.clone();
    spec.threads = cfg.threads;
    spec.sigma_sq = cfg.sigma_sq;
    spec.thresholds = cfg.thresholds;
    let report = match &model {
        Model::FeynmanKac(fk) => verify_feynman_kac(fk, &spec)?,
        _ => verify_finite(finite, &spec, cfg.certificate_params.as_deref())?,
    };
    let json = serde_json::to_string_pretty(&ReportFile {
        schema_version: SCHEMA_VERSION,
        passed: report.passed(),
        spec: &spec,
        rows: &report.rows,
    })?;
    fs::write(dir.join("report.json"), json + "\n")?;
    report.write_csv(BufWriter::new(File::create(dir.join("report.csv"))?))?;
    for row in report.failures() {
        eprintln!(
            "FAIL {} generation={} f={} x_or_m={:?} empirical={} bound={}",
            row.check, row.generation, row.function_id, row.x_or_m, row.empirical, row.bound
        );
    }
    let outcome = if report.passed() {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    };
    Ok((vec!["report.json".into(), "report.csv".into()], outcome))
}

/// Executes one CLI invocation.
pub fn run(cli: &Cli, env_seed: Option<String>) -> Result<Outcome> {
    let cfg = resolve(cli, env_seed)?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (files, outcome) = match cli.command {
        Command::Simulate(_) => (run_simulate(&cfg, &dir)?, Outcome::Success),
        Command::Certify(_) => (run_certify(&cfg, &dir)?, Outcome::Success),
        Command::Legendre(_) => (run_legendre(&cfg, &dir)?, Outcome::Success),
        Command::Verify(_) => run_verify(&cfg, &dir)?,
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        created_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        seed: cfg.seed,
        config: &cfg,
        outputs: files
            .into_iter()
            .map(|file| OutputEntry {
                file,
                schema_version: SCHEMA_VERSION,
            })
            .collect(),
        outcome: match outcome {
            Outcome::Success => "success",
            Outcome::ChecksFailed => "checks_failed",
        },
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(outcome)
}
