//! Benchmark functions, noisy observations, regret metrics and the
//! multi-agent experiment loop.
//!
//! Every benchmark is negated so that the task is maximization. The GP works
//! on the unit cube with standardized outputs; the affine map is fixed per
//! function (mean/std over a 64-per-axis grid) and regrets are always reported
//! in the function's own units using noiseless values at the queried points.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{find_x_ucb, gmes_select_batch, GmesConfig, QueryBatch};
use crate::baselines::{bucb_select, thompson_select, ucb_pe_select, BaselineConfig};
use crate::error::{Error, Result};
use crate::gp::{Dataset, DomainBox, GpPosterior, KernelSpec};
use crate::seed;

const BIRD_F_STAR: f64 = 106.764_536_749_264_74;
const BIRD_X_STAR: [[f64; 2]; 2] = [
    [4.701_043_133_701_57, 3.152_938_499_984_043_3],
    [-1.582_142_163_079_009, -3.130_246_802_468_679_6],
];

const INIT_STREAM: u64 = 0x696e_6974;
const NOISE_STREAM: u64 = 0x6e6f_6973_65;
const INFER_STREAM: u64 = 0x696e_6665_72;
const ALGO_STREAM: u64 = 0x616c_676f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Ackley,
    Bird,
    Rosenbrock,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::Ackley, TestFunction::Bird, TestFunction::Rosenbrock];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Ackley => "ackley",
            TestFunction::Bird => "bird",
            TestFunction::Rosenbrock => "rosenbrock",
        }
    }

    pub fn domain(self) -> DomainBox {
        let (lo, hi) = match self {
            TestFunction::Ackley => (-5.0, 5.0),
            TestFunction::Bird => (-2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI),
            TestFunction::Rosenbrock => (-2.0, 2.0),
        };
        DomainBox::new(vec![lo; 2], vec![hi; 2]).expect("static box")
    }

    pub fn f_star(self) -> f64 {
        match self {
            TestFunction::Ackley | TestFunction::Rosenbrock => 0.0,
            TestFunction::Bird => BIRD_F_STAR,
        }
    }

    pub fn x_star_set(self) -> Vec<Vec<f64>> {
        match self {
            TestFunction::Ackley => vec![vec![0.0, 0.0]],
            TestFunction::Rosenbrock => vec![vec![1.0, 1.0]],
            TestFunction::Bird => BIRD_X_STAR.iter().map(|p| p.to_vec()).collect(),
        }
    }

    pub fn eval(self, x: &[f64]) -> Result<f64> {
        self.domain().check(x)?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        match self {
            TestFunction::Ackley => {
                use std::f64::consts::{E, TAU};
                let r = (0.5 * (a * a + b * b)).sqrt();
                let c = 0.5 * ((TAU * a).cos() + (TAU * b).cos());
                -(-20.0 * (-0.2 * r).exp() - c.exp() + E + 20.0)
            }
            TestFunction::Bird => {
                let v = a.sin() * (1.0 - b.cos()).powi(2).exp()
                    + b.cos() * (1.0 - a.sin()).powi(2).exp()
                    + (a - b).powi(2);
                -v
            }
            TestFunction::Rosenbrock => -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)),
        }
    }

    /// `(offset, scale)` such that `(f − offset)/scale` has zero mean and unit
    /// variance over a regular 64×64 grid of the domain.
    pub fn output_affine(self) -> (f64, f64) {
        let vals: Vec<f64> = self.domain().grid(64).iter().map(|p| self.eval_unchecked(p)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown function `{s}` (valid: ackley, bird, rosenbrock)"))
    }
}

/// Additive Gaussian observation noise from a seeded stream.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    sigma0: f64,
    rng: ChaCha8Rng,
}

impl ObservationModel {
    pub fn new(sigma0: f64, seed: u64) -> Result<Self> {
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise std must be >= 0 (got {sigma0})")));
        }
        Ok(ObservationModel {
            sigma0,
            rng: seed::rng(seed, &[NOISE_STREAM]),
        })
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn noise(&mut self) -> f64 {
        if self.sigma0 == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.sigma0).expect("valid std").sample(&mut self.rng)
    }
}

pub fn observe(f: TestFunction, x: &[f64], obs: &mut ObservationModel) -> Result<f64> {
    Ok(f.eval(x)? + obs.noise())
}

/// Running instant and cumulative regret.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretAccumulator {
    f_star: f64,
    best: f64,
    cumulative: f64,
}

impl RegretAccumulator {
    pub fn new(f_star: f64) -> Self {
        RegretAccumulator {
            f_star,
            best: f64::NEG_INFINITY,
            cumulative: 0.0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Folds the true values of a new batch in and returns `(R_t, R̄_t)`.
    pub fn update(&mut self, true_values: &[f64]) -> (f64, f64) {
        for v in true_values {
            self.best = self.best.max(*v);
        }
        let instant = (self.f_star - self.best).max(0.0);
        self.cumulative += instant;
        (instant, self.cumulative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub iter: usize,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
    pub best_value: f64,
    pub inferred_x: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub records: Vec<RegretRecord>,
    pub output_offset: f64,
    pub output_scale: f64,
}

impl RegretTrace {
    pub fn csv_header(dim: usize) -> String {
        let mut h = String::from("iter,instant_regret,cumulative_regret,best_value");
        for j in 0..dim {
            let _ = write!(h, ",inferred_x{j}");
        }
        h.push_str(",wall_ms");
        h
    }

    pub fn to_csv(&self) -> String {
        let dim = self.records.first().map_or(0, |r| r.inferred_x.len());
        let mut out = Self::csv_header(dim);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{}", r.iter, r.instant_regret, r.cumulative_regret, r.best_value);
            for x in &r.inferred_x {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{}", r.wall_ms);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gmes,
    UcbPe,
    Bucb,
    Thompson,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Gmes, Algorithm::UcbPe, Algorithm::Bucb, Algorithm::Thompson];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gmes => "gmes",
            Algorithm::UcbPe => "ucb_pe",
            Algorithm::Bucb => "bucb",
            Algorithm::Thompson => "thompson",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (valid: gmes, ucb_pe, bucb, thompson)"))
    }
}

/// Kernel hyperparameters in normalized (unit-cube, standardized) units.
/// The default length scale is 0.15 of the box side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            length_scale: 0.15,
            signal_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub function: TestFunction,
    pub agents: usize,
    pub iterations: usize,
    pub kernel: KernelParams,
    /// Observation-noise std in the function's own units.
    pub noise_std: f64,
    pub gmes: GmesConfig,
    pub baseline: BaselineConfig,
    /// Record wall-clock time per iteration (makes traces non-reproducible).
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, function: TestFunction) -> Self {
        ExperimentConfig {
            algorithm,
            function,
            agents: 5,
            iterations: 150,
            kernel: KernelParams::default(),
            noise_std: 0.1,
            gmes: GmesConfig::default(),
            baseline: BaselineConfig::default(),
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.agents == 0 {
            problems.push("agents must be >= 1".into());
        }
        if self.iterations == 0 {
            problems.push("iterations must be >= 1".into());
        }
        if !(self.noise_std >= 0.0) {
            problems.push(format!("noise_std must be >= 0 (got {})", self.noise_std));
        }
        if !(self.kernel.length_scale > 0.0) {
            problems.push(format!("kernel.length_scale must be > 0 (got {})", self.kernel.length_scale));
        }
        if !(self.kernel.signal_variance > 0.0) {
            problems.push(format!(
                "kernel.signal_variance must be > 0 (got {})",
                self.kernel.signal_variance
            ));
        }
        problems.extend(self.gmes.validate());
        problems.extend(self.baseline.validate());
        problems
    }

    /// Kernel in normalized units; the noise std is divided by the output scale.
    pub fn kernel_spec(&self, output_scale: f64) -> Result<KernelSpec> {
        let s = self.noise_std / output_scale;
        KernelSpec::new(self.kernel.length_scale, self.kernel.signal_variance, s * s)
    }
}

/// A finished run: the regret trace plus every published batch in the
/// function's own coordinates (batch 0 is the random initialization).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub trace: RegretTrace,
    pub batches: Vec<QueryBatch>,
    pub dataset_sizes: Vec<usize>,
}

fn select(cfg: &ExperimentConfig, gp: &GpPosterior, t: usize, unit: &DomainBox, run_seed: u64) -> Result<QueryBatch> {
    let algo_seed = seed::derive(run_seed, &[ALGO_STREAM]);
    let m = cfg.agents;
    match cfg.algorithm {
        Algorithm::Gmes => {
            let gcfg = GmesConfig {
                seed: seed::derive(algo_seed, &[cfg.gmes.seed]),
                ..cfg.gmes.clone()
            };
            Ok(gmes_select_batch(gp, t, unit, m, &gcfg)?.0)
        }
        other => {
            let bcfg = BaselineConfig {
                seed: seed::derive(algo_seed, &[cfg.baseline.seed]),
                ..cfg.baseline.clone()
            };
            match other {
                Algorithm::UcbPe => ucb_pe_select(gp, t, unit, m, &bcfg),
                Algorithm::Bucb => bucb_select(gp, t, unit, m, &bcfg),
                _ => thompson_select(gp, t, unit, m, &bcfg),
            }
        }
    }
}

/// Runs the multi-agent loop: observe the current batch, extend the
/// posterior, record regret and the inferred maximizer, select the next batch.
///
/// Record `t` (1-based) covers batches `0..t`, so `|D_t| = m·t`; the regret
/// of the random initial batch is the first record.
pub fn run_experiment(cfg: &ExperimentConfig, run_seed: u64) -> Result<ExperimentOutcome> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems.join("; ")));
    }
    let f = cfg.function;
    let domain = f.domain();
    let d = domain.dim();
    let unit = DomainBox::unit(d);
    let (offset, scale) = f.output_affine();
    let kernel = cfg.kernel_spec(scale)?;
    let mut obs = ObservationModel::new(cfg.noise_std, run_seed)?;
    let mut acc = RegretAccumulator::new(f.f_star());
    let mut gp = GpPosterior::fit(kernel, Dataset::empty())?;

    let mut init_rng = seed::rng(run_seed, &[INIT_STREAM]);
    let mut batch_unit: Vec<Vec<f64>> = (0..cfg.agents).map(|_| unit.sample(&mut init_rng)).collect();
    let infer_cfg = GmesConfig {
        restarts: cfg.gmes.restarts,
        ucb_iters: cfg.gmes.ucb_iters,
        ..GmesConfig::default()
    };

    let mut records = Vec::with_capacity(cfg.iterations);
    let mut batches = Vec::with_capacity(cfg.iterations);
    let mut sizes = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let started = Instant::now();
        let mut step = || -> Result<(GpPosterior, RegretRecord, Option<Vec<Vec<f64>>>)> {
            let xs: Vec<Vec<f64>> = batch_unit.iter().map(|u| domain.from_unit(u)).collect();
            let mut truth = Vec::with_capacity(xs.len());
            let mut ys = Vec::with_capacity(xs.len());
            for x in &xs {
                let v = f.eval(x)?;
                truth.push(v);
                ys.push((v + obs.noise() - offset) / scale);
            }
            let next_gp = gp.extend(&batch_unit, &ys)?;
            let (instant, cumulative) = acc.update(&truth);
            let infer = GmesConfig {
                seed: seed::derive(run_seed, &[INFER_STREAM, t as u64]),
                ..infer_cfg.clone()
            };
            let inferred = domain.from_unit(&find_x_ucb(&next_gp, 0.0, &unit, &infer)?);
            let next = if t < cfg.iterations {
                Some(select(cfg, &next_gp, t, &unit, run_seed)?.into_points())
            } else {
                None
            };
            let record = RegretRecord {
                iter: t,
                instant_regret: instant,
                cumulative_regret: cumulative,
                best_value: acc.best(),
                inferred_x: inferred,
                wall_ms: 0.0,
            };
            Ok((next_gp, record, next))
        };
        let (next_gp, mut record, next) = step().map_err(|e| e.at_iteration(t))?;
        if cfg.record_wall_time {
            record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        }
        batches.push(QueryBatch::new(batch_unit.iter().map(|u| domain.from_unit(u)).collect()));
        gp = next_gp;
        sizes.push(gp.data().len());
        records.push(record);
        if let Some(next) = next {
            batch_unit = next;
        }
    }
    Ok(ExperimentOutcome {
        trace: RegretTrace {
            records,
            output_offset: offset,
            output_scale: scale,
        },
        batches,
        dataset_sizes: sizes,
    })
}

/// Uniform probes used by the function sanity checks.
pub fn random_probes<R: Rng>(f: TestFunction, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let domain = f.domain();
    (0..n).map(|_| domain.sample(rng)).collect()
}
