//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N PASS|FAIL` line (written straight to stdout so it shows
//! without `--nocapture`) and then asserts the verdict.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use gmes::acquisition::{gamma, gamma_gradient, gmes_select_batch, log_barrier, log_barrier_gradient, GmesConfig};
use gmes::gp::{Dataset, DomainBox, GpPosterior, KernelSpec};
use gmes::sim::{min_pair_distance, run_seek, Preset, SeekConfig, SeekResult};
use gmes::testbed::{run_experiment, Algorithm, ExperimentConfig, ExperimentOutcome, KernelParams, TestFunction};
use gmes_cli::config::parse_config_str;
use gmes_cli::sweep::run_sweep;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const PROP1_REL_TOL: f64 = 1e-8;
const GRAD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const GP_REL_TOL: f64 = 1e-10;
const INSTANCES_PROP1: usize = 200;
const INSTANCES_GRAD: usize = 100;
const INSTANCES_GP: usize = 100;
const BENCH_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const BENCH_BUDGET: Duration = Duration::from_secs(20 * 60);
const SEEK_BUDGET: Duration = Duration::from_secs(10 * 60);
const SEEK_MAX_RATIO: f64 = 0.6;
const SCALE_BUDGET: Duration = Duration::from_secs(5);
const FAST_BUDGET: Duration = Duration::from_secs(10);

fn verdict(id: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id:>2} {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

// Independent oracle: Matérn-3/2 written out directly, dense LU inverse.
// Refit variances go through an LU solve.

fn matern(a: &[f64], b: &[f64], ell: f64, sf2: f64) -> f64 {
    let r: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s = 3f64.sqrt() * r / ell;
    sf2 * (1.0 + s) * (-s).exp()
}

struct Oracle {
    ell: f64,
    sf2: f64,
    noise: f64,
    pts: Vec<Vec<f64>>,
    y: Vec<f64>,
    gram: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl Oracle {
    fn new(ell: f64, sf2: f64, noise: f64, pts: Vec<Vec<f64>>, y: Vec<f64>) -> Self {
        let n = pts.len();
        let gram = DMatrix::from_fn(n, n, |i, j| matern(&pts[i], &pts[j], ell, sf2) + if i == j { noise } else { 0.0 });
        let inv = gram.clone().lu().try_inverse().expect("regularized gram is invertible");
        Oracle { ell, sf2, noise, pts, y, gram, inv }
    }

    fn kvec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.pts.len(), self.pts.iter().map(|p| matern(x, p, self.ell, self.sf2)))
    }

    fn mean(&self, x: &[f64]) -> f64 {
        self.kvec(x).dot(&(&self.inv * DVector::from_column_slice(&self.y)))
    }

    fn cov(&self, x: &[f64], x2: &[f64]) -> f64 {
        matern(x, x2, self.ell, self.sf2) - self.kvec(x).dot(&(&self.inv * self.kvec(x2)))
    }

    fn var_by_solve(&self, x: &[f64]) -> f64 {
        let k = self.kvec(x);
        let w = self.gram.clone().lu().solve(&k).expect("regularized gram is invertible");
        matern(x, x, self.ell, self.sf2) - k.dot(&w)
    }

    fn with_points(&self, batch: &[Vec<f64>]) -> Oracle {
        let mut pts = self.pts.clone();
        pts.extend(batch.iter().cloned());
        let y = vec![0.0; pts.len()];
        Oracle::new(self.ell, self.sf2, self.noise, pts, y)
    }
}

struct Instance {
    gp: GpPosterior,
    oracle: Oracle,
    batch: Vec<Vec<f64>>,
    probe: Vec<f64>,
    probe2: Vec<f64>,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let d = rng.random_range(1..=3);
    let n = rng.random_range(0..=10);
    let m = rng.random_range(1..=5);
    let ell = rng.random_range(0.2..1.5);
    let sf2 = rng.random_range(0.5..2.0);
    let noise = 10f64.powf(rng.random_range(-4.0..-1.0));
    let unit = DomainBox::unit(d);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| unit.sample(rng)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let kernel = KernelSpec::new(ell, sf2, noise).unwrap();
    let gp = GpPosterior::fit(kernel, Dataset::new(pts.clone(), y.clone()).unwrap()).unwrap();
    let oracle = Oracle::new(ell, sf2, kernel.effective_noise(), pts, y);
    Instance {
        gp,
        oracle,
        batch: (0..m).map(|_| unit.sample(rng)).collect(),
        probe: unit.sample(rng),
        probe2: unit.sample(rng),
    }
}

#[test]
fn criterion_01_variance_reduction_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES_PROP1 {
        let inst = instance(&mut rng);
        let prior_var = inst.gp.posterior_var(&inst.probe).unwrap();
        let g = gamma(&inst.gp, &inst.batch, &inst.probe).unwrap();
        let refit = inst.oracle.with_points(&inst.batch).var_by_solve(&inst.probe);
        worst = worst.max(((prior_var - g) - refit).abs() / prior_var);
    }
    let elapsed = start.elapsed();
    let pass = worst <= PROP1_REL_TOL && elapsed < FAST_BUDGET;
    verdict(
        1,
        "variance reduction equals refit posterior variance drop",
        pass,
        &format!("{INSTANCES_PROP1} instances, worst rel err {worst:.2e} (tol {PROP1_REL_TOL:e}), {:.2}s", elapsed.as_secs_f64()),
    );
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

#[test]
fn criterion_02_gradient_checks() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_gamma: f64 = 0.0;
    let mut worst_barrier: f64 = 0.0;
    for _ in 0..INSTANCES_GRAD {
        let inst = instance(&mut rng);
        let analytic: Vec<f64> = gamma_gradient(&inst.gp, &inst.batch, &inst.probe).unwrap().concat();
        let mut fd = Vec::new();
        for i in 0..inst.batch.len() {
            for j in 0..inst.probe.len() {
                let mut bp = inst.batch.clone();
                let mut bm = inst.batch.clone();
                bp[i][j] += FD_STEP;
                bm[i][j] -= FD_STEP;
                fd.push((gamma(&inst.gp, &bp, &inst.probe).unwrap() - gamma(&inst.gp, &bm, &inst.probe).unwrap()) / (2.0 * FD_STEP));
            }
        }
        worst_gamma = worst_gamma.max(rel_err(&analytic, &fd));

        // Barrier instance: pairwise distances kept at least r_div + 0.05.
        let m = rng.random_range(2..=5);
        let d = rng.random_range(1..=3);
        let r_div = rng.random_range(0.01..0.3);
        let scale = rng.random_range(1.0..100.0);
        let mut pts: Vec<Vec<f64>> = Vec::new();
        while pts.len() < m {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            if pts.iter().all(|q| q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= r_div + 0.05) {
                pts.push(p);
            }
        }
        let analytic: Vec<f64> = log_barrier_gradient(&pts, r_div, scale).unwrap().concat();
        let mut fd = Vec::new();
        for i in 0..m {
            for j in 0..d {
                let mut bp = pts.clone();
                let mut bm = pts.clone();
                bp[i][j] += FD_STEP;
                bm[i][j] -= FD_STEP;
                fd.push((log_barrier(&bp, r_div, scale).unwrap() - log_barrier(&bm, r_div, scale).unwrap()) / (2.0 * FD_STEP));
            }
        }
        if fd.iter().any(|v| *v != 0.0) {
            worst_barrier = worst_barrier.max(rel_err(&analytic, &fd));
        } else {
            worst_barrier = worst_barrier.max(analytic.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_gamma <= GRAD_REL_TOL && worst_barrier <= GRAD_REL_TOL && elapsed < FAST_BUDGET;
    verdict(
        2,
        "analytic gradients match central differences",
        pass,
        &format!(
            "{INSTANCES_GRAD} instances, worst rel err gamma {worst_gamma:.2e}, barrier {worst_barrier:.2e} (tol {GRAD_REL_TOL:e}, h {FD_STEP:e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_posterior_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES_GP {
        let inst = instance(&mut rng);
        let o = &inst.oracle;
        let ymax = o.y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mean_ref = o.mean(&inst.probe);
        let mean_err = (inst.gp.posterior_mean(&inst.probe) - mean_ref).abs() / mean_ref.abs().max(ymax);
        let cov_ref = o.cov(&inst.probe, &inst.probe2);
        let cov_err = (inst.gp.posterior_cov(&inst.probe, &inst.probe2) - cov_ref).abs() / cov_ref.abs().max(o.sf2);
        worst = worst.max(mean_err).max(cov_err);
    }
    verdict(
        3,
        "factored posterior mean and covariance match the dense inverse",
        worst <= GP_REL_TOL,
        &format!("{INSTANCES_GP} instances, worst rel err {worst:.2e} (tol {GP_REL_TOL:e})"),
    );
}

struct BenchRun {
    algorithm: Algorithm,
    function: TestFunction,
    cfg: ExperimentConfig,
    outcome: Result<ExperimentOutcome, String>,
}

fn bench_config(algorithm: Algorithm, function: TestFunction, agents: usize, iterations: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(algorithm, function);
    cfg.agents = agents;
    cfg.iterations = iterations;
    cfg
}

fn run_all(cfgs: Vec<(ExperimentConfig, u64)>) -> Vec<BenchRun> {
    cfgs.into_par_iter()
        .map(|(cfg, seed)| BenchRun {
            algorithm: cfg.algorithm,
            function: cfg.function,
            outcome: run_experiment(&cfg, seed).map_err(|e| e.to_string()),
            cfg,
        })
        .collect()
}

/// m = 5, T = 150, five seeds, every algorithm on every function.
/// Held while a shared workload runs, so each one is timed on its own.
static HEAVY: Mutex<()> = Mutex::new(());

fn ordering_runs() -> &'static (Vec<BenchRun>, Duration) {
    static RUNS: OnceLock<(Vec<BenchRun>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let _guard = HEAVY.lock().unwrap();
        let start = Instant::now();
        let mut cfgs = Vec::new();
        for f in TestFunction::ALL {
            for a in Algorithm::ALL {
                for s in BENCH_SEEDS {
                    cfgs.push((bench_config(a, f, 5, 150), s));
                }
            }
        }
        let runs = run_all(cfgs);
        (runs, start.elapsed())
    })
}

/// m = 10, T = 100, seed 0.
fn adaptivity_runs() -> &'static Vec<BenchRun> {
    static RUNS: OnceLock<Vec<BenchRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let _guard = HEAVY.lock().unwrap();
        run_all(vec![
            (bench_config(Algorithm::Gmes, TestFunction::Ackley, 10, 100), 0),
            (bench_config(Algorithm::UcbPe, TestFunction::Ackley, 10, 100), 0),
            (bench_config(Algorithm::Gmes, TestFunction::Rosenbrock, 10, 100), 0),
            (bench_config(Algorithm::Bucb, TestFunction::Rosenbrock, 10, 100), 0),
        ])
    })
}

#[test]
fn criterion_04_regret_properties() {
    let mut checked = 0;
    let mut problems = Vec::new();
    for run in ordering_runs().0.iter().chain(adaptivity_runs()) {
        let label = format!("{}/{}", run.algorithm, run.function);
        let out = match &run.outcome {
            Ok(o) => o,
            Err(e) => {
                problems.push(format!("{label}: {e}"));
                continue;
            }
        };
        let recs = &out.trace.records;
        let mut sum = 0.0;
        for (k, r) in recs.iter().enumerate() {
            sum += r.instant_regret;
            if k > 0 && r.instant_regret > recs[k - 1].instant_regret {
                problems.push(format!("{label}: R_t increased at t = {}", r.iter));
            }
            if k > 0 && r.cumulative_regret < recs[k - 1].cumulative_regret {
                problems.push(format!("{label}: cumulative regret decreased at t = {}", r.iter));
            }
            if (r.cumulative_regret - sum).abs() > 1e-9 * sum.abs().max(1.0) {
                problems.push(format!("{label}: cumulative regret is not the running sum at t = {}", r.iter));
            }
        }
        for (t, n) in out.dataset_sizes.iter().enumerate() {
            if *n != run.cfg.agents * (t + 1) {
                problems.push(format!("{label}: |D_{}| = {n}", t + 1));
            }
        }
        checked += 1;
    }
    verdict(
        4,
        "regret monotone, cumulative regret is the running sum, |D_t| = m t",
        problems.is_empty(),
        &format!("{checked} runs checked, {} violations {:?}", problems.len(), problems.iter().take(3).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_05_qualitative_ordering() {
    let (runs, elapsed) = ordering_runs();
    let mut finals: BTreeMap<(TestFunction, Algorithm), Vec<f64>> = BTreeMap::new();
    let mut failed = 0;
    for r in runs {
        match &r.outcome {
            Ok(o) => finals.entry((r.function, r.algorithm)).or_default().push(o.trace.records.last().unwrap().instant_regret),
            Err(_) => failed += 1,
        }
    }
    let mean = |f, a| {
        let v = &finals[&(f, a)];
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut beats_bucb_ts = 0;
    let mut details = Vec::new();
    for f in TestFunction::ALL {
        let g = mean(f, Algorithm::Gmes);
        if g <= mean(f, Algorithm::Bucb) && g <= mean(f, Algorithm::Thompson) {
            beats_bucb_ts += 1;
        }
        details.push(format!(
            "{f}: gmes {:.4e} ucb_pe {:.4e} bucb {:.4e} thompson {:.4e}",
            g,
            mean(f, Algorithm::UcbPe),
            mean(f, Algorithm::Bucb),
            mean(f, Algorithm::Thompson)
        ));
    }
    let ackley = TestFunction::Ackley;
    let ackley_best = [Algorithm::UcbPe, Algorithm::Bucb, Algorithm::Thompson]
        .iter()
        .all(|a| mean(ackley, Algorithm::Gmes) <= mean(ackley, *a));
    let pass = failed == 0 && beats_bucb_ts >= 2 && ackley_best && *elapsed < BENCH_BUDGET;
    verdict(
        5,
        "GMES mean final regret ordering",
        pass,
        &format!(
            "beats bucb and thompson on {beats_bucb_ts}/3, best on ackley: {ackley_best}, {failed} failed runs, {:.0}s (budget {}s); {}",
            elapsed.as_secs_f64(),
            BENCH_BUDGET.as_secs(),
            details.join("; ")
        ),
    );
}

fn last_queries(run: &BenchRun, iterations: usize) -> Vec<Vec<f64>> {
    let out = run.outcome.as_ref().expect("adaptivity run succeeded");
    let b = &out.batches;
    b[b.len() - iterations..].iter().flat_map(|q| q.iter().cloned()).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn criterion_06_query_distribution_adaptivity() {
    let runs = adaptivity_runs();
    let origin_dist = |r: &BenchRun| {
        let q = last_queries(r, 20);
        q.iter().map(|p| dist(p, &[0.0, 0.0])).sum::<f64>() / q.len() as f64
    };
    let dispersion = |r: &BenchRun| {
        let q = last_queries(r, 50);
        let mut s = 0.0;
        let mut n = 0usize;
        for i in 0..q.len() {
            for j in i + 1..q.len() {
                s += dist(&q[i], &q[j]);
                n += 1;
            }
        }
        s / n as f64
    };
    let (gmes_a, pe_a) = (origin_dist(&runs[0]), origin_dist(&runs[1]));
    let (gmes_r, bucb_r) = (dispersion(&runs[2]), dispersion(&runs[3]));
    let pass = gmes_a < pe_a && gmes_r > bucb_r;
    verdict(
        6,
        "query distribution adapts to the function",
        pass,
        &format!(
            "ackley mean |x| over last 20 iterations: gmes {gmes_a:.4} vs ucb_pe {pe_a:.4}; rosenbrock dispersion over last 50: gmes {gmes_r:.4} vs bucb {bucb_r:.4}"
        ),
    );
}

fn seek_runs() -> &'static (Vec<(Preset, usize, Result<SeekResult, String>)>, Duration) {
    static RUNS: OnceLock<(Vec<(Preset, usize, Result<SeekResult, String>)>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let _guard = HEAVY.lock().unwrap();
        let start = Instant::now();
        let mut jobs = Vec::new();
        for p in Preset::ALL {
            for m in [1usize, 4] {
                for s in BENCH_SEEDS {
                    jobs.push((p, m, s));
                }
            }
        }
        let runs = jobs
            .into_par_iter()
            .map(|(p, m, s)| {
                let cfg = SeekConfig { agents: m, ..SeekConfig::default() };
                (p, m, run_seek(&p.scenario(), &cfg, s).map_err(|e| e.to_string()))
            })
            .collect();
        (runs, start.elapsed())
    })
}

#[test]
fn criterion_07_source_seeking_advantage() {
    let (runs, elapsed) = seek_runs();
    let mut iters: BTreeMap<(Preset, usize), Vec<usize>> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut single_m4_converged = true;
    for (p, m, r) in runs {
        match r {
            Ok(res) => {
                iters.entry((*p, *m)).or_default().push(res.iterations_to_converge);
                if *p == Preset::Single && *m == 4 && !(res.converged && res.iterations_to_converge <= 60) {
                    single_m4_converged = false;
                }
            }
            Err(e) => errors.push(e.clone()),
        }
    }
    let mean = |k: &(Preset, usize)| iters.get(k).map_or(f64::NAN, |v| v.iter().sum::<usize>() as f64 / v.len() as f64);
    let (mut one, mut four) = (0.0, 0.0);
    let mut details = Vec::new();
    for p in Preset::ALL {
        let (a, b) = (mean(&(p, 1)), mean(&(p, 4)));
        one += a;
        four += b;
        details.push(format!("{p}: m=1 {a:.1}, m=4 {b:.1}"));
    }
    let ratio = four / one;
    let pass = errors.is_empty() && ratio <= SEEK_MAX_RATIO && single_m4_converged && *elapsed < SEEK_BUDGET;
    verdict(
        7,
        "four robots converge in at most 60% of the single-robot iterations",
        pass,
        &format!(
            "ratio {ratio:.3} (max {SEEK_MAX_RATIO}), single m=4 all converged within 60: {single_m4_converged}, {} errors, {:.0}s; {}",
            errors.len(),
            elapsed.as_secs_f64(),
            details.join("; ")
        ),
    );
}

#[test]
fn criterion_08_safety_invariants() {
    let (runs, _) = seek_runs();
    let defaults = SeekConfig::default();
    let mut worst_pair = f64::INFINITY;
    let mut worst_query = f64::INFINITY;
    let mut errors = 0;
    let mut substeps = 0usize;
    for (_, _, r) in runs {
        let Ok(res) = r else {
            errors += 1;
            continue;
        };
        let mut by_time: BTreeMap<u64, Vec<[f64; 2]>> = BTreeMap::new();
        for row in &res.trajectory {
            by_time.entry(row.t.to_bits()).or_default().push([row.x, row.y]);
        }
        substeps += by_time.len();
        for pos in by_time.values() {
            if let Some(d) = min_pair_distance(pos) {
                worst_pair = worst_pair.min(d);
            }
        }
        for it in &res.iterations {
            if let Some(d) = min_pair_distance(&it.queries) {
                worst_query = worst_query.min(d);
            }
        }
    }
    let pass = errors == 0 && worst_pair > defaults.safety.d_safe && worst_query > defaults.safety.r_div;
    verdict(
        8,
        "robot separation and query separation",
        pass,
        &format!(
            "{substeps} logged instants, min robot distance {worst_pair:.4} m (> {}), min query distance {worst_query:.4} m (> {}), {errors} errors",
            defaults.safety.d_safe, defaults.safety.r_div
        ),
    );
}

#[test]
fn criterion_09_scalability() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let unit = DomainBox::unit(2);
    let pts: Vec<Vec<f64>> = (0..500).map(|_| unit.sample(&mut rng)).collect();
    let y: Vec<f64> = pts.iter().map(|p| (6.0 * p[0]).sin() * (4.0 * p[1]).cos()).collect();
    let kernel = KernelSpec::new(KernelParams::default().length_scale, 1.0, 1e-4).unwrap();
    let gp = GpPosterior::fit(kernel, Dataset::new(pts, y).unwrap()).unwrap();
    let cfg = GmesConfig {
        ascent_iters: 50,
        ..GmesConfig::default()
    };
    let start = Instant::now();
    let result = gmes_select_batch(&gp, 10, &unit, 50, &cfg);
    let elapsed = start.elapsed();
    let ok = result.as_ref().map(|(b, _)| b.len() == 50).unwrap_or(false);
    verdict(
        9,
        "batch selection with m = 50, n = 500, N = 50",
        ok && elapsed < SCALE_BUDGET,
        &format!("{:.2}s (budget {}s), batch ok: {ok}", elapsed.as_secs_f64(), SCALE_BUDGET.as_secs()),
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let text = "algorithms = [\"gmes\", \"ucb_pe\", \"bucb\", \"thompson\"]\nfunctions = [\"bird\", \"ackley\"]\nagents = 3\niterations = 8\nseeds = [0, 1]\njobs = 2\n";
    let mut identical = true;
    let mut compared = 0;
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let mut spec = parse_config_str(text, Path::new("determinism.toml")).unwrap();
        spec.output_dir = dir.path().join(name);
        let report = run_sweep(&spec, 0).unwrap();
        assert!(report.failures.is_empty());
        outputs.push(spec.output_dir);
    }
    let mut names: Vec<_> = std::fs::read_dir(outputs[0].join("runs"))
        .unwrap()
        .flatten()
        .map(|e| e.file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    for n in &names {
        let a = std::fs::read(outputs[0].join("runs").join(n)).unwrap();
        let b = std::fs::read(outputs[1].join("runs").join(n)).unwrap();
        identical &= a == b;
        compared += 1;
    }
    verdict(
        10,
        "repeated sweeps give byte-identical run CSVs",
        identical && compared == 16,
        &format!("{compared} run CSVs compared, identical: {identical}"),
    );
}
