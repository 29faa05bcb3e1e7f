//! Gaussian max-value entropy search (GMES) batch selection.
//!
//! Each iteration anchors on the UCB maximizer `x_ucb` and then chooses the
//! batch `X` that maximizes the predicted drop in posterior variance at the
//! anchor,
//!
//! ```text
//! γ(X, x) = Σ_t(x, X) (Σ_t(X, X) + σ0² I)⁻¹ Σ_t(X, x),   σ²_{t+1}(x) = σ²_t(x) − γ(X, x),
//! ```
//!
//! which is equivalent to maximizing the closed-form mutual information
//! `½ log(σ²_t(x_ucb) / σ²_{t+1}(x_ucb))` between the batch and a normal
//! surrogate of the posterior max-value. The batch is found by projected
//! gradient ascent with Adam step sizes, optionally with a log-barrier keeping
//! batch points at least `r_div` apart.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{distance, DomainBox, GpPosterior};
use crate::seed;

/// Floor on the post-query anchor variance, relative to `σ_f²`.
pub const POST_VARIANCE_FLOOR_REL: f64 = 1e-12;

/// Barrier steps may not bring any pair closer than `r_div` plus this margin.
pub const BARRIER_MARGIN: f64 = 1e-6;

/// Overall geometric decay of the UCB step over `ucb_iters` steps.
const UCB_STEP_DECAY: f64 = 1e-3;

/// Successive halving of the UCB starts: `(fraction of ucb_iters, survivors)`.
const UCB_PRUNE: [(f64, usize); 2] = [(0.1, 4), (0.4, 2)];

/// The batch ascent stops once its step multiplier falls below this.
const MIN_STEP_SCALE: f64 = 1e-6;

/// Smallest ring radius of the anchored batch init, in length scales.
const ANCHOR_RING_REL: f64 = 0.3;

/// Rejection-sampling budget when initializing a separated batch.
pub const INIT_ATTEMPTS: usize = 1000;

const UCB_STREAM: u64 = 0x7563_62;
const BATCH_STREAM: u64 = 0x6261_7463_68;

/// An ordered set of query points, one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryBatch(Vec<Vec<f64>>);

impl QueryBatch {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        QueryBatch(points)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.0
    }

    /// Smallest pairwise distance, `None` for fewer than two points.
    pub fn min_separation(&self) -> Option<f64> {
        min_separation(&self.0)
    }
}

impl Deref for QueryBatch {
    type Target = [Vec<f64>];

    fn deref(&self) -> &[Vec<f64>] {
        &self.0
    }
}

pub(crate) fn min_separation(points: &[Vec<f64>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = distance(&points[i], &points[j]);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

/// Linearly decaying confidence width `β_t = max(initial − decay·t, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSchedule {
    pub initial: f64,
    pub decay: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            initial: 3.0,
            decay: 0.01,
        }
    }
}

impl BetaSchedule {
    pub fn value(&self, t: usize) -> f64 {
        (self.initial - self.decay * t as f64).max(0.0)
    }
}

/// Adam-style step-size rule with a monotone halving fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepRule {
    /// Base step; `None` means `0.05 · box_diagonal / √d`.
    pub step: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_halvings: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            step: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_halvings: 5,
        }
    }
}

impl StepRule {
    pub fn base_step(&self, domain: &DomainBox) -> f64 {
        self.step
            .unwrap_or_else(|| 0.05 * domain.diagonal() / (domain.dim() as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmesConfig {
    pub beta: BetaSchedule,
    /// Gradient-ascent iterations `N` for the batch.
    pub ascent_iters: usize,
    pub step_rule: StepRule,
    /// Minimum batch separation; `0` disables the log-barrier entirely.
    pub r_div: f64,
    /// Barrier scale `L`.
    pub barrier_scale: f64,
    /// Multi-start count for the UCB maximization.
    pub restarts: usize,
    /// Gradient steps per UCB restart.
    pub ucb_iters: usize,
    /// Independent initializations of the batch ascent.
    pub batch_restarts: usize,
    pub seed: u64,
}

impl Default for GmesConfig {
    fn default() -> Self {
        GmesConfig {
            beta: BetaSchedule::default(),
            ascent_iters: 50,
            step_rule: StepRule::default(),
            r_div: 0.0,
            barrier_scale: 100.0,
            restarts: 16,
            ucb_iters: 100,
            batch_restarts: 2,
            seed: 0,
        }
    }
}

impl GmesConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.ascent_iters == 0 {
            problems.push("gmes.ascent_iters must be >= 1".to_string());
        }
        if self.restarts == 0 {
            problems.push("gmes.restarts must be >= 1".to_string());
        }
        if self.batch_restarts == 0 {
            problems.push("gmes.batch_restarts must be >= 1".to_string());
        }
        if !(self.r_div >= 0.0) {
            problems.push(format!("gmes.r_div must be >= 0 (got {})", self.r_div));
        }
        if !(self.barrier_scale > 0.0) {
            problems.push(format!(
                "gmes.barrier_scale must be > 0 (got {})",
                self.barrier_scale
            ));
        }
        if self.beta.initial < 0.0 {
            problems.push("gmes.beta.initial must be >= 0".to_string());
        }
        if let Some(s) = self.step_rule.step {
            if !(s > 0.0) {
                problems.push(format!("gmes.step_rule.step must be > 0 (got {s})"));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionReport {
    pub x_ucb: Vec<f64>,
    pub gamma_value: f64,
    /// `None` when the post-query anchor variance falls below the floor.
    pub surrogate_mi: Option<f64>,
    /// Objective `γ − p` after every ascent step of the winning restart.
    pub ascent_trajectory: Option<Vec<f64>>,
}

/// `μ_t(x) + β·σ_t(x)`.
pub fn ucb_value(gp: &GpPosterior, x: &[f64], beta: f64) -> Result<f64> {
    Ok(gp.posterior_mean(x) + beta * gp.posterior_var(x)?.sqrt())
}

struct UcbEval {
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

/// `Σ_a c[a]·q[a]·(x − data_a)`: the transposed kernel Jacobian applied to `q`.
fn jacobian_t_apply(data: &[Vec<f64>], x: &[f64], c: impl Iterator<Item = f64>, q: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ((p, ca), qa) in data.iter().zip(c).zip(q) {
        let w = ca * qa;
        if w != 0.0 {
            for ((o, xi), pi) in out.iter_mut().zip(x).zip(p) {
                *o += w * (xi - pi);
            }
        }
    }
    out
}

fn ucb_batch(gp: &GpPosterior, pts: &[Vec<f64>], beta: f64, with_grad: bool) -> Result<UcbEval> {
    let kern = gp.kernel();
    let d = pts.first().map_or(0, Vec::len);
    if gp.data().is_empty() {
        let v = beta * kern.signal_variance.sqrt();
        return Ok(UcbEval {
            values: vec![v; pts.len()],
            grads: vec![vec![0.0; d]; pts.len()],
        });
    }
    let (k, c) = gp.kernel_columns(pts, with_grad);
    let v = (beta > 0.0).then(|| gp.whiten_columns(&k));
    let alpha = gp.alpha();
    let means = k.tr_mul(alpha);
    let mut values = Vec::with_capacity(pts.len());
    let mut stds = Vec::with_capacity(pts.len());
    for j in 0..pts.len() {
        let std = match &v {
            Some(v) => kern.clamp_variance(kern.signal_variance - v.column(j).norm_squared())?.sqrt(),
            None => 0.0,
        };
        stds.push(std);
        values.push(means[j] + beta * std);
    }
    let mut grads = Vec::new();
    if with_grad {
        let c = c.as_ref().expect("gradient factors requested");
        let data = gp.data().points();
        let unwhitened = v.as_ref().map(|v| gp.unwhiten(v));
        for (j, x) in pts.iter().enumerate() {
            let mut g = jacobian_t_apply(data, x, c.column(j).iter().copied(), alpha.iter().copied());
            if let Some(aw) = &unwhitened {
                // ∇σ = ∇σ² / 2σ with ∇σ² = −2 Jᵀ (K + σ0²I)⁻¹ k_t(x).
                if stds[j] > kern.variance_floor().sqrt() {
                    let gv = jacobian_t_apply(data, x, c.column(j).iter().copied(), aw.column(j).iter().copied());
                    for (gi, vi) in g.iter_mut().zip(gv) {
                        *gi -= beta * vi / stds[j];
                    }
                }
            }
            grads.push(g);
        }
    }
    Ok(UcbEval { values, grads })
}

struct Adam {
    rule: StepRule,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize, rule: StepRule) -> Self {
        Adam {
            rule,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Bias-corrected ascent direction for the given gradient.
    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let (b1, b2) = (self.rule.beta1, self.rule.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(g, (m, v))| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + self.rule.epsilon)
            })
            .collect()
    }
}

/// Maximizes `μ_t + β·σ_t` over the box.
///
/// Multi-start projected Adam ascent: half the starts are uniform draws, half
/// are the best observed data points, plus the best point of a coarse grid
/// when `d ≤ 2`. The step decays geometrically to 1e-3 of the base step and
/// the starts are pruned by successive halving (best 4 after 10% of the steps,
/// best 2 after 40%). Returns the best point evaluated anywhere.
pub fn find_x_ucb(gp: &GpPosterior, beta: f64, domain: &DomainBox, cfg: &GmesConfig) -> Result<Vec<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be >= 0 (got {beta})")));
    }
    let d = domain.dim();
    let mut rng = seed::rng(cfg.seed, &[UCB_STREAM]);
    let restarts = cfg.restarts.max(1);
    let n_random = restarts.div_ceil(2);
    let n_observed = restarts - n_random;

    let mut starts: Vec<Vec<f64>> = (0..n_random).map(|_| domain.sample(&mut rng)).collect();
    let mut ranked: Vec<usize> = (0..gp.data().len()).collect();
    let values = gp.data().values();
    ranked.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    for k in 0..n_observed {
        match ranked.get(k) {
            Some(&i) => {
                let mut p = gp.data().points()[i].clone();
                domain.clamp(&mut p);
                starts.push(p);
            }
            None => starts.push(domain.sample(&mut rng)),
        }
    }

    let mut best_point = starts[0].clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut consider = |pts: &[Vec<f64>], vals: &[f64]| {
        for (p, v) in pts.iter().zip(vals) {
            if *v > best_value {
                best_value = *v;
                best_point = p.clone();
            }
        }
    };

    if d <= 2 {
        let grid = domain.grid(if d == 1 { 64 } else { 16 });
        let eval = ucb_batch(gp, &grid, beta, false)?;
        let (gi, _) = eval
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        consider(&grid, &eval.values);
        starts.push(grid[gi].clone());
    }

    let base = cfg.step_rule.base_step(domain);
    let decay = UCB_STEP_DECAY.powf(1.0 / cfg.ucb_iters.max(1) as f64);
    let mut step = base;
    let mut climbers: Vec<(Vec<f64>, Adam)> = starts.into_iter().map(|x| (x, Adam::new(d, cfg.step_rule))).collect();
    for k in 0..cfg.ucb_iters {
        if k > 0 {
            step *= decay;
        }
        let current: Vec<Vec<f64>> = climbers.iter().map(|c| c.0.clone()).collect();
        let eval = ucb_batch(gp, &current, beta, true)?;
        consider(&current, &eval.values);
        for ((x, opt), g) in climbers.iter_mut().zip(&eval.grads) {
            let dir = opt.direction(g);
            for (xi, di) in x.iter_mut().zip(dir) {
                *xi += step * di;
            }
            domain.clamp(x);
        }
        if let Some(&(_, keep)) = UCB_PRUNE.iter().find(|(frac, _)| k == (cfg.ucb_iters as f64 * frac) as usize) {
            if climbers.len() > keep {
                let mut order: Vec<usize> = (0..climbers.len()).collect();
                order.sort_by(|&a, &b| eval.values[b].total_cmp(&eval.values[a]).then(a.cmp(&b)));
                let mut chosen = vec![false; climbers.len()];
                for &i in order.iter().take(keep) {
                    chosen[i] = true;
                }
                let mut flags = chosen.into_iter();
                climbers.retain(|_| flags.next().unwrap_or(false));
            }
        }
    }
    let current: Vec<Vec<f64>> = climbers.into_iter().map(|c| c.0).collect();
    let eval = ucb_batch(gp, &current, beta, false)?;
    consider(&current, &eval.values);
    Ok(best_point)
}

struct GammaEval {
    value: f64,
    /// `∂γ/∂x_i` for each batch point.
    grad: Option<Vec<Vec<f64>>>,
}

fn gamma_eval(gp: &GpPosterior, batch: &[Vec<f64>], x: &[f64], with_grad: bool) -> Result<GammaEval> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let kern = gp.kernel();
    let mut pts = batch.to_vec();
    pts.push(x.to_vec());

    let mut cov = DMatrix::from_fn(m + 1, m + 1, |i, j| kern.eval(&pts[i], &pts[j]));
    let whitened = if gp.data().is_empty() {
        None
    } else {
        let w = if with_grad {
            gp.whiten_with_grad(&pts)
        } else {
            gp.whiten(&pts)
        };
        cov -= w.v.tr_mul(&w.v);
        Some(w)
    };
    let var_x = kern.clamp_variance(cov[(m, m)])?;
    let mut gram = cov.view((0, 0), (m, m)).into_owned();
    for i in 0..m {
        gram[(i, i)] += kern.effective_noise();
    }
    let s: DVector<f64> = cov.view((0, m), (m, 1)).column(0).into_owned();
    let chol = gram.cholesky().ok_or(Error::Factorization {
        what: "batch covariance",
        size: m,
    })?;
    let u = chol.solve(&s);
    let value = s.dot(&u).clamp(0.0, var_x);

    let grad = if with_grad {
        let mut out = Vec::with_capacity(m);
        // q = (K + σ0²I)⁻¹ (k_t(x) − K(data, X) u) = L⁻ᵀ (v_x − V_X u)
        let q = whitened.as_ref().map(|w| {
            let r = w.v.column(m) - w.v.view((0, 0), (w.v.nrows(), m)) * &u;
            gp.unwhiten(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()))
        });
        for i in 0..m {
            let xi = &batch[i];
            let mut g: Vec<f64> = kern.grad_first(xi, x);
            for k in 0..m {
                if k != i {
                    let gk = kern.grad_factor(xi, &batch[k]) * u[k];
                    for (gj, (a, b)) in g.iter_mut().zip(xi.iter().zip(&batch[k])) {
                        *gj -= gk * (a - b);
                    }
                }
            }
            if let (Some(w), Some(q)) = (&whitened, &q) {
                let c = w.grad.as_ref().expect("gradient factors requested");
                let jq = jacobian_t_apply(gp.data().points(), xi, c.column(i).iter().copied(), q.iter().copied());
                for (gj, v) in g.iter_mut().zip(jq) {
                    *gj -= v;
                }
            }
            for gj in g.iter_mut() {
                *gj *= 2.0 * u[i];
            }
            out.push(g);
        }
        Some(out)
    } else {
        None
    };
    Ok(GammaEval { value, grad })
}

/// Predicted reduction of the posterior variance at `x` from observing `batch`.
pub fn gamma(gp: &GpPosterior, batch: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    Ok(gamma_eval(gp, batch, x, false)?.value)
}

/// `∂γ/∂X`, one row of length `d` per batch point.
pub fn gamma_gradient(gp: &GpPosterior, batch: &[Vec<f64>], x: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(gamma_eval(gp, batch, x, true)?
        .grad
        .expect("gradient requested"))
}

fn check_barrier_domain(batch: &[Vec<f64>], r_div: f64) -> Result<()> {
    for i in 0..batch.len() {
        for j in i + 1..batch.len() {
            let dist = distance(&batch[i], &batch[j]);
            if dist <= r_div {
                return Err(Error::BarrierDomain {
                    i,
                    j,
                    distance: dist,
                    r_div,
                });
            }
        }
    }
    Ok(())
}

/// `p(X) = Σ_{i<j} [−(1/L) log(‖x_i − x_j‖ − r_div)]⁺`.
pub fn log_barrier(batch: &[Vec<f64>], r_div: f64, scale: f64) -> Result<f64> {
    check_barrier_domain(batch, r_div)?;
    let mut total = 0.0;
    for i in 0..batch.len() {
        for j in i + 1..batch.len() {
            let term = -(distance(&batch[i], &batch[j]) - r_div).ln() / scale;
            total += term.max(0.0);
        }
    }
    Ok(total)
}

pub fn log_barrier_gradient(batch: &[Vec<f64>], r_div: f64, scale: f64) -> Result<Vec<Vec<f64>>> {
    check_barrier_domain(batch, r_div)?;
    let d = batch.first().map_or(0, Vec::len);
    let mut grad = vec![vec![0.0; d]; batch.len()];
    for i in 0..batch.len() {
        for j in i + 1..batch.len() {
            let dist = distance(&batch[i], &batch[j]);
            let gap = dist - r_div;
            if gap < 1.0 {
                // d/dx_i of −(1/L) log(gap) = −(1/L)(1/gap)(x_i − x_j)/dist
                let f = -1.0 / (scale * gap * dist);
                for k in 0..d {
                    let delta = batch[i][k] - batch[j][k];
                    grad[i][k] += f * delta;
                    grad[j][k] -= f * delta;
                }
            }
        }
    }
    Ok(grad)
}

/// Euclidean projection of every point onto the box.
pub fn project_box(batch: &QueryBatch, domain: &DomainBox) -> QueryBatch {
    QueryBatch(
        batch
            .iter()
            .map(|p| {
                let mut q = p.clone();
                domain.clamp(&mut q);
                q
            })
            .collect(),
    )
}

/// `½ log(σ²_t(x_ucb) / σ²_{t+1}(x_ucb))` in nats.
pub fn surrogate_mi(gp: &GpPosterior, batch: &[Vec<f64>], x_ucb: &[f64]) -> Result<f64> {
    let floor = POST_VARIANCE_FLOOR_REL * gp.kernel().signal_variance;
    let prior = gp.posterior_var(x_ucb)?;
    if prior <= floor {
        return Err(Error::DegenerateVariance { value: prior, floor });
    }
    let post = prior - gamma(gp, batch, x_ucb)?;
    if post <= floor {
        return Err(Error::DegenerateVariance { value: post, floor });
    }
    Ok(0.5 * (prior / post).ln())
}

fn separated(points: &[Vec<f64>], min_dist: f64) -> bool {
    min_separation(points).is_none_or(|s| s > min_dist)
}

fn rejection_init<R: Rng>(rng: &mut R, domain: &DomainBox, m: usize, r_div: f64) -> Result<Vec<Vec<f64>>> {
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..INIT_ATTEMPTS {
        if accepted.len() == m {
            break;
        }
        let p = domain.sample(rng);
        if accepted.iter().all(|q| distance(&p, q) > r_div) {
            accepted.push(p);
        }
    }
    if accepted.len() == m {
        Ok(accepted)
    } else {
        Err(Error::InitFailure {
            m,
            r_div,
            attempts: INIT_ATTEMPTS,
        })
    }
}

/// One point on the anchor and the rest on a ring around it (a line when
/// `d = 1`), no closer than `r_div` to each other and at least `0.3ℓ` out.
fn anchored_init<R: Rng>(rng: &mut R, anchor: &[f64], domain: &DomainBox, m: usize, r_div: f64, length_scale: f64) -> Option<Vec<Vec<f64>>> {
    let d = anchor.len();
    let ring = m - 1;
    let spacing = 1.05 * r_div;
    let mut pts = vec![anchor.to_vec()];
    if d == 1 {
        let gap = spacing.max(ANCHOR_RING_REL * length_scale);
        for k in 0..ring {
            let side = if k % 2 == 0 { 1.0 } else { -1.0 };
            pts.push(vec![anchor[0] + side * gap * (k / 2 + 1) as f64]);
        }
    } else if ring > 0 {
        let chord = if ring > 1 {
            2.0 * (std::f64::consts::PI / ring as f64).sin()
        } else {
            1.0
        };
        let radius = (spacing / chord.min(1.0)).max(ANCHOR_RING_REL * length_scale);
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        for k in 0..ring {
            let angle = phase + std::f64::consts::TAU * k as f64 / ring as f64;
            let mut p = anchor.to_vec();
            p[0] += radius * angle.cos();
            p[1] += radius * angle.sin();
            pts.push(p);
        }
    }
    for p in pts.iter_mut() {
        domain.clamp(p);
    }
    let needed = if r_div > 0.0 { r_div + BARRIER_MARGIN } else { 0.0 };
    (r_div == 0.0 || separated(&pts, needed)).then_some(pts)
}

struct Ascent {
    batch: Vec<Vec<f64>>,
    objective: f64,
    trajectory: Vec<f64>,
}

fn objective(gp: &GpPosterior, batch: &[Vec<f64>], anchor: &[f64], cfg: &GmesConfig) -> Result<(f64, Vec<f64>)> {
    let eval = gamma_eval(gp, batch, anchor, true)?;
    let mut value = eval.value;
    let mut grad: Vec<f64> = eval.grad.expect("gradient requested").concat();
    if cfg.r_div > 0.0 {
        value -= log_barrier(batch, cfg.r_div, cfg.barrier_scale)?;
        let bg = log_barrier_gradient(batch, cfg.r_div, cfg.barrier_scale)?.concat();
        for (g, b) in grad.iter_mut().zip(bg) {
            *g -= b;
        }
    }
    Ok((value, grad))
}

fn ascend(gp: &GpPosterior, init: Vec<Vec<f64>>, anchor: &[f64], domain: &DomainBox, cfg: &GmesConfig) -> Result<Ascent> {
    let d = domain.dim();
    let barrier_gap = cfg.r_div + BARRIER_MARGIN;
    let mut batch = init;
    let (mut obj, mut grad) = objective(gp, &batch, anchor, cfg)?;
    let mut trajectory = Vec::with_capacity(cfg.ascent_iters + 1);
    trajectory.push(obj);
    let mut adam = Adam::new(batch.len() * d, cfg.step_rule);
    let base = cfg.step_rule.base_step(domain);
    // Step multiplier carried across iterations: halved on every rejection,
    // doubled (up to 1) after a first-try acceptance.
    let mut scale = 1.0_f64;

    for _ in 0..cfg.ascent_iters {
        if scale < MIN_STEP_SCALE {
            trajectory.push(obj);
            continue;
        }
        let dir = adam.direction(&grad);
        for attempt in 0..=cfg.step_rule.max_halvings {
            let step = base * scale;
            let candidate: Vec<Vec<f64>> = batch
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut q: Vec<f64> = p.iter().zip(&dir[i * d..(i + 1) * d]).map(|(x, g)| x + step * g).collect();
                    domain.clamp(&mut q);
                    q
                })
                .collect();
            let accepted = if cfg.r_div > 0.0 && !separated(&candidate, barrier_gap) {
                None
            } else {
                let (o, g) = objective(gp, &candidate, anchor, cfg)?;
                (o >= obj).then_some((o, g))
            };
            match accepted {
                Some((o, g)) => {
                    batch = candidate;
                    obj = o;
                    grad = g;
                    if attempt == 0 {
                        scale = (scale * 2.0).min(1.0);
                    }
                    break;
                }
                None => scale *= 0.5,
            }
        }
        trajectory.push(obj);
    }
    Ok(Ascent {
        batch,
        objective: obj,
        trajectory,
    })
}

/// Selects the batch for iteration `t`.
pub fn gmes_select_batch(gp: &GpPosterior, t: usize, domain: &DomainBox, m: usize, cfg: &GmesConfig) -> Result<(QueryBatch, AcquisitionReport)> {
    if m == 0 {
        return Err(Error::InvalidConfig("agent count must be >= 1".into()));
    }
    let iter_seed = seed::derive(cfg.seed, &[t as u64]);
    let ucb_cfg = GmesConfig {
        seed: iter_seed,
        ..cfg.clone()
    };
    let beta = cfg.beta.value(t);
    let x_ucb = find_x_ucb(gp, beta, domain, &ucb_cfg)?;

    let mut rng = seed::rng(iter_seed, &[BATCH_STREAM]);
    let mut best: Option<Ascent> = None;
    for restart in 0..cfg.batch_restarts.max(1) {
        let init = match (restart == 0)
            .then(|| anchored_init(&mut rng, &x_ucb, domain, m, cfg.r_div, gp.kernel().length_scale))
            .flatten()
        {
            Some(pts) => pts,
            None => rejection_init(&mut rng, domain, m, cfg.r_div)?,
        };
        let run = ascend(gp, init, &x_ucb, domain, cfg)?;
        if best.as_ref().is_none_or(|b| run.objective > b.objective) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    if cfg.r_div > 0.0 {
        check_barrier_domain(&best.batch, cfg.r_div)?;
    }
    let gamma_value = gamma(gp, &best.batch, &x_ucb)?;
    let surrogate = surrogate_mi(gp, &best.batch, &x_ucb).ok();
    Ok((
        QueryBatch(best.batch),
        AcquisitionReport {
            x_ucb,
            gamma_value,
            surrogate_mi: surrogate,
            ascent_trajectory: Some(best.trajectory),
        },
    ))
}
