//! Reference batch strategies: GP-UCB-PE, GP-BUCB and parallel Thompson sampling.
//!
//! UCB-PE and BUCB start from the continuous UCB maximizer and then pick the
//! remaining points from a regular candidate grid, conditioning the posterior
//! variance on every point chosen so far. Because the posterior variance does
//! not depend on observed values, conditioning needs no hallucinated values;
//! with posterior-mean hallucination BUCB's mean stays unchanged as well.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acquisition::{find_x_ucb, BetaSchedule, GmesConfig, QueryBatch};
use crate::error::{Error, Result};
use crate::gp::{DomainBox, GpPosterior};
use crate::seed;

const THOMPSON_STREAM: u64 = 0x7473;
/// Best observed points always added to the Thompson candidate set.
const THOMPSON_INCUMBENTS: usize = 16;
const THOMPSON_JITTER_REL: f64 = 1e-6;
const THOMPSON_JITTER_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub beta: BetaSchedule,
    /// Grid points per dimension for UCB-PE/BUCB.
    pub candidate_grid_resolution: usize,
    /// Uniform random candidates per Thompson draw.
    pub thompson_candidates: usize,
    /// Multi-start settings of the UCB maximizer.
    pub restarts: usize,
    pub ucb_iters: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            beta: BetaSchedule::default(),
            candidate_grid_resolution: 32,
            thompson_candidates: 400,
            restarts: 16,
            ucb_iters: 100,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.candidate_grid_resolution < 16 {
            problems.push(format!(
                "baseline.candidate_grid_resolution must be >= 16 (got {})",
                self.candidate_grid_resolution
            ));
        }
        if self.thompson_candidates == 0 {
            problems.push("baseline.thompson_candidates must be >= 1".into());
        }
        if self.restarts == 0 {
            problems.push("baseline.restarts must be >= 1".into());
        }
        if self.beta.initial < 0.0 {
            problems.push("baseline.beta.initial must be >= 0".into());
        }
        problems
    }

    /// The UCB-maximizer settings used at iteration `t`.
    pub fn ucb_config(&self, t: usize) -> GmesConfig {
        GmesConfig {
            beta: self.beta,
            restarts: self.restarts,
            ucb_iters: self.ucb_iters,
            seed: seed::derive(self.seed, &[t as u64]),
            ..GmesConfig::default()
        }
    }
}

/// Posterior variance over a candidate set, conditioned on a growing list of
/// noisy pseudo-observations by rank-1 updates.
struct Conditioner<'a> {
    gp: &'a GpPosterior,
    cands: Vec<Vec<f64>>,
    whitened: Option<DMatrix<f64>>,
    basis: Vec<DVector<f64>>,
    var: Vec<f64>,
}

impl<'a> Conditioner<'a> {
    fn new(gp: &'a GpPosterior, cands: Vec<Vec<f64>>) -> Result<Self> {
        let kern = gp.kernel();
        let whitened = (!gp.data().is_empty()).then(|| gp.whiten(&cands).v);
        let var = (0..cands.len())
            .map(|j| {
                let quad = whitened.as_ref().map_or(0.0, |v| v.column(j).norm_squared());
                kern.clamp_variance(kern.signal_variance - quad)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Conditioner {
            gp,
            cands,
            whitened,
            basis: Vec::new(),
            var,
        })
    }

    fn condition_on(&mut self, idx: usize) {
        let kern = self.gp.kernel();
        let anchor = &self.cands[idx];
        let mut r = DVector::from_iterator(self.cands.len(), self.cands.iter().map(|c| kern.eval(c, anchor)));
        if let Some(v) = &self.whitened {
            r -= v.tr_mul(&v.column(idx));
        }
        for u in &self.basis {
            r.axpy(-u[idx], u, 1.0);
        }
        let s = r[idx].max(0.0) + kern.effective_noise();
        r /= s.sqrt();
        for (v, u) in self.var.iter_mut().zip(r.iter()) {
            *v = (*v - u * u).max(0.0);
        }
        self.basis.push(r);
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

fn sequential_select(
    gp: &GpPosterior,
    t: usize,
    domain: &DomainBox,
    m: usize,
    cfg: &BaselineConfig,
    score: impl Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Result<QueryBatch> {
    if m == 0 {
        return Err(Error::InvalidConfig("agent count must be >= 1".into()));
    }
    let beta = cfg.beta.value(t);
    let first = find_x_ucb(gp, beta, domain, &cfg.ucb_config(t))?;
    if m == 1 {
        return Ok(QueryBatch::new(vec![first]));
    }
    let mut cands = domain.grid(cfg.candidate_grid_resolution);
    let grid_len = cands.len();
    cands.push(first.clone());
    let means: Vec<f64> = cands.iter().map(|c| gp.posterior_mean(c)).collect();
    let mut cond = Conditioner::new(gp, cands)?;
    cond.condition_on(grid_len);
    let mut batch = vec![first];
    while batch.len() < m {
        let s = score(&means[..grid_len], &cond.var[..grid_len]);
        let k = argmax(s.into_iter());
        batch.push(cond.cands[k].clone());
        cond.condition_on(k);
    }
    Ok(QueryBatch::new(batch))
}

/// UCB for the first point, then maximal conditioned variance.
pub fn ucb_pe_select(gp: &GpPosterior, t: usize, domain: &DomainBox, m: usize, cfg: &BaselineConfig) -> Result<QueryBatch> {
    sequential_select(gp, t, domain, m, cfg, |_, var| var.to_vec())
}

/// Sequential UCB with posterior-mean hallucination.
pub fn bucb_select(gp: &GpPosterior, t: usize, domain: &DomainBox, m: usize, cfg: &BaselineConfig) -> Result<QueryBatch> {
    let beta = cfg.beta.value(t);
    sequential_select(gp, t, domain, m, cfg, |mean, var| {
        mean.iter().zip(var).map(|(mu, v)| mu + beta * v.sqrt()).collect()
    })
}

/// Draws `m` joint posterior samples over `candidates` and returns the index
/// of each sample's maximum.
pub fn thompson_sample_candidates<R: Rng + ?Sized>(gp: &GpPosterior, candidates: &[Vec<f64>], m: usize, rng: &mut R) -> Result<Vec<usize>> {
    let c = candidates.len();
    if c < m || c == 0 {
        return Err(Error::InvalidConfig(format!(
            "thompson sampling needs at least m = {m} candidates (got {c})"
        )));
    }
    let kern = gp.kernel();
    let mut cov = DMatrix::from_fn(c, c, |i, j| kern.eval(&candidates[i], &candidates[j]));
    let mut mean = DVector::zeros(c);
    if !gp.data().is_empty() {
        let w = gp.whiten(candidates);
        cov -= w.v.tr_mul(&w.v);
        mean = w.k.tr_mul(gp.alpha());
    }
    let mut jitter = THOMPSON_JITTER_REL * kern.signal_variance;
    let mut factor = None;
    for _ in 0..=THOMPSON_JITTER_DOUBLINGS {
        let mut a = cov.clone();
        for i in 0..c {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            factor = Some(ch.unpack());
            break;
        }
        jitter *= 2.0;
    }
    let l = factor.ok_or(Error::Factorization {
        what: "thompson candidate covariance",
        size: c,
    })?;
    let z = DMatrix::from_fn(c, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let samples = l * z;
    Ok((0..m)
        .map(|k| argmax(samples.column(k).iter().zip(mean.iter()).map(|(s, mu)| s + mu)))
        .collect())
}

/// Parallel Thompson sampling over a fresh random candidate set.
pub fn thompson_select(gp: &GpPosterior, t: usize, domain: &DomainBox, m: usize, cfg: &BaselineConfig) -> Result<QueryBatch> {
    if m == 0 {
        return Err(Error::InvalidConfig("agent count must be >= 1".into()));
    }
    let mut rng = seed::rng(cfg.seed, &[THOMPSON_STREAM, t as u64]);
    let mut cands: Vec<Vec<f64>> = (0..cfg.thompson_candidates).map(|_| domain.sample(&mut rng)).collect();
    let values = gp.data().values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    for &i in order.iter().take(THOMPSON_INCUMBENTS) {
        let mut p = gp.data().points()[i].clone();
        domain.clamp(&mut p);
        cands.push(p);
    }
    let picks = thompson_sample_candidates(gp, &cands, m, &mut rng)?;
    Ok(QueryBatch::new(picks.into_iter().map(|i| cands[i].clone()).collect()))
}
