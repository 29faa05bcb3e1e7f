//! Independent oracles for unit tests: dense Gauss-Jordan inversion of the
//! regularized Gram matrix, evaluated with plain `Vec` arithmetic so that no
//! code path is shared with the factored implementation.

use rand::Rng;

use crate::gp::{Dataset, DomainBox, KernelSpec};

pub struct Instance {
    pub kernel: KernelSpec,
    pub data: Dataset,
    pub probe: Vec<f64>,
    pub probe2: Vec<f64>,
}

pub fn random_kernel<R: Rng>(rng: &mut R) -> KernelSpec {
    let ell = rng.random_range(0.2..1.5);
    let sf2 = rng.random_range(0.5..2.0);
    let noise = 10f64.powf(rng.random_range(-4.0..-1.0));
    KernelSpec::new(ell, sf2, noise).unwrap()
}

pub fn random_instance<R: Rng>(rng: &mut R, n: usize, d: usize) -> Instance {
    let kernel = random_kernel(rng);
    let domain = DomainBox::unit(d);
    let points: Vec<Vec<f64>> = (0..n).map(|_| domain.sample(rng)).collect();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Instance {
        kernel,
        data: Dataset::new(points, values).unwrap(),
        probe: domain.sample(rng),
        probe2: domain.sample(rng),
    }
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn regularized_gram(kernel: &KernelSpec, pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let noise = kernel.noise_variance + kernel.jitter;
    pts.iter()
        .enumerate()
        .map(|(i, a)| {
            pts.iter()
                .enumerate()
                .map(|(j, b)| kernel.eval(a, b) + if i == j { noise } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Posterior mean at `x` and covariance between `x` and `x2` via the dense inverse.
pub fn dense_posterior(kernel: &KernelSpec, data: &Dataset, x: &[f64], x2: &[f64]) -> (f64, f64) {
    let pts = data.points();
    let inv = invert(&regularized_gram(kernel, pts));
    let kx: Vec<f64> = pts.iter().map(|p| kernel.eval(x, p)).collect();
    let kx2: Vec<f64> = pts.iter().map(|p| kernel.eval(x2, p)).collect();
    let n = pts.len();
    let mut mean = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += kx[i] * inv[i][j] * data.values()[j];
            quad += kx[i] * inv[i][j] * kx2[j];
        }
    }
    (mean, kernel.eval(x, x2) - quad)
}

/// Posterior variance at `x` after appending `batch` to the data (any values).
pub fn refit_variance(kernel: &KernelSpec, data: &Dataset, batch: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut pts = data.points().to_vec();
    pts.extend(batch.iter().cloned());
    let values = vec![0.0; pts.len()];
    let full = Dataset::new(pts, values).unwrap();
    dense_posterior(kernel, &full, x, x).1
}
