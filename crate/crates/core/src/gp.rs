//! Gaussian-process regression with a Matérn-3/2 kernel.
//!
//! The posterior stores the lower Cholesky factor `L` of the regularized Gram
//! matrix `K + (σ0² + jitter)·I`, its explicit inverse `L⁻¹`, and the weights
//! `α = (K + σ0²I)⁻¹ y`. Keeping `L⁻¹` around turns every batched covariance
//! query into one dense matrix product, which is what the acquisition
//! optimizers spend their time on. Posteriors are immutable: [`GpPosterior::extend`]
//! returns a new posterior with a rank-m block update of both factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size of the variance clamp: values in `[-1e-9·σ_f², 0)` are round-off.
pub const VARIANCE_FLOOR_REL: f64 = 1e-9;

/// Default jitter relative to the signal variance.
pub const DEFAULT_JITTER_REL: f64 = 1e-8;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Matérn-3/2 kernel parameters plus the observation-noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub jitter: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            length_scale: 1.0,
            signal_variance: 1.0,
            noise_variance: 0.01,
            jitter: DEFAULT_JITTER_REL,
        }
    }
}

impl KernelSpec {
    /// Builds a validated spec with the default jitter of `1e-8·σ_f²`.
    pub fn new(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let spec = KernelSpec {
            length_scale,
            signal_variance,
            noise_variance,
            jitter: DEFAULT_JITTER_REL * signal_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        self.jitter = jitter;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            problems.push(format!("length_scale must be > 0 (got {})", self.length_scale));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            problems.push(format!(
                "signal_variance must be > 0 (got {})",
                self.signal_variance
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            problems.push(format!(
                "noise_variance must be >= 0 (got {})",
                self.noise_variance
            ));
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            problems.push(format!("jitter must be > 0 (got {})", self.jitter));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidKernel(problems.join("; ")))
        }
    }

    /// Kernel value as a function of the Euclidean distance.
    #[inline]
    pub fn eval_distance(&self, r: f64) -> f64 {
        let a = SQRT3 * r / self.length_scale;
        self.signal_variance * (1.0 + a) * (-a).exp()
    }

    #[inline]
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        self.eval_distance(distance(x, x2))
    }

    /// Scalar `c` such that `∇_x k(x, x2) = c·(x − x2)`.
    ///
    /// The Matérn-3/2 kernel is differentiable at zero distance, where the
    /// gradient vanishes.
    #[inline]
    pub fn grad_factor(&self, x: &[f64], x2: &[f64]) -> f64 {
        let a = SQRT3 * distance(x, x2) / self.length_scale;
        -self.signal_variance * 3.0 / (self.length_scale * self.length_scale) * (-a).exp()
    }

    /// Kernel value and gradient factor at distance `r`.
    #[inline]
    pub fn value_and_grad_factor(&self, r: f64) -> (f64, f64) {
        let a = SQRT3 * r / self.length_scale;
        let e = (-a).exp();
        (
            self.signal_variance * (1.0 + a) * e,
            -self.signal_variance * 3.0 / (self.length_scale * self.length_scale) * e,
        )
    }

    /// Gradient of `k(x, x2)` with respect to its first argument.
    pub fn grad_first(&self, x: &[f64], x2: &[f64]) -> Vec<f64> {
        let c = self.grad_factor(x, x2);
        x.iter().zip(x2).map(|(a, b)| c * (a - b)).collect()
    }

    /// Noise seen by the Gram factorization: `σ0² + jitter`.
    #[inline]
    pub fn effective_noise(&self) -> f64 {
        self.noise_variance + self.jitter
    }

    #[inline]
    pub fn variance_floor(&self) -> f64 {
        VARIANCE_FLOOR_REL * self.signal_variance
    }

    /// Applies the round-off clamp to a raw variance.
    pub fn clamp_variance(&self, raw: f64) -> Result<f64> {
        if raw >= 0.0 {
            Ok(raw)
        } else if raw >= -self.variance_floor() {
            Ok(0.0)
        } else {
            Err(Error::NegativeVariance {
                value: raw,
                floor: -self.variance_floor(),
            })
        }
    }
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Axis-aligned box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidDomain("zero-dimensional box".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "axis {j}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        Ok(DomainBox { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        DomainBox {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Euclidean projection onto the box (coordinatewise clamp).
    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn diagonal(&self) -> f64 {
        distance(&self.lower, &self.upper)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    /// Maps a point of the unit cube onto this box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| lo + (hi - lo) * v)
            .collect()
    }

    /// Maps a point of this box onto the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Regular grid with `per_dim` points per axis, endpoints included.
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let per_dim = per_dim.max(2);
        let d = self.dim();
        let total = per_dim.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = vec![0.0; d];
            for j in 0..d {
                let k = idx % per_dim;
                idx /= per_dim;
                let frac = k as f64 / (per_dim - 1) as f64;
                p[j] = self.lower[j] + frac * (self.upper[j] - self.lower[j]);
            }
            out.push(p);
        }
        out
    }
}

/// Observed locations and their noisy values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DatasetLength {
                points: points.len(),
                values: values.len(),
            });
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if let Some(bad) = points.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        Ok(Dataset { points, values })
    }

    pub fn empty() -> Self {
        Dataset::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        if let Some(d) = self.dim() {
            if point.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: point.len(),
                });
            }
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn check_within(&self, domain: &DomainBox) -> Result<()> {
        self.points.iter().try_for_each(|p| domain.check(p))
    }
}

/// Kernel columns `K(data, P)` and whitened columns `L⁻¹ K(data, P)` for a
/// set of query points `P`.
pub(crate) struct Whitened {
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Gradient factors `c[a, j]` with `∇_{P_j} k(P_j, data_a) = c[a, j]·(P_j − data_a)`.
    pub grad: Option<DMatrix<f64>>,
}

/// Fitted GP posterior; immutable once built.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    data: Dataset,
    chol: DMatrix<f64>,
    chol_inv: DMatrix<f64>,
    /// `L⁻ᵀ`, kept so that unwhitening is a plain product.
    chol_inv_t: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GpPosterior {
    /// Fits the posterior from scratch (reference path).
    pub fn fit(kernel: KernelSpec, data: Dataset) -> Result<Self> {
        kernel.validate()?;
        let n = data.len();
        if n == 0 {
            return Ok(GpPosterior {
                kernel,
                data,
                chol: DMatrix::zeros(0, 0),
                chol_inv: DMatrix::zeros(0, 0),
                chol_inv_t: DMatrix::zeros(0, 0),
                alpha: DVector::zeros(0),
            });
        }
        let noise = kernel.effective_noise();
        let pts = data.points();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            kernel.eval(&pts[i], &pts[j]) + if i == j { noise } else { 0.0 }
        });
        let chol = gram
            .cholesky()
            .ok_or(Error::Factorization {
                what: "gram matrix",
                size: n,
            })?
            .unpack();
        let chol_inv = chol
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(Error::Factorization {
                what: "gram matrix",
                size: n,
            })?;
        let alpha = solve_with_factor(&chol, data.values())?;
        Ok(GpPosterior {
            kernel,
            data,
            chol,
            chol_inv_t: chol_inv.transpose(),
            chol_inv,
            alpha,
        })
    }

    /// Posterior conditioned on the current data plus `points`/`values`,
    /// computed by a block update of the factor in `O(n²m)`.
    pub fn extend(&self, points: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DatasetLength {
                points: points.len(),
                values: values.len(),
            });
        }
        if points.is_empty() {
            return Ok(self.clone());
        }
        let mut data = self.data.clone();
        for (p, v) in points.iter().zip(values) {
            data.push(p.clone(), *v)?;
        }
        if self.data.is_empty() {
            return GpPosterior::fit(self.kernel, data);
        }

        let n = self.data.len();
        let m = points.len();
        let kern = &self.kernel;
        let b = self.whiten(points).v; // n×m
        let mut schur = DMatrix::from_fn(m, m, |i, j| {
            kern.eval(&points[i], &points[j])
                + if i == j {
                    kern.effective_noise()
                } else {
                    0.0
                }
        });
        schur -= b.tr_mul(&b);
        let c = schur
            .cholesky()
            .ok_or(Error::Factorization {
                what: "gram update block",
                size: m,
            })?
            .unpack();
        let c_inv = c
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .ok_or(Error::Factorization {
                what: "gram update block",
                size: m,
            })?;

        let mut chol = DMatrix::zeros(n + m, n + m);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        chol.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
        chol.view_mut((n, n), (m, m)).copy_from(&c);

        let mut chol_inv = DMatrix::zeros(n + m, n + m);
        chol_inv.view_mut((0, 0), (n, n)).copy_from(&self.chol_inv);
        let lower_left = -matmul(&(&c_inv * b.transpose()), &self.chol_inv);
        chol_inv.view_mut((n, 0), (m, n)).copy_from(&lower_left);
        chol_inv.view_mut((n, n), (m, m)).copy_from(&c_inv);

        let alpha = solve_with_factor(&chol, data.values())?;
        Ok(GpPosterior {
            kernel: self.kernel,
            data,
            chol,
            chol_inv_t: chol_inv.transpose(),
            chol_inv,
            alpha,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Lower Cholesky factor of `K + (σ0² + jitter)·I`.
    pub fn gram_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Explicit inverse `L⁻¹` of the Gram factor.
    pub fn gram_inverse_factor(&self) -> &DMatrix<f64> {
        &self.chol_inv
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn posterior_mean(&self, x: &[f64]) -> f64 {
        self.data
            .points()
            .iter()
            .zip(self.alpha.iter())
            .map(|(p, a)| self.kernel.eval(x, p) * a)
            .sum()
    }

    /// Raw posterior covariance `Σ_t(x, x2)`; no clamp is applied.
    pub fn posterior_cov(&self, x: &[f64], x2: &[f64]) -> f64 {
        let prior = self.kernel.eval(x, x2);
        if self.data.is_empty() {
            return prior;
        }
        let w = self.whiten(&[x.to_vec(), x2.to_vec()]);
        prior - w.v.column(0).dot(&w.v.column(1))
    }

    /// Clamped posterior variance `σ_t²(x)`.
    pub fn posterior_var(&self, x: &[f64]) -> Result<f64> {
        let prior = self.kernel.signal_variance;
        if self.data.is_empty() {
            return Ok(prior);
        }
        let v = self.whiten_one(x);
        self.kernel.clamp_variance(prior - v.norm_squared())
    }

    /// `[Σ_t(x, b_1), …, Σ_t(x, b_m)]`.
    pub fn cross_cov(&self, x: &[f64], batch: &[Vec<f64>]) -> DVector<f64> {
        let mut out = DVector::from_iterator(batch.len(), batch.iter().map(|b| self.kernel.eval(x, b)));
        if !self.data.is_empty() {
            let vx = self.whiten_one(x);
            let vb = self.whiten(batch).v;
            out -= vb.tr_mul(&vx);
        }
        out
    }

    /// `Σ_t(X, X)` for a batch; the diagonal is clamped.
    pub fn batch_cov(&self, batch: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let m = batch.len();
        let mut out = DMatrix::from_fn(m, m, |i, j| self.kernel.eval(&batch[i], &batch[j]));
        if !self.data.is_empty() {
            let v = self.whiten(batch).v;
            out -= v.tr_mul(&v);
        }
        for i in 0..m {
            out[(i, i)] = self.kernel.clamp_variance(out[(i, i)])?;
        }
        Ok(out)
    }

    /// `K(data, points)` and, optionally, the gradient factors `c[a, j]`.
    pub(crate) fn kernel_columns(&self, points: &[Vec<f64>], with_grad: bool) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let pts = self.data.points();
        let n = pts.len();
        let p = points.len();
        if !with_grad {
            let k = DMatrix::from_fn(n, p, |a, j| self.kernel.eval(&pts[a], &points[j]));
            return (k, None);
        }
        let mut k = DMatrix::zeros(n, p);
        let mut c = DMatrix::zeros(n, p);
        for j in 0..p {
            for a in 0..n {
                let (kv, cv) = self.kernel.value_and_grad_factor(distance(&points[j], &pts[a]));
                k[(a, j)] = kv;
                c[(a, j)] = cv;
            }
        }
        (k, Some(c))
    }

    /// Kernel columns against the data for each of `points`, whitened by `L⁻¹`.
    pub(crate) fn whiten(&self, points: &[Vec<f64>]) -> Whitened {
        let (k, grad) = self.kernel_columns(points, false);
        let v = tri_mul(&self.chol_inv, true, &k);
        Whitened { k, v, grad }
    }

    /// As [`Self::whiten`], also returning the kernel gradient factors.
    pub(crate) fn whiten_with_grad(&self, points: &[Vec<f64>]) -> Whitened {
        let (k, grad) = self.kernel_columns(points, true);
        let v = tri_mul(&self.chol_inv, true, &k);
        Whitened { k, v, grad }
    }

    fn whiten_one(&self, x: &[f64]) -> DVector<f64> {
        let k = DVector::from_iterator(
            self.data.len(),
            self.data.points().iter().map(|p| self.kernel.eval(p, x)),
        );
        &self.chol_inv * k
    }

    /// `L⁻¹ k` for kernel columns `k` against the data.
    pub(crate) fn whiten_columns(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        tri_mul(&self.chol_inv, true, k)
    }

    /// `L⁻ᵀ v`, i.e. `(K + σ0²I)⁻¹ k` for whitened columns `v`.
    pub(crate) fn unwhiten(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        tri_mul(&self.chol_inv_t, false, v)
    }
}

/// Dense product through matrixmultiply for every shape (nalgebra falls back
/// to a column loop when a side is 5 or less).
fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = a.shape();
    let n = b.ncols();
    assert_eq!(k, b.nrows());
    let mut c = DMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: the three buffers are column-major with the shapes and strides given.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

const TRI_BLOCK: usize = 64;

/// `t · b` for a square `t` that is lower (or upper) triangular with exact
/// zeros in the other half, skipping the zero blocks.
fn tri_mul(t: &DMatrix<f64>, lower: bool, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let p = b.ncols();
    assert_eq!((t.ncols(), b.nrows()), (n, n));
    let mut c = DMatrix::zeros(n, p);
    if n > 0 && p > 0 {
        // SAFETY: column-major buffers of the asserted shapes; every block
        // stays inside them.
        unsafe { tri_gemm(lower, n, p, t.as_ptr(), n as isize, b.as_ptr(), n as isize, c.as_mut_ptr(), n as isize) };
    }
    c
}

/// `c += T · b` over the leading `n` rows, `T` the triangle at `a`.
#[allow(clippy::too_many_arguments)]
unsafe fn tri_gemm(lower: bool, n: usize, p: usize, a: *const f64, lda: isize, b: *const f64, ldb: isize, c: *mut f64, ldc: isize) {
    if n <= TRI_BLOCK {
        matrixmultiply::dgemm(n, n, p, 1.0, a, 1, lda, b, 1, ldb, 1.0, c, 1, ldc);
        return;
    }
    let h = n / 2;
    let r = n - h;
    tri_gemm(lower, h, p, a, lda, b, ldb, c, ldc);
    tri_gemm(lower, r, p, a.offset(h as isize * (1 + lda)), lda, b.add(h), ldb, c.add(h), ldc);
    if lower {
        matrixmultiply::dgemm(r, h, p, 1.0, a.add(h), 1, lda, b, 1, ldb, 1.0, c.add(h), 1, ldc);
    } else {
        matrixmultiply::dgemm(h, r, p, 1.0, a.offset(h as isize * lda), 1, lda, b.add(h), 1, ldb, 1.0, c, 1, ldc);
    }
}

fn solve_with_factor(chol: &DMatrix<f64>, values: &[f64]) -> Result<DVector<f64>> {
    let y = DVector::from_column_slice(values);
    let z = chol
        .solve_lower_triangular(&y)
        .ok_or(Error::Factorization {
            what: "gram matrix",
            size: chol.nrows(),
        })?;
    chol.tr_solve_lower_triangular(&z).ok_or(Error::Factorization {
        what: "gram matrix",
        size: chol.nrows(),
    })
}
