//! Complex vector and matrix helpers, seeded randomness, the diagonal complex
//! normal distribution and Wirtinger-gradient bookkeeping.
//!
//! All arithmetic is double precision. Complex scalars are `num_complex::Complex64`
//! stored as `(re, im)` pairs.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};

pub type CVec = Vec<C64>;

/// Relative margin below which `gamma^2 - |delta|^2` counts as singular.
pub const PD_MARGIN: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type CMat = Matrix<C64>;
pub type RMat = Matrix<f64>;

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl RMat {
    /// `M x` for a real vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `M^T y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate().take(self.rows) {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += m * yi;
            }
        }
        out
    }
}

impl CMat {
    /// `W h` for a real vector `h`.
    pub fn mul_real_vec(&self, h: &[f64]) -> CVec {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(h)
                    .fold(C64::new(0.0, 0.0), |acc, (w, &hj)| acc + w * hj)
            })
            .collect()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> CMat {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

pub fn all_finite(v: &[C64]) -> bool {
    v.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Squared Euclidean norm.
pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Seeded random source.
///
/// The generator is ChaCha8 (`rand_chacha`) keyed by a 64-bit seed, with a
/// 64-bit stream id selecting an independent keystream. Identical
/// `(seed, stream, call sequence)` gives identical draws on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent generator for a given stream, keyed by one draw from `self`.
    ///
    /// Used to hand every sampling chain of a batch its own stream so results do
    /// not depend on evaluation order.
    pub fn fork_key(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> f64 {
        if self.uniform() < p {
            1.0
        } else {
            0.0
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Diagonal-structured complex normal `CN(mu, diag(gamma), diag(delta))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexNormalParams {
    mu: CVec,
    gamma: Vec<f64>,
    delta: CVec,
}

impl ComplexNormalParams {
    pub fn new(mu: CVec, gamma: Vec<f64>, delta: CVec) -> Result<Self> {
        check_len("complex normal gamma", mu.len(), gamma.len())?;
        check_len("complex normal delta", mu.len(), delta.len())?;
        for (index, (&g, d)) in gamma.iter().zip(&delta).enumerate() {
            check_positive_definite(index, g, *d)?;
        }
        if !all_finite(&mu) {
            return Err(Error::InvalidConfig("non-finite complex normal mean".into()));
        }
        Ok(Self { mu, gamma, delta })
    }

    /// Circular unit-variance distribution centred at `mu`.
    pub fn circular(mu: CVec) -> Self {
        let n = mu.len();
        Self {
            mu,
            gamma: vec![1.0; n],
            delta: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[C64] {
        &self.mu
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn delta(&self) -> &[C64] {
        &self.delta
    }
}

pub(crate) fn check_positive_definite(index: usize, gamma: f64, delta: C64) -> Result<()> {
    let ok = gamma.is_finite()
        && gamma > 0.0
        && delta.re.is_finite()
        && delta.im.is_finite()
        && gamma * gamma - delta.norm_sqr() > PD_MARGIN * gamma * gamma;
    if ok {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite {
            index,
            gamma,
            delta_abs: delta.norm(),
        })
    }
}

/// Log density of `z` under a diagonal complex normal, including the
/// `1 / (pi^D sqrt(det Gamma det Q))` normaliser.
///
/// Per dimension, with `u = z - mu`, `D = gamma^2 - |delta|^2`,
/// `p = gamma / D` and `q = -delta / D`:
/// `log p(z) = -log(pi) - log(D)/2 - p|u|^2 - Re(q conj(u)^2)`.
pub fn cn_log_density(z: &[C64], params: &ComplexNormalParams) -> Result<f64> {
    check_len("cn_log_density", params.dim(), z.len())?;
    let mut total = 0.0;
    for i in 0..z.len() {
        let g = params.gamma[i];
        let d = params.delta[i];
        let det = g * g - d.norm_sqr();
        let p = g / det;
        let q = -d / det;
        let u = z[i] - params.mu[i];
        let uc = u.conj();
        total += -PI.ln() - 0.5 * det.ln() - p * u.norm_sqr() - (q * uc * uc).re;
    }
    Ok(total)
}

/// Draws one vector from the distribution.
///
/// Each dimension is the 2-D real Gaussian over `(Re z, Im z)` with
/// `Var(x) = (gamma + Re delta)/2`, `Var(y) = (gamma - Re delta)/2` and
/// `Cov(x, y) = Im delta / 2`.
pub fn cn_sample(params: &ComplexNormalParams, rng: &mut SeededRng) -> CVec {
    (0..params.dim())
        .map(|i| {
            let (x, y) = sample_component(params.gamma[i], params.delta[i], rng);
            params.mu[i] + C64::new(x, y)
        })
        .collect()
}

/// Zero-mean `(x, y)` draw for one dimension; assumes the PD guard has passed.
pub(crate) fn sample_component(gamma: f64, delta: C64, rng: &mut SeededRng) -> (f64, f64) {
    let var_x = 0.5 * (gamma + delta.re);
    let cov = 0.5 * delta.im;
    // det of the 2x2 covariance, computed without the Var(y) cancellation.
    let det = 0.25 * (gamma * gamma - delta.norm_sqr());
    let l11 = var_x.sqrt();
    let l21 = cov / l11;
    let l22 = (det / var_x).sqrt();
    let e1 = rng.normal();
    let e2 = rng.normal();
    (l11 * e1, l21 * e1 + l22 * e2)
}

/// Pair of Wirtinger derivatives of a scalar objective.
#[derive(Debug, Clone, PartialEq)]
pub struct WirtingerGrad {
    /// `dL/dtheta`
    pub d_theta: CVec,
    /// `dL/dconj(theta)`
    pub d_theta_bar: CVec,
}

impl WirtingerGrad {
    /// Recovers `(dL/dRe, dL/dIm)`.
    pub fn to_real_parts(&self) -> (Vec<f64>, Vec<f64>) {
        let re = self
            .d_theta
            .iter()
            .zip(&self.d_theta_bar)
            .map(|(a, b)| (a + b).re)
            .collect();
        let im = self
            .d_theta
            .iter()
            .zip(&self.d_theta_bar)
            .map(|(a, b)| (b - a).im)
            .collect();
        (re, im)
    }
}

/// Converts real partials into Wirtinger form:
/// `dL/dtheta = (gr - i gi)/2`, `dL/dconj(theta) = (gr + i gi)/2`.
pub fn wirtinger_convert(grad_re: &[f64], grad_im: &[f64]) -> Result<WirtingerGrad> {
    check_len("wirtinger_convert", grad_re.len(), grad_im.len())?;
    let d_theta = grad_re
        .iter()
        .zip(grad_im)
        .map(|(&r, &i)| 0.5 * C64::new(r, -i))
        .collect();
    let d_theta_bar = grad_re
        .iter()
        .zip(grad_im)
        .map(|(&r, &i)| 0.5 * C64::new(r, i))
        .collect();
    Ok(WirtingerGrad { d_theta, d_theta_bar })
}
