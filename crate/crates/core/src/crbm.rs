//! Complex-valued restricted Boltzmann machine.
//!
//! Visible units `z` are complex, hidden units `h` binary. With precisions
//! `p = gamma / (gamma^2 - |delta|^2)` and `q = -delta / (gamma^2 - |delta|^2)`
//! the energy is
//!
//! ```text
//! E(z, h) = z^H P z + Re(z^H Q conj(z)) - 2 Re(z^H P b) - 2 Re(z^H Q conj(b))
//!           - 2 c^T h - 2 Re(z^H P W) h - 2 Re(z^H Q conj(W)) h
//! ```
//!
//! so that `p(z | h) = CN(b + W h, diag(gamma), diag(delta))` and
//! `p(h_j = 1 | z) = sigmoid(2 c_j + 2 Re(W'^H z)_j)` with `W' = P W + Q conj(W)`.
//!
//! Variances are stored in log form, `gamma = exp(r)` (real `r`) and
//! `delta = exp(s)` (complex `s`).
//!
//! Gradients follow one convention throughout: every entry of a
//! [`CrbmGradient`] is the Wirtinger derivative with respect to the conjugate
//! parameter, `dF/dconj(theta) = (dF/dRe + i dF/dIm) / 2`. For a real parameter
//! that is half the ordinary partial derivative, so a complex ascent step
//! `2 alpha dL/dconj(theta)` reduces to plain steepest ascent on real entries.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::complex::{all_finite, sample_component, CMat, CVec, ComplexNormalParams, Matrix, SeededRng, C64};
use crate::error::{check_len, Error, Result};
use crate::optim::{ComplexOptimizer, OptimizerConfig};

/// Hidden layers up to this size can be enumerated exactly.
pub const MAX_EXACT_HIDDEN: usize = 12;

/// Lower bound on `gamma`.
pub const GAMMA_FLOOR: f64 = 1e-4;
/// `|delta|` at or above this fraction of `gamma` triggers projection.
pub const DELTA_TRIGGER: f64 = 1.0 - 1e-6;
/// Target fraction of `gamma` for a projected `|delta|`.
pub const DELTA_TARGET: f64 = 1.0 - 1e-3;
/// Smallest `|delta| / gamma` kept, so `s` stays finite.
pub const DELTA_FLOOR: f64 = 1e-12;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Precision-side view of the visible covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPair {
    pub p: Vec<f64>,
    pub q: CVec,
}

/// `p = gamma / (gamma^2 - |delta|^2)`, `q = -delta / (gamma^2 - |delta|^2)`.
pub fn precision_from_variance(gamma: &[f64], delta: &[C64]) -> Result<PrecisionPair> {
    check_len("precision_from_variance", gamma.len(), delta.len())?;
    let mut p = Vec::with_capacity(gamma.len());
    let mut q = Vec::with_capacity(gamma.len());
    for (index, (&g, &d)) in gamma.iter().zip(delta).enumerate() {
        let det = g * g - d.norm_sqr();
        if !(g > 0.0 && det > 0.0) {
            return Err(Error::NotPositiveDefinite {
                index,
                gamma: g,
                delta_abs: d.norm(),
            });
        }
        p.push(g / det);
        q.push(-d / det);
    }
    Ok(PrecisionPair { p, q })
}

/// Inverse of [`precision_from_variance`].
pub fn variance_from_precision(pair: &PrecisionPair) -> Result<(Vec<f64>, CVec)> {
    check_len("variance_from_precision", pair.p.len(), pair.q.len())?;
    let mut gamma = Vec::with_capacity(pair.p.len());
    let mut delta = Vec::with_capacity(pair.p.len());
    for (index, (&p, &q)) in pair.p.iter().zip(&pair.q).enumerate() {
        let det = p * p - q.norm_sqr();
        if !(p > 0.0 && det > 0.0) {
            return Err(Error::NotPositiveDefinite {
                index,
                gamma: p,
                delta_abs: q.norm(),
            });
        }
        gamma.push(p / det);
        delta.push(-q / det);
    }
    Ok((gamma, delta))
}

/// Full CRBM parameter set `{b, c, W, r, s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbmParams {
    /// Visible bias, length `I`.
    pub b: CVec,
    /// Hidden bias, length `J`.
    pub c: Vec<f64>,
    /// Weights, `I x J`.
    pub w: CMat,
    /// Log variance, `gamma = exp(r)`.
    pub r: Vec<f64>,
    /// Log pseudo-variance, `delta = exp(s)`.
    pub s: CVec,
}

/// Initialization options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbmInit {
    /// Standard deviation of both Re and Im parts of each weight.
    pub weight_std: f64,
    pub log_gamma: f64,
    pub log_delta: C64,
}

impl Default for CrbmInit {
    /// `gamma = 1`, `delta = exp(-2)` real. The gradient with respect to `s`
    /// carries a factor `conj(delta)`, so a much smaller start leaves `delta`
    /// effectively frozen.
    fn default() -> Self {
        Self {
            weight_std: 0.01,
            log_gamma: 0.0,
            log_delta: C64::new(-2.0, 0.0),
        }
    }
}

impl CrbmParams {
    /// Zero weights and biases with the default variances of [`CrbmInit`].
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        let init = CrbmInit::default();
        Self {
            b: vec![C64::new(0.0, 0.0); visible],
            c: vec![0.0; hidden],
            w: CMat::zeros(visible, hidden),
            r: vec![init.log_gamma; visible],
            s: vec![init.log_delta; visible],
        }
    }

    /// Data-mean visible bias, zero hidden bias, small Gaussian weights.
    pub fn init(dataset: &[CVec], hidden: usize, init: &CrbmInit, rng: &mut SeededRng) -> Result<Self> {
        let first = dataset.first().ok_or(Error::EmptyBatch)?;
        let visible = first.len();
        let mut mean = vec![C64::new(0.0, 0.0); visible];
        for z in dataset {
            check_len("CrbmParams::init sample", visible, z.len())?;
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v;
            }
        }
        let n = dataset.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let w = Matrix::from_fn(visible, hidden, |_, _| {
            C64::new(init.weight_std * rng.normal(), init.weight_std * rng.normal())
        });
        let params = Self {
            b: mean,
            c: vec![0.0; hidden],
            w,
            r: vec![init.log_gamma; visible],
            s: vec![init.log_delta; visible],
        };
        params.validate()?;
        Ok(params)
    }

    pub fn visible_dim(&self) -> usize {
        self.b.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.c.len()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.r.iter().map(|r| r.exp()).collect()
    }

    pub fn delta(&self) -> CVec {
        self.s.iter().map(|s| s.exp()).collect()
    }

    pub fn precision(&self) -> Result<PrecisionPair> {
        precision_from_variance(&self.gamma(), &self.delta())
    }

    /// Shape, finiteness and positive-definiteness check.
    pub fn validate(&self) -> Result<()> {
        let (i, j) = (self.visible_dim(), self.hidden_dim());
        check_len("CrbmParams W rows", i, self.w.rows())?;
        check_len("CrbmParams W cols", j, self.w.cols())?;
        check_len("CrbmParams r", i, self.r.len())?;
        check_len("CrbmParams s", i, self.s.len())?;
        if let Some(name) = self.non_finite_field() {
            return Err(Error::InvalidConfig(format!("non-finite CRBM parameter `{name}`")));
        }
        self.precision().map(|_| ())
    }

    fn non_finite_field(&self) -> Option<&'static str> {
        if !all_finite(&self.b) {
            Some("b")
        } else if !self.c.iter().all(|x| x.is_finite()) {
            Some("c")
        } else if !self.w.all_finite() {
            Some("W")
        } else if !self.r.iter().all(|x| x.is_finite()) {
            Some("r")
        } else if !all_finite(&self.s) {
            Some("s")
        } else {
            None
        }
    }

    /// Pulls `(gamma, delta)` back into the positive-definite region.
    ///
    /// `gamma` is floored at [`GAMMA_FLOOR`]; a `delta` with
    /// `|delta| >= DELTA_TRIGGER * gamma` is rescaled to `DELTA_TARGET * gamma`
    /// keeping its phase; `|delta|` is kept at least `DELTA_FLOOR * gamma`.
    pub fn project(&mut self) {
        let floor = GAMMA_FLOOR.ln();
        for (r, s) in self.r.iter_mut().zip(self.s.iter_mut()) {
            if *r < floor {
                *r = floor;
            }
            let log_ratio = s.re - *r;
            if log_ratio >= DELTA_TRIGGER.ln() {
                s.re = *r + DELTA_TARGET.ln();
            } else if log_ratio < DELTA_FLOOR.ln() {
                s.re = *r + DELTA_FLOOR.ln();
            }
        }
    }

    /// Number of complex slots in the flattened parameter vector.
    pub(crate) fn flat_len(&self) -> usize {
        let (i, j) = (self.visible_dim(), self.hidden_dim());
        i + j + i * j + i + i
    }

    /// Flattens in the order b, c, W (row-major), r, s. Real entries get a
    /// zero imaginary part.
    pub(crate) fn flatten(&self) -> CVec {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(&self.b);
        out.extend(self.c.iter().map(|&x| C64::new(x, 0.0)));
        out.extend_from_slice(self.w.as_slice());
        out.extend(self.r.iter().map(|&x| C64::new(x, 0.0)));
        out.extend_from_slice(&self.s);
        out
    }

    /// Inverse of [`Self::flatten`]; imaginary parts of real entries are dropped.
    pub(crate) fn unflatten_from(&mut self, flat: &[C64]) {
        let (i, j) = (self.visible_dim(), self.hidden_dim());
        let mut at = 0;
        self.b.copy_from_slice(&flat[at..at + i]);
        at += i;
        for (c, v) in self.c.iter_mut().zip(&flat[at..at + j]) {
            *c = v.re;
        }
        at += j;
        self.w.as_mut_slice().copy_from_slice(&flat[at..at + i * j]);
        at += i * j;
        for (r, v) in self.r.iter_mut().zip(&flat[at..at + i]) {
            *r = v.re;
        }
        at += i;
        self.s.copy_from_slice(&flat[at..at + i]);
    }
}

/// Cached per-dimension quantities for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Precomputed {
    pub gamma: Vec<f64>,
    pub delta: CVec,
    pub p: Vec<f64>,
    pub q: CVec,
}

impl Precomputed {
    pub(crate) fn new(params: &CrbmParams) -> Result<Self> {
        let gamma = params.gamma();
        let delta = params.delta();
        let PrecisionPair { p, q } = precision_from_variance(&gamma, &delta)?;
        Ok(Self { gamma, delta, p, q })
    }
}

fn check_visible(params: &CrbmParams, z: &[C64]) -> Result<()> {
    check_len("visible vector", params.visible_dim(), z.len())
}

fn check_hidden(params: &CrbmParams, h: &[f64]) -> Result<()> {
    check_len("hidden vector", params.hidden_dim(), h.len())
}

/// `b + W h`.
pub fn visible_mean(h: &[f64], params: &CrbmParams) -> Result<CVec> {
    check_hidden(params, h)?;
    let wh = params.w.mul_real_vec(h);
    Ok(params.b.iter().zip(wh).map(|(b, m)| b + m).collect())
}

fn energy_with(z: &[C64], h: &[f64], params: &CrbmParams, pre: &Precomputed) -> f64 {
    let m = visible_mean_unchecked(h, params);
    let mut e = 0.0;
    for i in 0..z.len() {
        let (p, q) = (pre.p[i], pre.q[i]);
        let zc = z[i].conj();
        e += p * z[i].norm_sqr() + (q * zc * zc).re - 2.0 * p * (zc * m[i]).re - 2.0 * (q * zc * m[i].conj()).re;
    }
    e - 2.0 * params.c.iter().zip(h).map(|(c, h)| c * h).sum::<f64>()
}

fn visible_mean_unchecked(h: &[f64], params: &CrbmParams) -> CVec {
    let wh = params.w.mul_real_vec(h);
    params.b.iter().zip(wh).map(|(b, m)| b + m).collect()
}

/// Energy `E(z, h)` in the precision form.
pub fn energy(z: &[C64], h: &[f64], params: &CrbmParams) -> Result<f64> {
    check_visible(params, z)?;
    check_hidden(params, h)?;
    let pre = Precomputed::new(params)?;
    Ok(energy_with(z, h, params, &pre))
}

/// Energy written symmetrically in `z` and `conj(z)` using the unbiased
/// parameters `b' = P b + Q conj(b)` and `W' = P W + Q conj(W)`:
///
/// ```text
/// E = z^H P z / 2 + conj(z)^H P conj(z) / 2 + z^H Q conj(z) / 2 + conj(z)^H conj(Q) z / 2
///     - z^H b' - conj(z)^H conj(b') - 2 c^T h - z^H W' h - conj(z)^H conj(W') h
/// ```
pub fn energy_symmetric(z: &[C64], h: &[f64], params: &CrbmParams) -> Result<f64> {
    check_visible(params, z)?;
    check_hidden(params, h)?;
    let pre = Precomputed::new(params)?;
    let (i_dim, j_dim) = (params.visible_dim(), params.hidden_dim());
    let mut e = C64::new(0.0, 0.0);
    for i in 0..i_dim {
        let (p, q) = (pre.p[i], pre.q[i]);
        let zi = z[i];
        let zc = zi.conj();
        let b_u = p * params.b[i] + q * params.b[i].conj();
        let mut wh_u = C64::new(0.0, 0.0);
        for j in 0..j_dim {
            let w = params.w.get(i, j);
            wh_u += (p * w + q * w.conj()) * h[j];
        }
        e += 0.5 * zc * p * zi + 0.5 * zi * p * zc + 0.5 * zc * q * zc + 0.5 * zi * q.conj() * zi;
        e -= zc * b_u + zi * b_u.conj();
        e -= zc * wh_u + zi * wh_u.conj();
    }
    let hidden: f64 = params.c.iter().zip(h).map(|(c, h)| c * h).sum();
    Ok(e.re - 2.0 * hidden)
}

/// `zeta = P z + Q conj(z)`, which is both `-dE/dconj(b)` and the visible
/// factor of the hidden pre-activation.
fn precision_weighted(z: &[C64], pre: &Precomputed) -> CVec {
    z.iter()
        .zip(pre.p.iter().zip(&pre.q))
        .map(|(z, (&p, &q))| p * z + q * z.conj())
        .collect()
}

/// Hidden pre-activations `2 c + 2 Re(W'^H z)`.
fn hidden_activation(zeta: &[C64], params: &CrbmParams) -> Vec<f64> {
    let mut act: Vec<f64> = params.c.iter().map(|c| 2.0 * c).collect();
    for (i, zi) in zeta.iter().enumerate() {
        // Re(conj(W'_ij) z_i) = Re(conj(W_ij) zeta_i)
        for (a, w) in act.iter_mut().zip(params.w.row(i)) {
            *a += 2.0 * (w.re * zi.re + w.im * zi.im);
        }
    }
    act
}

/// `p(h_j = 1 | z)`.
pub fn cond_hidden(z: &[C64], params: &CrbmParams) -> Result<Vec<f64>> {
    check_visible(params, z)?;
    let pre = Precomputed::new(params)?;
    Ok(cond_hidden_with(z, params, &pre))
}

fn cond_hidden_with(z: &[C64], params: &CrbmParams, pre: &Precomputed) -> Vec<f64> {
    let zeta = precision_weighted(z, pre);
    hidden_activation(&zeta, params).into_iter().map(sigmoid).collect()
}

/// `p(z | h) = CN(b + W h, diag(gamma), diag(delta))`.
pub fn cond_visible(h: &[f64], params: &CrbmParams) -> Result<ComplexNormalParams> {
    let mu = visible_mean(h, params)?;
    ComplexNormalParams::new(mu, params.gamma(), params.delta())
}

/// Gradient-shaped container mirroring [`CrbmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrbmGradient {
    pub d_b: CVec,
    pub d_c: Vec<f64>,
    pub d_w: CMat,
    pub d_r: Vec<f64>,
    pub d_s: CVec,
}

impl CrbmGradient {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            d_b: vec![C64::new(0.0, 0.0); visible],
            d_c: vec![0.0; hidden],
            d_w: CMat::zeros(visible, hidden),
            d_r: vec![0.0; visible],
            d_s: vec![C64::new(0.0, 0.0); visible],
        }
    }

    pub fn zeros_like(params: &CrbmParams) -> Self {
        Self::zeros(params.visible_dim(), params.hidden_dim())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &CrbmGradient, scale: f64) {
        for (a, b) in self.d_b.iter_mut().zip(&other.d_b) {
            *a += scale * b;
        }
        for (a, b) in self.d_c.iter_mut().zip(&other.d_c) {
            *a += scale * b;
        }
        for (a, b) in self.d_w.as_mut_slice().iter_mut().zip(other.d_w.as_slice()) {
            *a += scale * b;
        }
        for (a, b) in self.d_r.iter_mut().zip(&other.d_r) {
            *a += scale * b;
        }
        for (a, b) in self.d_s.iter_mut().zip(&other.d_s) {
            *a += scale * b;
        }
    }

    /// Euclidean norm over all real and imaginary components.
    pub fn norm(&self) -> f64 {
        let mut total: f64 = self.d_b.iter().map(|x| x.norm_sqr()).sum();
        total += self.d_c.iter().map(|x| x * x).sum::<f64>();
        total += self.d_w.as_slice().iter().map(|x| x.norm_sqr()).sum::<f64>();
        total += self.d_r.iter().map(|x| x * x).sum::<f64>();
        total += self.d_s.iter().map(|x| x.norm_sqr()).sum::<f64>();
        total.sqrt()
    }

    /// Same order as `CrbmParams::flatten`.
    pub fn flatten(&self) -> CVec {
        let mut out = Vec::new();
        out.extend_from_slice(&self.d_b);
        out.extend(self.d_c.iter().map(|&x| C64::new(x, 0.0)));
        out.extend_from_slice(self.d_w.as_slice());
        out.extend(self.d_r.iter().map(|&x| C64::new(x, 0.0)));
        out.extend_from_slice(&self.d_s);
        out
    }
}

/// `-dE/dconj(theta)` for every parameter at a single `(z, h)`; `h` may hold
/// expectations instead of binary states.
///
/// With `zeta = P z + Q conj(z)`, `A = |z|^2 - 2 Re(conj(z) m)` and
/// `G = conj(z)^2 - 2 conj(z) conj(m)` for `m = b + W h`:
///
/// * `b`: `zeta`
/// * `c`: `h`
/// * `W`: `zeta h^T`
/// * `r`: `gamma * ((p^2 + |q|^2) A + 2 p Re(q G)) / 2`
/// * `s`: `conj(delta) * (p q A + p^2 conj(G) / 2 + q^2 G / 2)`
pub fn neg_energy_gradients(z: &[C64], h: &[f64], params: &CrbmParams) -> Result<CrbmGradient> {
    check_visible(params, z)?;
    check_hidden(params, h)?;
    let pre = Precomputed::new(params)?;
    let mut grad = CrbmGradient::zeros_like(params);
    accumulate_neg_energy_gradients(z, h, params, &pre, &mut grad, 1.0);
    Ok(grad)
}

fn accumulate_neg_energy_gradients(
    z: &[C64],
    h: &[f64],
    params: &CrbmParams,
    pre: &Precomputed,
    grad: &mut CrbmGradient,
    scale: f64,
) {
    let m = visible_mean_unchecked(h, params);
    for (gc, &hj) in grad.d_c.iter_mut().zip(h) {
        *gc += scale * hj;
    }
    for i in 0..z.len() {
        let (p, q) = (pre.p[i], pre.q[i]);
        let zi = z[i];
        let zc = zi.conj();
        let zeta = p * zi + q * zc;
        grad.d_b[i] += scale * zeta;
        let szeta = scale * zeta;
        for (gw, &hj) in grad.d_w.row_mut(i).iter_mut().zip(h) {
            *gw += szeta * hj;
        }
        let a = zi.norm_sqr() - 2.0 * (zc * m[i]).re;
        let g = zc * zc - 2.0 * zc * m[i].conj();
        let d_gamma = 0.5 * ((p * p + q.norm_sqr()) * a + 2.0 * p * (q * g).re);
        grad.d_r[i] += scale * pre.gamma[i] * d_gamma;
        let d_delta_bar = p * q * a + 0.5 * p * p * g.conj() + 0.5 * q * q * g;
        grad.d_s[i] += scale * pre.delta[i].conj() * d_delta_bar;
    }
}

/// Per-chain contributions of contrastive divergence.
#[derive(Debug, Clone)]
pub struct ChainTerms {
    /// `-dE/dconj(theta)` at the data point with `E[h | z]`.
    pub data: CrbmGradient,
    /// The same at the end of the chain with `E[h | z_k]`.
    pub model: CrbmGradient,
}

fn run_chain(
    z0: &[C64],
    params: &CrbmParams,
    pre: &Precomputed,
    rng: &mut SeededRng,
    cd_steps: usize,
) -> (CVec, Vec<f64>, CVec, Vec<f64>) {
    let h0 = cond_hidden_with(z0, params, pre);
    let mut probs = h0.clone();
    let mut z: CVec = z0.to_vec();
    for _ in 0..cd_steps {
        let h: Vec<f64> = probs.iter().map(|&p| rng.bernoulli(p)).collect();
        let mu = visible_mean_unchecked(&h, params);
        for i in 0..z.len() {
            let (x, y) = sample_component(pre.gamma[i], pre.delta[i], rng);
            z[i] = mu[i] + C64::new(x, y);
        }
        probs = cond_hidden_with(&z, params, pre);
    }
    (z0.to_vec(), h0, z, probs)
}

fn validate_batch(batch: &[CVec], params: &CrbmParams, cd_steps: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cd_steps == 0 {
        return Err(Error::InvalidConfig("cd_steps must be at least 1".into()));
    }
    for z in batch {
        check_visible(params, z)?;
    }
    Ok(())
}

/// Data and model terms for every chain of a CD-k batch.
///
/// Chain `n` draws from its own stream `SeededRng::new(key, n)`, where `key`
/// is one draw from `rng`, so the result does not depend on evaluation order.
pub fn cd_chain_terms(
    batch: &[CVec],
    params: &CrbmParams,
    rng: &mut SeededRng,
    cd_steps: usize,
) -> Result<Vec<ChainTerms>> {
    validate_batch(batch, params, cd_steps)?;
    let pre = Precomputed::new(params)?;
    let key = rng.fork_key();
    Ok(batch
        .par_iter()
        .enumerate()
        .map(|(n, z0)| {
            let mut chain_rng = SeededRng::new(key, n as u64);
            let (z0, h0, zk, hk) = run_chain(z0, params, &pre, &mut chain_rng, cd_steps);
            let mut data = CrbmGradient::zeros_like(params);
            accumulate_neg_energy_gradients(&z0, &h0, params, &pre, &mut data, 1.0);
            let mut model = CrbmGradient::zeros_like(params);
            accumulate_neg_energy_gradients(&zk, &hk, params, &pre, &mut model, 1.0);
            ChainTerms { data, model }
        })
        .collect())
}

/// Contrastive-divergence estimate of `dL/dconj(theta)`:
/// `<-dE/dconj(theta)>_data - <-dE/dconj(theta)>_model`.
///
/// Hidden expectations are used on the data side and for the final model-side
/// statistics; intermediate chain states are sampled.
pub fn cd_gradient(batch: &[CVec], params: &CrbmParams, rng: &mut SeededRng, cd_steps: usize) -> Result<CrbmGradient> {
    validate_batch(batch, params, cd_steps)?;
    let pre = Precomputed::new(params)?;
    let key = rng.fork_key();
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<CrbmGradient> = batch
        .par_iter()
        .enumerate()
        .map(|(n, z0)| {
            let mut chain_rng = SeededRng::new(key, n as u64);
            let (z0, h0, zk, hk) = run_chain(z0, params, &pre, &mut chain_rng, cd_steps);
            let mut g = CrbmGradient::zeros_like(params);
            accumulate_neg_energy_gradients(&z0, &h0, params, &pre, &mut g, scale);
            accumulate_neg_energy_gradients(&zk, &hk, params, &pre, &mut g, -scale);
            g
        })
        .collect();
    // Fixed summation order regardless of thread count.
    let mut total = CrbmGradient::zeros_like(params);
    for g in &partials {
        total.add_scaled(g, 1.0);
    }
    Ok(total)
}

/// `log sum_h exp(-E(z, h))`, in closed form over factorized hidden units.
pub fn log_unnormalized_marginal(z: &[C64], params: &CrbmParams) -> Result<f64> {
    check_visible(params, z)?;
    let pre = Precomputed::new(params)?;
    let zeros = vec![0.0; params.hidden_dim()];
    let e0 = energy_with(z, &zeros, params, &pre);
    let zeta = precision_weighted(z, &pre);
    let act = hidden_activation(&zeta, params);
    Ok(-e0 + act.into_iter().map(softplus).sum::<f64>())
}

/// `log U(theta)`, by enumerating all `2^J` hidden states and integrating the
/// Gaussian over `z` in closed form for each.
pub fn log_partition(params: &CrbmParams) -> Result<f64> {
    let j_dim = params.hidden_dim();
    if j_dim > MAX_EXACT_HIDDEN {
        return Err(Error::TooManyHidden {
            hidden: j_dim,
            max: MAX_EXACT_HIDDEN,
        });
    }
    params.validate()?;
    let pre = Precomputed::new(params)?;
    let base: f64 = pre
        .gamma
        .iter()
        .zip(&pre.delta)
        .map(|(g, d)| PI.ln() + 0.5 * (g * g - d.norm_sqr()).ln())
        .sum();
    let mut terms = Vec::with_capacity(1 << j_dim);
    for bits in 0..(1usize << j_dim) {
        let h: Vec<f64> = (0..j_dim).map(|j| ((bits >> j) & 1) as f64).collect();
        let m = visible_mean_unchecked(&h, params);
        let mut t = base + 2.0 * params.c.iter().zip(&h).map(|(c, h)| c * h).sum::<f64>();
        for i in 0..m.len() {
            let mc = m[i].conj();
            t += pre.p[i] * m[i].norm_sqr() + (pre.q[i] * mc * mc).re;
        }
        terms.push(t);
    }
    Ok(log_sum_exp(&terms))
}

/// Exact `log p(z)`; only for tiny hidden layers.
pub fn exact_log_likelihood(z: &[C64], params: &CrbmParams) -> Result<f64> {
    let log_u = log_partition(params)?;
    Ok(log_unnormalized_marginal(z, params)? - log_u)
}

/// Mean of `||z - (b + W E[h|z])||^2 / I` over a dataset.
pub fn reconstruction_mse(dataset: &[CVec], params: &CrbmParams) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let pre = Precomputed::new(params)?;
    let mut total = 0.0;
    for z in dataset {
        check_visible(params, z)?;
        let h = cond_hidden_with(z, params, &pre);
        let zhat = visible_mean_unchecked(&h, params);
        total += z.iter().zip(&zhat).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / z.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

/// Draws `n` visible samples, each from an independent Gibbs chain run for
/// `burn_in` sweeps from a random hidden state.
pub fn gibbs_samples(params: &CrbmParams, n: usize, burn_in: usize, rng: &mut SeededRng) -> Result<Vec<CVec>> {
    params.validate()?;
    let pre = Precomputed::new(params)?;
    let key = rng.fork_key();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let mut r = SeededRng::new(key, k as u64);
            let mut h: Vec<f64> = (0..params.hidden_dim()).map(|_| r.bernoulli(0.5)).collect();
            let mut z = vec![C64::new(0.0, 0.0); params.visible_dim()];
            for sweep in 0..=burn_in {
                let mu = visible_mean_unchecked(&h, params);
                for i in 0..z.len() {
                    let (x, y) = sample_component(pre.gamma[i], pre.delta[i], &mut r);
                    z[i] = mu[i] + C64::new(x, y);
                }
                if sweep < burn_in {
                    h = cond_hidden_with(&z, params, &pre)
                        .into_iter()
                        .map(|p| r.bernoulli(p))
                        .collect();
                }
            }
            z
        })
        .collect())
}

/// Mini-batch training configuration shared by both RBM trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub cd_steps: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Log every `log_interval` epochs; 0 disables progress logging.
    pub log_interval: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.cd_steps == 0 {
            return Err(Error::InvalidConfig("cd_steps must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Wall-clock timer for training logs. `std::time::Instant` is unavailable
/// on wasm32-unknown-unknown, where elapsed time reads as 0.
pub(crate) struct Stopwatch {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        return 0.0;
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mse: f64,
    pub wall_seconds: f64,
    pub optimizer: String,
}

/// Shuffled mini-batch CD training. After every update the variance
/// parameters are projected back into the valid region.
pub fn train(dataset: &[CVec], config: &TrainConfig, params: CrbmParams) -> Result<(CrbmParams, Vec<EpochLog>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    params.validate()?;
    for z in dataset {
        check_visible(&params, z)?;
    }
    let mut params = params;
    let mut rng = SeededRng::new(config.seed, 0);
    let mut optimizer = ComplexOptimizer::new(&config.optimizer, params.flat_len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let start = Stopwatch::start();
    let mut flat = params.flatten();
    let mut batch: Vec<CVec> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| dataset[k].clone()));
            let grad = cd_gradient(&batch, &params, &mut rng, config.cd_steps)?;
            optimizer.step(&mut flat, &grad.flatten())?;
            params.unflatten_from(&flat);
            params.project();
            if let Some(parameter) = params.non_finite_field() {
                return Err(Error::NonFiniteParameter { parameter, epoch });
            }
            // Keep projected values authoritative.
            flat = params.flatten();
        }
        let mse = reconstruction_mse(dataset, &params)?;
        log.push(EpochLog {
            epoch,
            mse,
            wall_seconds: start.seconds(),
            optimizer: config.optimizer.name().to_string(),
        });
        if config.log_interval > 0 && epoch % config.log_interval == 0 {
            log::info!("crbm epoch {epoch}: mse {mse:.6e}");
        }
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::cn_log_density;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_params(i: usize, j: usize, rng: &mut SeededRng) -> CrbmParams {
        let mut p = CrbmParams::zeros(i, j);
        for b in p.b.iter_mut() {
            *b = c(0.5 * rng.normal(), 0.5 * rng.normal());
        }
        for cj in p.c.iter_mut() {
            *cj = 0.5 * rng.normal();
        }
        for w in p.w.as_mut_slice() {
            *w = c(0.4 * rng.normal(), 0.4 * rng.normal());
        }
        for k in 0..i {
            p.r[k] = 0.3 * rng.normal();
            let ratio: f64 = 0.05 + 0.85 * rng.uniform();
            p.s[k] = c(p.r[k] + ratio.ln(), std::f64::consts::PI * (2.0 * rng.uniform() - 1.0));
        }
        p
    }

    fn random_z(i: usize, rng: &mut SeededRng) -> CVec {
        (0..i).map(|_| c(rng.normal(), rng.normal())).collect()
    }

    #[test]
    fn precision_examples() {
        let pq = precision_from_variance(&[1.0], &[c(0.0, 0.0)]).unwrap();
        assert_eq!(pq.p[0], 1.0);
        assert_eq!(pq.q[0], c(0.0, 0.0));
        let pq = precision_from_variance(&[2.0], &[c(1.0, 0.0)]).unwrap();
        assert!((pq.p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((pq.q[0] - c(-1.0 / 3.0, 0.0)).norm() < 1e-15);
        let pq = precision_from_variance(&[1.0], &[c(0.0, 0.6)]).unwrap();
        assert!((pq.p[0] - 1.5625).abs() < 1e-12);
        assert!((pq.q[0] - c(0.0, -0.9375)).norm() < 1e-12);
        let (g, d) = variance_from_precision(&pq).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (d[0] - c(0.0, 0.6)).norm() < 1e-12);
        assert!(precision_from_variance(&[1.0], &[c(1.0, 0.1)]).is_err());
    }

    #[test]
    fn energy_examples() {
        let p = CrbmParams::zeros(2, 3);
        let e = energy(&[c(0.0, 0.0), c(0.0, 0.0)], &[0.0; 3], &p).unwrap();
        assert_eq!(e, 0.0);

        let mut p = CrbmParams::zeros(1, 0);
        p.s[0] = c(-800.0, 0.0); // delta underflows to 0: p = 1, q = 0
        let e = energy(&[c(1.0, 1.0)], &[], &p).unwrap();
        assert!((e - 2.0).abs() < 1e-12);
        assert!(energy(&[c(1.0, 1.0)], &[0.0], &p).is_err());
    }

    #[test]
    fn symmetric_form_matches_precision_form() {
        let mut rng = SeededRng::new(3, 0);
        for _ in 0..50 {
            let p = random_params(4, 3, &mut rng);
            let z = random_z(4, &mut rng);
            let h: Vec<f64> = (0..3).map(|_| rng.bernoulli(0.5)).collect();
            let a = energy(&z, &h, &p).unwrap();
            let b = energy_symmetric(&z, &h, &p).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn cond_hidden_examples() {
        let p = CrbmParams::zeros(3, 4);
        let probs = cond_hidden(&[c(1.0, 2.0), c(-1.0, 0.0), c(0.3, 0.3)], &p).unwrap();
        assert!(probs.iter().all(|&x| x == 0.5));

        let mut p = CrbmParams::zeros(1, 1);
        p.s[0] = c(-800.0, 0.0);
        p.w.set(0, 0, c(1.0, 0.0));
        let probs = cond_hidden(&[c(1.0, 1.0)], &p).unwrap();
        assert!((probs[0] - 0.880797077977882).abs() < 1e-12);
    }

    #[test]
    fn cond_hidden_matches_enumeration() {
        let mut rng = SeededRng::new(8, 0);
        for j in 1..=6 {
            let p = random_params(2, j, &mut rng);
            let z = random_z(2, &mut rng);
            let probs = cond_hidden(&z, &p).unwrap();
            let states: Vec<Vec<f64>> = (0..1usize << j)
                .map(|bits| (0..j).map(|k| ((bits >> k) & 1) as f64).collect())
                .collect();
            let log_w: Vec<f64> = states.iter().map(|h| -energy(&z, h, &p).unwrap()).collect();
            let norm = log_sum_exp(&log_w);
            for k in 0..j {
                let on: f64 = states
                    .iter()
                    .zip(&log_w)
                    .filter(|(h, _)| h[k] == 1.0)
                    .map(|(_, lw)| (lw - norm).exp())
                    .sum();
                assert!((on - probs[k]).abs() < 1e-10, "j={j} k={k}: {on} vs {}", probs[k]);
            }
        }
    }

    #[test]
    fn cond_visible_examples() {
        let mut rng = SeededRng::new(2, 0);
        let p = random_params(3, 2, &mut rng);
        let cn = cond_visible(&[0.0, 0.0], &p).unwrap();
        assert_eq!(cn.mu(), &p.b[..]);
        let cn = cond_visible(&[1.0, 1.0], &p).unwrap();
        for i in 0..3 {
            let expect = p.b[i] + p.w.get(i, 0) + p.w.get(i, 1);
            assert!((cn.mu()[i] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn cond_visible_matches_normalized_energy_on_grid() {
        let mut rng = SeededRng::new(21, 0);
        let p = random_params(1, 2, &mut rng);
        let h = [1.0, 0.0];
        let cn = cond_visible(&h, &p).unwrap();
        let mu = cn.mu()[0];
        let sigma = cn.gamma()[0].sqrt();
        let step = sigma / 25.0;
        let n = (20.0 * sigma / step) as i64;
        let mut total = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                let z = mu + c(-10.0 * sigma + a as f64 * step, -10.0 * sigma + b as f64 * step);
                total += (-energy(&[z], &h, &p).unwrap()).exp();
            }
        }
        let log_norm = (total * step * step).ln();
        for _ in 0..10 {
            let z = mu + c(sigma * rng.normal(), sigma * rng.normal());
            let from_energy = -energy(&[z], &h, &p).unwrap() - log_norm;
            let from_cn = cn_log_density(&[z], &cn).unwrap();
            assert!((from_energy - from_cn).abs() < 1e-3);
        }
    }

    #[test]
    fn gradients_vanish_at_origin() {
        let mut rng = SeededRng::new(4, 0);
        let p = random_params(3, 2, &mut rng);
        let g = neg_energy_gradients(&[c(0.0, 0.0); 3], &[0.0, 0.0], &p).unwrap();
        assert!(g.d_b.iter().all(|x| x.norm() == 0.0));
        assert!(g.d_c.iter().all(|&x| x == 0.0));
        assert!(g.d_w.as_slice().iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn circular_bias_gradient() {
        let mut rng = SeededRng::new(6, 0);
        let mut p = random_params(3, 2, &mut rng);
        for s in p.s.iter_mut() {
            s.re = -800.0;
        }
        let z = random_z(3, &mut rng);
        let g = neg_energy_gradients(&z, &[1.0, 0.0], &p).unwrap();
        let gamma = p.gamma();
        for i in 0..3 {
            // conj of the dE/db form conj(z)/gamma
            assert!((g.d_b[i].conj() - z[i].conj() / gamma[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn exact_likelihood_standard_case() {
        let p = CrbmParams {
            s: vec![c(-800.0, 0.0)],
            ..CrbmParams::zeros(1, 1)
        };
        let ll = exact_log_likelihood(&[c(0.0, 0.0)], &p).unwrap();
        assert!((ll + PI.ln()).abs() < 1e-12, "{ll}");
        let too_big = CrbmParams::zeros(1, MAX_EXACT_HIDDEN + 1);
        assert!(matches!(
            exact_log_likelihood(&[c(0.0, 0.0)], &too_big),
            Err(Error::TooManyHidden { .. })
        ));
    }

    #[test]
    fn exact_likelihood_matches_quadrature() {
        let mut rng = SeededRng::new(13, 0);
        let p = random_params(1, 2, &mut rng);
        let g = p.gamma()[0];
        let sigma = g.sqrt();
        let reach = 10.0 * sigma + p.b[0].norm() + p.w.as_slice().iter().map(|w| w.norm()).sum::<f64>();
        let step = sigma / 25.0;
        let n = (2.0 * reach / step) as i64;
        let states = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let mut u = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                let z = c(-reach + a as f64 * step, -reach + b as f64 * step);
                for h in &states {
                    u += (-energy(&[z], h, &p).unwrap()).exp();
                }
            }
        }
        let log_u = (u * step * step).ln();
        for _ in 0..5 {
            let z = [c(rng.normal(), rng.normal())];
            let marg: Vec<f64> = states.iter().map(|h| -energy(&z, h, &p).unwrap()).collect();
            let oracle = log_sum_exp(&marg) - log_u;
            let ll = exact_log_likelihood(&z, &p).unwrap();
            assert!((ll - oracle).abs() < 1e-3, "{ll} vs {oracle}");
        }
    }

    /// `-dE/dconj(theta)` by central differences: `-(dE/dRe + i dE/dIm) / 2`.
    fn fd_wirtinger(mut f: impl FnMut(C64) -> f64, real: bool) -> C64 {
        let eps = 1e-6;
        let d_re = (f(c(eps, 0.0)) - f(c(-eps, 0.0))) / (2.0 * eps);
        let d_im = if real {
            0.0
        } else {
            (f(c(0.0, eps)) - f(c(0.0, -eps))) / (2.0 * eps)
        };
        -0.5 * c(d_re, d_im)
    }

    #[test]
    fn energy_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(31, 0);
        for _ in 0..10 {
            let p = random_params(3, 2, &mut rng);
            let z = random_z(3, &mut rng);
            let h = [rng.uniform(), rng.uniform()];
            let g = neg_energy_gradients(&z, &h, &p).unwrap();
            let e = |q: &CrbmParams| energy(&z, &h, q).unwrap();
            let tol = |x: C64| 1e-6 * x.norm().max(1.0);
            for i in 0..3 {
                let fd = fd_wirtinger(
                    |d| {
                        let mut q = p.clone();
                        q.b[i] += d;
                        e(&q)
                    },
                    false,
                );
                assert!((fd - g.d_b[i]).norm() < tol(fd), "b {fd} {}", g.d_b[i]);
                let fd = fd_wirtinger(
                    |d| {
                        let mut q = p.clone();
                        q.r[i] += d.re;
                        e(&q)
                    },
                    true,
                );
                assert!((fd.re - g.d_r[i]).abs() < tol(fd), "r {fd} {}", g.d_r[i]);
                let fd = fd_wirtinger(
                    |d| {
                        let mut q = p.clone();
                        q.s[i] += d;
                        e(&q)
                    },
                    false,
                );
                assert!((fd - g.d_s[i]).norm() < tol(fd), "s {fd} {}", g.d_s[i]);
                for j in 0..2 {
                    let fd = fd_wirtinger(
                        |d| {
                            let mut q = p.clone();
                            q.w.set(i, j, q.w.get(i, j) + d);
                            e(&q)
                        },
                        false,
                    );
                    assert!((fd - g.d_w.get(i, j)).norm() < tol(fd));
                }
            }
            for j in 0..2 {
                let fd = fd_wirtinger(
                    |d| {
                        let mut q = p.clone();
                        q.c[j] += d.re;
                        e(&q)
                    },
                    true,
                );
                assert!((fd.re - g.d_c[j]).abs() < tol(fd));
            }
        }
    }

    #[test]
    fn data_minus_exact_model_term_is_likelihood_gradient() {
        // d log p(z)/dconj(theta) = -dE/dconj(theta) at E[h|z] minus its model
        // expectation; check the data side through the marginal.
        let mut rng = SeededRng::new(37, 0);
        let p = random_params(2, 3, &mut rng);
        let z = random_z(2, &mut rng);
        let h = cond_hidden(&z, &p).unwrap();
        let g = neg_energy_gradients(&z, &h, &p).unwrap();
        let f = |q: &CrbmParams| log_unnormalized_marginal(&z, q).unwrap();
        for i in 0..2 {
            let fd = -fd_wirtinger(
                |d| {
                    let mut q = p.clone();
                    q.s[i] += d;
                    f(&q)
                },
                false,
            );
            assert!((fd - g.d_s[i]).norm() < 1e-6);
            let fd = -fd_wirtinger(
                |d| {
                    let mut q = p.clone();
                    q.b[i] += d;
                    f(&q)
                },
                false,
            );
            assert!((fd - g.d_b[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn cd_gradient_is_deterministic() {
        let mut rng = SeededRng::new(1, 0);
        let p = random_params(3, 4, &mut rng);
        let batch: Vec<CVec> = (0..16).map(|_| random_z(3, &mut rng)).collect();
        let g1 = cd_gradient(&batch, &p, &mut SeededRng::new(5, 0), 1).unwrap();
        let g2 = cd_gradient(&batch, &p, &mut SeededRng::new(5, 0), 1).unwrap();
        assert_eq!(g1, g2);
        assert!(matches!(
            cd_gradient(&[], &p, &mut SeededRng::new(5, 0), 1),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        use crate::optim::CsaConfig;
        let mut rng = SeededRng::new(9, 0);
        let data: Vec<CVec> = (0..40).map(|_| random_z(2, &mut rng)).collect();
        let p0 = CrbmParams::init(&data, 3, &CrbmInit::default(), &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            cd_steps: 1,
            optimizer: OptimizerConfig::Csa(CsaConfig {
                alpha: c(0.0, 0.0),
                momentum: 0.0,
            }),
            seed: 3,
            log_interval: 0,
        };
        let (p1, _) = train(&data, &cfg, p0.clone()).unwrap();
        assert_eq!(p0, p1);
    }

    #[test]
    fn projection_restores_positive_definiteness() {
        let mut p = CrbmParams::zeros(2, 1);
        p.r = vec![0.5, -20.0];
        p.s = vec![c(0.6, 1.0), c(-20.0, 0.0)];
        p.project();
        let gamma = p.gamma();
        let delta = p.delta();
        assert!((delta[0].norm() - DELTA_TARGET * gamma[0]).abs() < 1e-12);
        assert!((delta[0].arg() - 1.0).abs() < 1e-12);
        assert!((gamma[1] - GAMMA_FLOOR).abs() < 1e-15);
        assert!(p.validate().is_ok());
    }
}
