//! Gaussian-Bernoulli RBM baseline over real vectors, and the mapping that
//! rewrites a CRBM as a GB-RBM on concatenated `[Re; Im]` vectors with a
//! cross term between the two halves.
//!
//! Energy, with `Sigma = diag(sigma^2)`:
//!
//! ```text
//! E(v, h) = v^T Sigma^-1 v / 2 - b^T Sigma^-1 v - c^T h - v^T Sigma^-1 W h
//! ```
//!
//! Gradients here are ordinary real partial derivatives of `-E`.

use rayon::prelude::*;

use crate::complex::{CVec, Matrix, RMat, SeededRng, C64};
use crate::crbm::{CrbmParams, EpochLog, TrainConfig};
use crate::error::{check_len, Error, Result};
use crate::optim::RealOptimizer;

/// Lower bound on `log sigma`, matching the CRBM variance floor.
pub const LOG_SIGMA_FLOOR: f64 = -4.605170185988091; // ln(1e-2)

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Splits complex vectors into the block layout `[Re z; Im z]`.
pub fn to_block(z: &[C64]) -> Vec<f64> {
    z.iter().map(|z| z.re).chain(z.iter().map(|z| z.im)).collect()
}

/// Inverse of [`to_block`]; `v` must have even length.
pub fn from_block(v: &[f64]) -> Result<CVec> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            context: "from_block length parity",
            expected: v.len() + 1,
            found: v.len(),
        });
    }
    let half = v.len() / 2;
    Ok((0..half).map(|i| C64::new(v[i], v[half + i])).collect())
}

/// GB-RBM parameter set `{b, c, W, log sigma}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbRbmParams {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `V x J`, row-major.
    pub w: RMat,
    pub log_sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbRbmInit {
    pub weight_std: f64,
    pub log_sigma: f64,
}

impl Default for GbRbmInit {
    /// `sigma^2 = 1/2` per real component: the same starting density as a
    /// CRBM with `gamma = 1, delta = 0` on the block layout.
    fn default() -> Self {
        Self {
            weight_std: 0.01,
            log_sigma: 0.5 * 0.5f64.ln(),
        }
    }
}

impl GbRbmParams {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            b: vec![0.0; visible],
            c: vec![0.0; hidden],
            w: RMat::zeros(visible, hidden),
            log_sigma: vec![0.0; visible],
        }
    }

    pub fn init(dataset: &[Vec<f64>], hidden: usize, init: &GbRbmInit, rng: &mut SeededRng) -> Result<Self> {
        let first = dataset.first().ok_or(Error::EmptyBatch)?;
        let visible = first.len();
        let mut mean = vec![0.0; visible];
        for v in dataset {
            check_len("GbRbmParams::init sample", visible, v.len())?;
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let n = dataset.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(Self {
            b: mean,
            c: vec![0.0; hidden],
            w: Matrix::from_fn(visible, hidden, |_, _| init.weight_std * rng.normal()),
            log_sigma: vec![init.log_sigma; visible],
        })
    }

    pub fn visible_dim(&self) -> usize {
        self.b.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.c.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (v, j) = (self.visible_dim(), self.hidden_dim());
        check_len("GbRbmParams W rows", v, self.w.rows())?;
        check_len("GbRbmParams W cols", j, self.w.cols())?;
        check_len("GbRbmParams log_sigma", v, self.log_sigma.len())?;
        if let Some(name) = self.non_finite_field() {
            return Err(Error::InvalidConfig(format!("non-finite GB-RBM parameter `{name}`")));
        }
        Ok(())
    }

    fn non_finite_field(&self) -> Option<&'static str> {
        let finite = |x: &[f64]| x.iter().all(|v| v.is_finite());
        if !finite(&self.b) {
            Some("b")
        } else if !finite(&self.c) {
            Some("c")
        } else if !finite(self.w.as_slice()) {
            Some("W")
        } else if !finite(&self.log_sigma) {
            Some("log_sigma")
        } else {
            None
        }
    }

    fn project(&mut self) {
        for l in self.log_sigma.iter_mut() {
            if *l < LOG_SIGMA_FLOOR {
                *l = LOG_SIGMA_FLOOR;
            }
        }
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.b);
        out.extend_from_slice(&self.c);
        out.extend_from_slice(self.w.as_slice());
        out.extend_from_slice(&self.log_sigma);
        out
    }

    fn unflatten_from(&mut self, flat: &[f64]) {
        let (v, j) = (self.visible_dim(), self.hidden_dim());
        let mut at = 0;
        self.b.copy_from_slice(&flat[at..at + v]);
        at += v;
        self.c.copy_from_slice(&flat[at..at + j]);
        at += j;
        self.w.as_mut_slice().copy_from_slice(&flat[at..at + v * j]);
        at += v * j;
        self.log_sigma.copy_from_slice(&flat[at..at + v]);
    }
}

fn check_v(params: &GbRbmParams, v: &[f64]) -> Result<()> {
    check_len("GB-RBM visible vector", params.visible_dim(), v.len())
}

fn check_h(params: &GbRbmParams, h: &[f64]) -> Result<()> {
    check_len("GB-RBM hidden vector", params.hidden_dim(), h.len())
}

fn mean_unchecked(h: &[f64], params: &GbRbmParams) -> Vec<f64> {
    let wh = params.w.mul_vec(h);
    params.b.iter().zip(wh).map(|(b, m)| b + m).collect()
}

/// `E(v, h)`.
pub fn gbrbm_energy(v: &[f64], h: &[f64], params: &GbRbmParams) -> Result<f64> {
    check_v(params, v)?;
    check_h(params, h)?;
    let wh = params.w.mul_vec(h);
    let mut e = 0.0;
    for i in 0..v.len() {
        let var = (2.0 * params.log_sigma[i]).exp();
        e += (0.5 * v[i] * v[i] - params.b[i] * v[i] - v[i] * wh[i]) / var;
    }
    Ok(e - params.c.iter().zip(h).map(|(c, h)| c * h).sum::<f64>())
}

/// `p(h_j = 1 | v) = sigmoid(c_j + sum_i W_ij v_i / sigma_i^2)`.
pub fn gbrbm_cond_hidden(v: &[f64], params: &GbRbmParams) -> Result<Vec<f64>> {
    check_v(params, v)?;
    Ok(cond_hidden_unchecked(v, params))
}

fn cond_hidden_unchecked(v: &[f64], params: &GbRbmParams) -> Vec<f64> {
    let scaled: Vec<f64> = v
        .iter()
        .zip(&params.log_sigma)
        .map(|(x, l)| x * (-2.0 * l).exp())
        .collect();
    params
        .w
        .tr_mul_vec(&scaled)
        .into_iter()
        .zip(&params.c)
        .map(|(a, c)| sigmoid(a + c))
        .collect()
}

/// Mean of `p(v | h) = N(b + W h, Sigma)`.
pub fn gbrbm_visible_mean(h: &[f64], params: &GbRbmParams) -> Result<Vec<f64>> {
    check_h(params, h)?;
    Ok(mean_unchecked(h, params))
}

/// Real-partial gradients of `-E`, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GbRbmGradient {
    pub d_b: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_w: RMat,
    pub d_log_sigma: Vec<f64>,
}

impl GbRbmGradient {
    fn zeros_like(params: &GbRbmParams) -> Self {
        Self {
            d_b: vec![0.0; params.visible_dim()],
            d_c: vec![0.0; params.hidden_dim()],
            d_w: RMat::zeros(params.visible_dim(), params.hidden_dim()),
            d_log_sigma: vec![0.0; params.visible_dim()],
        }
    }

    fn add_scaled(&mut self, other: &GbRbmGradient, scale: f64) {
        let pairs = [
            (&mut self.d_b, &other.d_b),
            (&mut self.d_c, &other.d_c),
            (&mut self.d_log_sigma, &other.d_log_sigma),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (x, y) in self.d_w.as_mut_slice().iter_mut().zip(other.d_w.as_slice()) {
            *x += scale * y;
        }
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.d_b);
        out.extend_from_slice(&self.d_c);
        out.extend_from_slice(self.d_w.as_slice());
        out.extend_from_slice(&self.d_log_sigma);
        out
    }
}

/// `-dE/dtheta` at `(v, h)`:
/// `b: v / sigma^2`, `c: h`, `W: (v / sigma^2) h^T`,
/// `log sigma: (v^2 - 2 v (b + W h)) / sigma^2`.
pub fn gbrbm_neg_energy_gradients(v: &[f64], h: &[f64], params: &GbRbmParams) -> Result<GbRbmGradient> {
    check_v(params, v)?;
    check_h(params, h)?;
    let mut g = GbRbmGradient::zeros_like(params);
    accumulate(v, h, params, &mut g, 1.0);
    Ok(g)
}

fn accumulate(v: &[f64], h: &[f64], params: &GbRbmParams, g: &mut GbRbmGradient, scale: f64) {
    let m = mean_unchecked(h, params);
    for (gc, hj) in g.d_c.iter_mut().zip(h) {
        *gc += scale * hj;
    }
    for i in 0..v.len() {
        let inv_var = (-2.0 * params.log_sigma[i]).exp();
        let x = v[i] * inv_var;
        g.d_b[i] += scale * x;
        for (gw, hj) in g.d_w.row_mut(i).iter_mut().zip(h) {
            *gw += scale * x * hj;
        }
        g.d_log_sigma[i] += scale * (v[i] * v[i] - 2.0 * v[i] * m[i]) * inv_var;
    }
}

fn sample_visible(h: &[f64], params: &GbRbmParams, rng: &mut SeededRng) -> Vec<f64> {
    mean_unchecked(h, params)
        .into_iter()
        .zip(&params.log_sigma)
        .map(|(m, l)| m + l.exp() * rng.normal())
        .collect()
}

/// CD-k estimate of `dL/dtheta`, with the same chain and stream layout as
/// the CRBM estimator.
pub fn gbrbm_cd_gradient(
    batch: &[Vec<f64>],
    params: &GbRbmParams,
    rng: &mut SeededRng,
    cd_steps: usize,
) -> Result<GbRbmGradient> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cd_steps == 0 {
        return Err(Error::InvalidConfig("cd_steps must be at least 1".into()));
    }
    for v in batch {
        check_v(params, v)?;
    }
    let key = rng.fork_key();
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<GbRbmGradient> = batch
        .par_iter()
        .enumerate()
        .map(|(n, v0)| {
            let mut r = SeededRng::new(key, n as u64);
            let h0 = cond_hidden_unchecked(v0, params);
            let mut probs = h0.clone();
            let mut v = v0.clone();
            for _ in 0..cd_steps {
                let h: Vec<f64> = probs.iter().map(|&p| r.bernoulli(p)).collect();
                v = sample_visible(&h, params, &mut r);
                probs = cond_hidden_unchecked(&v, params);
            }
            let mut g = GbRbmGradient::zeros_like(params);
            accumulate(v0, &h0, params, &mut g, scale);
            accumulate(&v, &probs, params, &mut g, -scale);
            g
        })
        .collect();
    let mut total = GbRbmGradient::zeros_like(params);
    for g in &partials {
        total.add_scaled(g, 1.0);
    }
    Ok(total)
}

/// Mean over the dataset of `||v - (b + W E[h|v])||^2 / V`.
pub fn gbrbm_reconstruction_mse(dataset: &[Vec<f64>], params: &GbRbmParams) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for v in dataset {
        check_v(params, v)?;
        let h = cond_hidden_unchecked(v, params);
        let m = mean_unchecked(&h, params);
        total += v.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / v.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

/// Mini-batch CD training with SA or Adam.
pub fn gbrbm_train(
    dataset: &[Vec<f64>],
    config: &TrainConfig,
    params: GbRbmParams,
) -> Result<(GbRbmParams, Vec<EpochLog>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    params.validate()?;
    for v in dataset {
        check_v(&params, v)?;
    }
    let mut params = params;
    let mut rng = SeededRng::new(config.seed, 0);
    let mut flat = params.flatten();
    let mut optimizer = RealOptimizer::new(&config.optimizer, flat.len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let start = crate::crbm::Stopwatch::start();
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| dataset[k].clone()));
            let grad = gbrbm_cd_gradient(&batch, &params, &mut rng, config.cd_steps)?;
            optimizer.step(&mut flat, &grad.flatten())?;
            params.unflatten_from(&flat);
            params.project();
            if let Some(parameter) = params.non_finite_field() {
                return Err(Error::NonFiniteParameter { parameter, epoch });
            }
            flat = params.flatten();
        }
        let mse = gbrbm_reconstruction_mse(dataset, &params)?;
        log.push(EpochLog {
            epoch,
            mse,
            wall_seconds: start.seconds(),
            optimizer: config.optimizer.name().to_string(),
        });
        if config.log_interval > 0 && epoch % config.log_interval == 0 {
            log::info!("gbrbm epoch {epoch}: mse {mse:.6e}");
        }
    }
    Ok((params, log))
}

/// Independent Gibbs chains from random hidden states.
pub fn gbrbm_gibbs_samples(
    params: &GbRbmParams,
    n: usize,
    burn_in: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let key = rng.fork_key();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let mut r = SeededRng::new(key, k as u64);
            let mut h: Vec<f64> = (0..params.hidden_dim()).map(|_| r.bernoulli(0.5)).collect();
            let mut v = sample_visible(&h, params, &mut r);
            for _ in 0..burn_in {
                h = cond_hidden_unchecked(&v, params)
                    .into_iter()
                    .map(|p| r.bernoulli(p))
                    .collect();
                v = sample_visible(&h, params, &mut r);
            }
            v
        })
        .collect())
}

/// GB-RBM with tied per-dimension variances equivalent to a CRBM whose
/// pseudo-variance is zero: `sigma^2 = gamma / 2` on both halves, block
/// weights `[Re W; Im W]` and hidden bias `2 c`.
pub fn gbrbm_from_circular_crbm(params: &CrbmParams) -> Result<GbRbmParams> {
    params.validate()?;
    let (i_dim, j_dim) = (params.visible_dim(), params.hidden_dim());
    let w = Matrix::from_fn(2 * i_dim, j_dim, |row, j| {
        if row < i_dim {
            params.w.get(row, j).re
        } else {
            params.w.get(row - i_dim, j).im
        }
    });
    let log_sigma: Vec<f64> = params
        .r
        .iter()
        .chain(&params.r)
        .map(|r| 0.5 * (r - 2f64.ln()))
        .collect();
    Ok(GbRbmParams {
        b: to_block(&params.b),
        c: params.c.iter().map(|c| 2.0 * c).collect(),
        w,
        log_sigma,
    })
}

/// CRBM parameters rewritten for the concatenated `[x; y] = [Re z; Im z]`
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatMapping {
    /// Diagonal of `Sigma_x`.
    pub sigma_x: Vec<f64>,
    /// Diagonal of `Sigma_y`.
    pub sigma_y: Vec<f64>,
    /// Diagonal of the cross term `R_xy`.
    pub r_xy: Vec<f64>,
    pub b_x: Vec<f64>,
    pub b_y: Vec<f64>,
    pub w_x: RMat,
    pub w_y: RMat,
    /// Hidden bias in the concatenated energy's `-c^T h` convention.
    pub c: Vec<f64>,
}

/// Maps CRBM parameters to the concatenated form:
///
/// ```text
/// Sigma_x = 1 / (2 (p + q_R))       Sigma_y = 1 / (2 (p - q_R))       R_xy = 2 q_I
/// b_x = b_R + q_I b_I / (p + q_R)   b_y = b_I + q_I b_R / (p - q_R)
/// W_x = W_R + q_I W_I / (p + q_R)   W_y = W_I + q_I W_R / (p - q_R)
/// ```
///
/// The CRBM energy carries `-2 c^T h`, so the mapped hidden bias is `2 c`.
pub fn crbm_to_concat_params(params: &CrbmParams) -> Result<ConcatMapping> {
    let pq = params.precision()?;
    let (i_dim, j_dim) = (params.visible_dim(), params.hidden_dim());
    let mut plus = Vec::with_capacity(i_dim);
    let mut minus = Vec::with_capacity(i_dim);
    for index in 0..i_dim {
        let (a, d) = (pq.p[index] + pq.q[index].re, pq.p[index] - pq.q[index].re);
        if !(a > 0.0 && d > 0.0) {
            return Err(Error::MappingUndefined { index });
        }
        plus.push(a);
        minus.push(d);
    }
    let qi: Vec<f64> = pq.q.iter().map(|q| q.im).collect();
    let b_x = (0..i_dim)
        .map(|i| params.b[i].re + qi[i] * params.b[i].im / plus[i])
        .collect();
    let b_y = (0..i_dim)
        .map(|i| params.b[i].im + qi[i] * params.b[i].re / minus[i])
        .collect();
    let w_x = Matrix::from_fn(i_dim, j_dim, |i, j| {
        let w = params.w.get(i, j);
        w.re + qi[i] * w.im / plus[i]
    });
    let w_y = Matrix::from_fn(i_dim, j_dim, |i, j| {
        let w = params.w.get(i, j);
        w.im + qi[i] * w.re / minus[i]
    });
    Ok(ConcatMapping {
        sigma_x: plus.iter().map(|a| 0.5 / a).collect(),
        sigma_y: minus.iter().map(|d| 0.5 / d).collect(),
        r_xy: qi.iter().map(|q| 2.0 * q).collect(),
        b_x,
        b_y,
        w_x,
        w_y,
        c: params.c.iter().map(|c| 2.0 * c).collect(),
    })
}

/// Concatenated energy
///
/// ```text
/// E = x^T Sigma_x^-1 x / 2 + x^T R_xy y + y^T Sigma_y^-1 y / 2
///     - b_x^T Sigma_x^-1 x - b_y^T Sigma_y^-1 y - c^T h
///     - x^T Sigma_x^-1 W_x h - y^T Sigma_y^-1 W_y h
/// ```
pub fn concat_energy(x: &[f64], y: &[f64], h: &[f64], mapping: &ConcatMapping) -> Result<f64> {
    let i_dim = mapping.sigma_x.len();
    check_len("concat_energy x", i_dim, x.len())?;
    check_len("concat_energy y", i_dim, y.len())?;
    check_len("concat_energy h", mapping.c.len(), h.len())?;
    let wxh = mapping.w_x.mul_vec(h);
    let wyh = mapping.w_y.mul_vec(h);
    let mut e = 0.0;
    for i in 0..i_dim {
        let (sx, sy) = (mapping.sigma_x[i], mapping.sigma_y[i]);
        e += 0.5 * x[i] * x[i] / sx + x[i] * mapping.r_xy[i] * y[i] + 0.5 * y[i] * y[i] / sy;
        e -= mapping.b_x[i] * x[i] / sx + mapping.b_y[i] * y[i] / sy;
        e -= x[i] * wxh[i] / sx + y[i] * wyh[i] / sy;
    }
    Ok(e - mapping.c.iter().zip(h).map(|(c, h)| c * h).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crbm::{cond_hidden, energy, log_sum_exp, neg_energy_gradients};
    use crate::optim::{OptimizerConfig, SaConfig};

    /// Exact `p(h_j = 1 | v)` by enumerating `2^J` hidden states.
    fn enumerate_hidden_marginals(energy: impl Fn(&[f64]) -> f64, hidden: usize) -> Vec<f64> {
        let states: Vec<Vec<f64>> = (0..1usize << hidden)
            .map(|bits| (0..hidden).map(|k| ((bits >> k) & 1) as f64).collect())
            .collect();
        let log_w: Vec<f64> = states.iter().map(|h| -energy(h)).collect();
        let norm = log_sum_exp(&log_w);
        (0..hidden)
            .map(|k| {
                states
                    .iter()
                    .zip(&log_w)
                    .filter(|(h, _)| h[k] == 1.0)
                    .map(|(_, lw)| (lw - norm).exp())
                    .sum()
            })
            .collect()
    }

    fn random_gb(v: usize, j: usize, rng: &mut SeededRng) -> GbRbmParams {
        GbRbmParams {
            b: (0..v).map(|_| rng.normal()).collect(),
            c: (0..j).map(|_| rng.normal()).collect(),
            w: Matrix::from_fn(v, j, |_, _| 0.5 * rng.normal()),
            log_sigma: (0..v).map(|_| 0.3 * rng.normal()).collect(),
        }
    }

    fn random_crbm(i: usize, j: usize, rng: &mut SeededRng, real_delta: bool) -> CrbmParams {
        let mut p = CrbmParams::zeros(i, j);
        for k in 0..i {
            p.b[k] = C64::new(rng.normal(), rng.normal());
            p.r[k] = 0.3 * rng.normal();
            let ratio: f64 = 0.05 + 0.9 * rng.uniform();
            let phase = if real_delta {
                if rng.uniform() < 0.5 {
                    0.0
                } else {
                    std::f64::consts::PI
                }
            } else {
                std::f64::consts::PI * (2.0 * rng.uniform() - 1.0)
            };
            p.s[k] = C64::new(p.r[k] + ratio.ln(), phase);
        }
        for c in p.c.iter_mut() {
            *c = rng.normal();
        }
        for w in p.w.as_mut_slice() {
            *w = C64::new(0.5 * rng.normal(), 0.5 * rng.normal());
        }
        p
    }

    #[test]
    fn energy_examples() {
        let p = random_gb(3, 2, &mut SeededRng::new(1, 0));
        assert_eq!(gbrbm_energy(&[0.0; 3], &[0.0; 2], &p).unwrap(), 0.0);
        let mut p = GbRbmParams::zeros(2, 1);
        p.b = vec![1.5, -2.0];
        let e = gbrbm_energy(&p.b.clone(), &[0.0], &p).unwrap();
        assert!((e + 0.5 * (1.5f64.powi(2) + 4.0)).abs() < 1e-15);
    }

    #[test]
    fn cond_hidden_matches_enumeration() {
        let mut rng = SeededRng::new(2, 0);
        for j in 1..=8 {
            let p = random_gb(3, j, &mut rng);
            let v: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let oracle = enumerate_hidden_marginals(|h| gbrbm_energy(&v, h, &p).unwrap(), j);
            let probs = gbrbm_cond_hidden(&v, &p).unwrap();
            for (a, b) in probs.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn binary_visible_instance_shares_hidden_conditional() {
        // With sigma = 1 and binary v, v^2 / 2 = v / 2 is linear in v, so the
        // binary-binary energy -b^T v - c^T h - v^T W h has the same p(h|v).
        let mut rng = SeededRng::new(3, 0);
        let mut p = random_gb(4, 3, &mut rng);
        p.log_sigma = vec![0.0; 4];
        let v: Vec<f64> = (0..4).map(|_| rng.bernoulli(0.5)).collect();
        let bb = |h: &[f64]| {
            let wh = p.w.mul_vec(h);
            -(0..4).map(|i| p.b[i] * v[i] + v[i] * wh[i]).sum::<f64>()
                - p.c.iter().zip(h).map(|(c, h)| c * h).sum::<f64>()
        };
        let oracle = enumerate_hidden_marginals(bb, 3);
        let probs = gbrbm_cond_hidden(&v, &p).unwrap();
        for (a, b) in probs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(4, 0);
        let p = random_gb(3, 2, &mut rng);
        let v: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let h = [0.3, 0.8];
        let g = gbrbm_neg_energy_gradients(&v, &h, &p).unwrap();
        let eps = 1e-6;
        let fd = |f: &dyn Fn(&mut GbRbmParams, f64)| {
            let (mut a, mut b) = (p.clone(), p.clone());
            f(&mut a, eps);
            f(&mut b, -eps);
            -(gbrbm_energy(&v, &h, &a).unwrap() - gbrbm_energy(&v, &h, &b).unwrap()) / (2.0 * eps)
        };
        for i in 0..3 {
            assert!((fd(&|q, d| q.b[i] += d) - g.d_b[i]).abs() < 1e-7);
            assert!((fd(&|q, d| q.log_sigma[i] += d) - g.d_log_sigma[i]).abs() < 1e-6);
            for j in 0..2 {
                let got = fd(&|q, d| q.w.set(i, j, q.w.get(i, j) + d));
                assert!((got - g.d_w.get(i, j)).abs() < 1e-7);
            }
        }
        for j in 0..2 {
            assert!((fd(&|q, d| q.c[j] += d) - g.d_c[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn bias_gradient_x_ignores_y() {
        let mut rng = SeededRng::new(5, 0);
        let p = random_gb(4, 2, &mut rng);
        let mut v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let a = gbrbm_neg_energy_gradients(&v, &[1.0, 0.0], &p).unwrap();
        v[2] += 1.7;
        v[3] -= 0.4;
        let b = gbrbm_neg_energy_gradients(&v, &[1.0, 0.0], &p).unwrap();
        assert_eq!(a.d_b[..2], b.d_b[..2]);
    }

    #[test]
    fn real_delta_mapping_reduces_to_parts() {
        let mut rng = SeededRng::new(6, 0);
        let p = random_crbm(3, 2, &mut rng, true);
        let m = crbm_to_concat_params(&p).unwrap();
        for i in 0..3 {
            assert!(m.r_xy[i].abs() < 1e-15);
            assert!((m.b_x[i] - p.b[i].re).abs() < 1e-15);
            assert!((m.b_y[i] - p.b[i].im).abs() < 1e-15);
            for j in 0..2 {
                assert!((m.w_x.get(i, j) - p.w.get(i, j).re).abs() < 1e-15);
                assert!((m.w_y.get(i, j) - p.w.get(i, j).im).abs() < 1e-15);
            }
        }
        let unit = CrbmParams {
            s: vec![C64::new(-800.0, 0.0)],
            ..CrbmParams::zeros(1, 1)
        };
        let m = crbm_to_concat_params(&unit).unwrap();
        assert_eq!((m.sigma_x[0], m.sigma_y[0]), (0.5, 0.5));
    }

    #[test]
    fn concat_energy_equals_crbm_energy() {
        let mut rng = SeededRng::new(7, 0);
        for n in 0..100 {
            let p = random_crbm(3, 2, &mut rng, n % 2 == 0);
            let z: CVec = (0..3).map(|_| C64::new(rng.normal(), rng.normal())).collect();
            let h: Vec<f64> = (0..2).map(|_| rng.bernoulli(0.5)).collect();
            let m = crbm_to_concat_params(&p).unwrap();
            let x: Vec<f64> = z.iter().map(|z| z.re).collect();
            let y: Vec<f64> = z.iter().map(|z| z.im).collect();
            let a = concat_energy(&x, &y, &h, &m).unwrap();
            let b = energy(&z, &h, &p).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_cross_term_splits_into_halves() {
        let mut rng = SeededRng::new(8, 0);
        let p = random_crbm(2, 2, &mut rng, true);
        let m = crbm_to_concat_params(&p).unwrap();
        let x = [0.4, -1.0];
        let y = [0.2, 0.9];
        let h = [1.0, 0.0];
        let half = |v: &[f64], s: &[f64], b: &[f64], w: &RMat| {
            let wh = w.mul_vec(&h);
            (0..2)
                .map(|i| 0.5 * v[i] * v[i] / s[i] - b[i] * v[i] / s[i] - v[i] * wh[i] / s[i])
                .sum::<f64>()
        };
        let split = half(&x, &m.sigma_x, &m.b_x, &m.w_x) + half(&y, &m.sigma_y, &m.b_y, &m.w_y)
            - m.c.iter().zip(&h).map(|(c, h)| c * h).sum::<f64>();
        assert!((concat_energy(&x, &y, &h, &m).unwrap() - split).abs() < 1e-12);
        let zeros = [0.0, 0.0];
        assert_eq!(concat_energy(&zeros, &zeros, &[0.0, 0.0], &m).unwrap(), 0.0);
    }

    #[test]
    fn mapping_near_boundary_and_invalid() {
        // |q| < p for every valid covariance, so p +/- q_R stays positive even
        // with delta almost equal to gamma.
        let mut p = CrbmParams::zeros(1, 1);
        p.s[0] = C64::new((1.0f64 - 1e-9).ln(), 0.0);
        let m = crbm_to_concat_params(&p).unwrap();
        assert!(m.sigma_x[0] > 0.0 && m.sigma_y[0] > 0.0);
        p.s[0] = C64::new(0.0, 0.0);
        assert!(matches!(
            crbm_to_concat_params(&p),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn circular_crbm_matches_gbrbm() {
        let mut rng = SeededRng::new(9, 0);
        let mut p = random_crbm(3, 2, &mut rng, true);
        for s in p.s.iter_mut() {
            s.re = -800.0;
        }
        let gb = gbrbm_from_circular_crbm(&p).unwrap();
        for _ in 0..10 {
            let z: CVec = (0..3).map(|_| C64::new(rng.normal(), rng.normal())).collect();
            let v = to_block(&z);
            let h = [rng.uniform(), rng.uniform()];
            let a = energy(&z, &h, &p).unwrap();
            let b = gbrbm_energy(&v, &h, &gb).unwrap();
            assert!((a - b).abs() < 1e-9);
            let pa = cond_hidden(&z, &p).unwrap();
            let pb = gbrbm_cond_hidden(&v, &gb).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                assert!((x - y).abs() < 1e-12);
            }
            // Wirtinger d/dconj(b) = (d/dRe + i d/dIm) / 2.
            let ga = neg_energy_gradients(&z, &h, &p).unwrap();
            let gbg = gbrbm_neg_energy_gradients(&v, &h, &gb).unwrap();
            for i in 0..3 {
                assert!((2.0 * ga.d_b[i].re - gbg.d_b[i]).abs() < 1e-9);
                assert!((2.0 * ga.d_b[i].im - gbg.d_b[3 + i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn block_layout_roundtrip() {
        let z = vec![C64::new(1.0, 2.0), C64::new(-3.0, 4.0)];
        assert_eq!(to_block(&z), vec![1.0, -3.0, 2.0, 4.0]);
        assert_eq!(from_block(&to_block(&z)).unwrap(), z);
        assert!(from_block(&[1.0, 2.0, 3.0]).is_err());
    }

    fn sa_config(alpha: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 20,
            cd_steps: 1,
            optimizer: OptimizerConfig::Sa(SaConfig { alpha, momentum: 0.0 }),
            seed: 11,
            log_interval: 0,
        }
    }

    #[test]
    fn zero_learning_rate_and_determinism() {
        let mut rng = SeededRng::new(10, 0);
        let data: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let p0 = GbRbmParams::init(&data, 2, &GbRbmInit::default(), &mut rng).unwrap();
        let (p1, _) = gbrbm_train(&data, &sa_config(0.0, 2), p0.clone()).unwrap();
        assert_eq!(p0, p1);
        let (_, a) = gbrbm_train(&data, &sa_config(0.01, 3), p0.clone()).unwrap();
        let (_, b) = gbrbm_train(&data, &sa_config(0.01, 3), p0).unwrap();
        let strip = |l: &[EpochLog]| l.iter().map(|e| (e.epoch, e.mse)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn learns_unit_variance_on_white_data() {
        let mut rng = SeededRng::new(12, 0);
        let data: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let p0 = GbRbmParams::init(&data, 2, &GbRbmInit::default(), &mut rng).unwrap();
        let (p, _) = gbrbm_train(&data, &sa_config(0.01, 40), p0).unwrap();
        let samples = gbrbm_gibbs_samples(&p, 4000, 50, &mut SeededRng::new(13, 0)).unwrap();
        for k in 0..2 {
            let var = samples.iter().map(|v| v[k] * v[k]).sum::<f64>() / samples.len() as f64;
            assert!((var - 1.0).abs() < 0.1, "model variance {var}");
            assert!((p.sigma()[k] - 1.0).abs() < 0.1, "sigma {:?}", p.sigma());
        }
    }
}
