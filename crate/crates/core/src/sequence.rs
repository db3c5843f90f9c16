//! Delta features, the static-to-augmented weight matrix `S`, and trajectory
//! generation by gradient ascent on the per-frame complex normal likelihood.
//!
//! Augmented frames are stacked frame-major: frame `t` occupies rows
//! `t*B .. (t+1)*B` of `S z`, with `B = 2P` laid out as `[z_t; dz_t]`, where
//! `dz_t = (z_{t+1} - z_{t-1}) / 2` and edge frames are replicated.

use crate::complex::{all_finite, CVec, C64};
use crate::crbm::{precision_from_variance, visible_mean, CrbmParams, PrecisionPair};
use crate::error::{check_len, Error, Result};
use crate::gbrbm::{gbrbm_visible_mean, GbRbmParams};

/// Static features, `T` frames of `P` complex values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Vec<CVec>,
}

/// Static plus delta features, `T` frames of `2P` values `[z_t; dz_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSequence {
    pub frames: Vec<CVec>,
}

impl FeatureSequence {
    pub fn new(frames: Vec<CVec>) -> Result<Self> {
        let dim = frames
            .first()
            .ok_or(Error::TooFewFrames { frames: 0, needed: 1 })?
            .len();
        for f in &frames {
            check_len("FeatureSequence frame", dim, f.len())?;
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    /// Frame-major flattening `[z_1; ...; z_T]`.
    pub fn flatten(&self) -> CVec {
        self.frames.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[C64], dim: usize) -> Result<Self> {
        if dim == 0 || !flat.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                context: "FeatureSequence::from_flat",
                expected: dim,
                found: flat.len(),
            });
        }
        Self::new(flat.chunks(dim).map(|c| c.to_vec()).collect())
    }
}

impl AugmentedSequence {
    pub fn flatten(&self) -> CVec {
        self.frames.iter().flatten().copied().collect()
    }

    /// The first `P` values of every frame.
    pub fn statics(&self) -> FeatureSequence {
        let p = self.frames.first().map_or(0, |f| f.len() / 2);
        FeatureSequence {
            frames: self.frames.iter().map(|f| f[..p].to_vec()).collect(),
        }
    }
}

/// `[z_t; (z_{t+1} - z_{t-1}) / 2]` with edge replication.
pub fn append_deltas(seq: &FeatureSequence) -> AugmentedSequence {
    let t_len = seq.len();
    let frames = (0..t_len)
        .map(|t| {
            let prev = &seq.frames[t.saturating_sub(1)];
            let next = &seq.frames[(t + 1).min(t_len - 1)];
            let mut out = seq.frames[t].clone();
            out.extend(next.iter().zip(prev).map(|(n, p)| 0.5 * n - 0.5 * p));
            out
        })
        .collect();
    AugmentedSequence { frames }
}

/// Sparse real matrix mapping flattened statics (`T*P`) to stacked
/// per-frame blocks (`T*B`).
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrix {
    frames: usize,
    dim: usize,
    block: usize,
    /// `(column, weight)` pairs per row.
    rows: Vec<Vec<(usize, f64)>>,
}

/// `S` for static plus delta blocks.
pub fn build_s_matrix(frames: usize, dim: usize) -> Result<SMatrix> {
    if frames == 0 || dim == 0 {
        return Err(Error::InvalidConfig("S matrix needs T >= 1 and P >= 1".into()));
    }
    let mut rows = Vec::with_capacity(2 * dim * frames);
    for t in 0..frames {
        for k in 0..dim {
            rows.push(vec![(t * dim + k, 1.0)]);
        }
        let (prev, next) = (t.saturating_sub(1), (t + 1).min(frames - 1));
        for k in 0..dim {
            let row = if prev == next {
                Vec::new()
            } else {
                vec![(prev * dim + k, -0.5), (next * dim + k, 0.5)]
            };
            rows.push(row);
        }
    }
    Ok(SMatrix {
        frames,
        dim,
        block: 2 * dim,
        rows,
    })
}

/// `S` with the delta rows removed: the identity on statics.
pub fn build_static_s_matrix(frames: usize, dim: usize) -> Result<SMatrix> {
    if frames == 0 || dim == 0 {
        return Err(Error::InvalidConfig("S matrix needs T >= 1 and P >= 1".into()));
    }
    Ok(SMatrix {
        frames,
        dim,
        block: dim,
        rows: (0..frames * dim).map(|c| vec![(c, 1.0)]).collect(),
    })
}

impl SMatrix {
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Static dimension `P`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rows per frame: `2P`, or `P` for the static-only matrix.
    pub fn block(&self) -> usize {
        self.block
    }

    /// `(row, column, weight)` of every stored entry.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, w)| (r, c, w)))
    }

    pub fn apply(&self, z: &[C64]) -> Result<CVec> {
        check_len("SMatrix::apply", self.frames * self.dim, z.len())?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * z[c]).sum())
            .collect())
    }

    pub fn apply_transpose(&self, y: &[C64]) -> Result<CVec> {
        check_len("SMatrix::apply_transpose", self.rows.len(), y.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.frames * self.dim];
        for (row, &v) in self.rows.iter().zip(y) {
            for &(c, w) in row {
                out[c] += w * v;
            }
        }
        Ok(out)
    }
}

/// Per-frame complex normal targets sharing one diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel {
    /// `T` blocks of means.
    pub means: Vec<CVec>,
    pub precision: PrecisionPair,
}

impl TrajectoryModel {
    pub fn new(means: Vec<CVec>, gamma: &[f64], delta: &[C64]) -> Result<Self> {
        let block = gamma.len();
        if means.is_empty() {
            return Err(Error::TooFewFrames { frames: 0, needed: 1 });
        }
        for m in &means {
            check_len("TrajectoryModel mean", block, m.len())?;
        }
        Ok(Self {
            means,
            precision: precision_from_variance(gamma, delta)?,
        })
    }

    /// Means `b + W h_t` of a CRBM trained on augmented frames.
    pub fn from_crbm(h_seq: &[Vec<f64>], params: &CrbmParams) -> Result<Self> {
        let means = h_seq
            .iter()
            .map(|h| visible_mean(h, params))
            .collect::<Result<Vec<_>>>()?;
        Self::new(means, &params.gamma(), &params.delta())
    }

    /// Means and covariance of a GB-RBM over the block layout `[Re; Im]` of
    /// augmented frames. Independent real parts with variances `sx^2, sy^2`
    /// form a complex normal with `gamma = sx^2 + sy^2`, `delta = sx^2 - sy^2`.
    pub fn from_gbrbm(h_seq: &[Vec<f64>], params: &GbRbmParams) -> Result<Self> {
        let v = params.visible_dim();
        if !v.is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                context: "GB-RBM block layout parity",
                expected: v + 1,
                found: v,
            });
        }
        let half = v / 2;
        let means = h_seq
            .iter()
            .map(|h| {
                let m = gbrbm_visible_mean(h, params)?;
                Ok((0..half).map(|i| C64::new(m[i], m[half + i])).collect())
            })
            .collect::<Result<Vec<CVec>>>()?;
        let var: Vec<f64> = params.sigma().iter().map(|s| s * s).collect();
        let gamma: Vec<f64> = (0..half).map(|i| var[i] + var[half + i]).collect();
        let delta: CVec = (0..half).map(|i| C64::new(var[i] - var[half + i], 0.0)).collect();
        Self::new(means, &gamma, &delta)
    }

    pub fn frames(&self) -> usize {
        self.means.len()
    }

    pub fn block(&self) -> usize {
        self.precision.p.len()
    }

    /// Keeps the first `dim` entries of every block.
    pub fn static_part(&self, dim: usize) -> Result<Self> {
        if dim == 0 || dim > self.block() {
            return Err(Error::InvalidConfig(format!("static dimension {dim} out of range")));
        }
        Ok(Self {
            means: self.means.iter().map(|m| m[..dim].to_vec()).collect(),
            precision: PrecisionPair {
                p: self.precision.p[..dim].to_vec(),
                q: self.precision.q[..dim].to_vec(),
            },
        })
    }

    /// Frame-wise optimum of the statics: the first `dim` means of each block.
    pub fn framewise(&self, dim: usize) -> FeatureSequence {
        FeatureSequence {
            frames: self.means.iter().map(|m| m[..dim].to_vec()).collect(),
        }
    }

    fn check(&self, s: &SMatrix) -> Result<()> {
        check_len("trajectory frames", s.frames(), self.frames())?;
        check_len("trajectory block", s.block(), self.block())
    }
}

/// `Q = sum_t log CN(S z | mu_t)` without constants, and `dQ/dconj(z)`:
///
/// ```text
/// Q = -sum [p |u|^2 + Re(q conj(u)^2)],     u = S z - mu
/// dQ/dconj(z) = S^T (-(p u + q conj(u)))
/// ```
pub fn mlpg_objective_grad(
    z: &FeatureSequence,
    model: &TrajectoryModel,
    s: &SMatrix,
) -> Result<(f64, FeatureSequence)> {
    model.check(s)?;
    check_len("mlpg frames", s.frames(), z.len())?;
    check_len("mlpg static dim", s.dim(), z.dim())?;
    let (q_value, dy) = objective_and_dy(&z.flatten(), model, s)?;
    let grad = s.apply_transpose(&dy)?;
    Ok((q_value, FeatureSequence::from_flat(&grad, s.dim())?))
}

fn objective_and_dy(flat: &[C64], model: &TrajectoryModel, s: &SMatrix) -> Result<(f64, CVec)> {
    let y = s.apply(flat)?;
    let b = s.block();
    let mut q_value = 0.0;
    let mut dy = Vec::with_capacity(y.len());
    for (r, &yr) in y.iter().enumerate() {
        let (t, k) = (r / b, r % b);
        let u = yr - model.means[t][k];
        let (p, q) = (model.precision.p[k], model.precision.q[k]);
        let uc = u.conj();
        q_value -= p * u.norm_sqr() + (q * uc * uc).re;
        dy.push(-(p * u + q * uc));
    }
    Ok((q_value, dy))
}

fn objective(flat: &[C64], model: &TrajectoryModel, s: &SMatrix) -> Result<f64> {
    objective_and_dy(flat, model, s).map(|(q, _)| q)
}

/// Number of halvings allowed per iteration.
pub const MAX_HALVINGS: usize = 20;

/// Generation output with the objective after every accepted iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpgTrace {
    pub sequence: FeatureSequence,
    /// `Q` at the initializer followed by one value per iteration.
    pub objective: Vec<f64>,
}

/// Ascent `z <- z + 2 alpha dQ/dconj(z)` from the frame-wise initializer.
///
/// A step that lowers `Q` is retried with half the step, at most
/// [`MAX_HALVINGS`] times; the reduced step size is kept for later
/// iterations. If no tried step increases `Q` the sequence stays put.
pub fn mlpg_generate_model(model: &TrajectoryModel, s: &SMatrix, iters: usize, alpha: C64) -> Result<MlpgTrace> {
    model.check(s)?;
    if !(alpha.re > 0.0 && alpha.im.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "trajectory learning rate must have a positive real part, got {alpha}"
        )));
    }
    let dim = s.dim();
    let mut z = model.framewise(dim).flatten();
    let mut q_now = objective(&z, model, s)?;
    let mut history = Vec::with_capacity(iters + 1);
    history.push(q_now);
    let mut step = alpha;
    for iteration in 1..=iters {
        let (_, dy) = objective_and_dy(&z, model, s)?;
        let grad = s.apply_transpose(&dy)?;
        if !all_finite(&grad) {
            return Err(Error::NonFiniteIteration { iteration });
        }
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: CVec = z.iter().zip(&grad).map(|(z, g)| z + 2.0 * step * g).collect();
            let q_trial = objective(&trial, model, s)?;
            if !q_trial.is_finite() || !all_finite(&trial) {
                return Err(Error::NonFiniteIteration { iteration });
            }
            if q_trial >= q_now {
                z = trial;
                q_now = q_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            log::debug!("trajectory ascent stalled at iteration {iteration}");
        }
        history.push(q_now);
    }
    Ok(MlpgTrace {
        sequence: FeatureSequence::from_flat(&z, dim)?,
        objective: history,
    })
}

/// Trajectory generation for a CRBM over augmented frames, given hidden
/// expectations per frame.
pub fn mlpg_generate(
    h_seq: &[Vec<f64>],
    params: &CrbmParams,
    s: &SMatrix,
    iters: usize,
    alpha: C64,
) -> Result<FeatureSequence> {
    let model = TrajectoryModel::from_crbm(h_seq, params)?;
    Ok(mlpg_generate_model(&model, s, iters, alpha)?.sequence)
}
