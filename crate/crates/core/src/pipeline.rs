//! Waveform to spectrum to features to latent code and back.
//!
//! Complex methods compress STFT frames with a complex PCA basis; `rbm-gl`
//! compresses magnitude frames with a PCA basis (a complex basis fitted to
//! real data, whose columns are real under the phase convention) and
//! recovers phase with Griffin-Lim.

use std::fmt;
use std::str::FromStr;

use crate::complex::{CVec, SeededRng, C64};
use crate::cpca::{cpca_fit, cpca_inverse_all, cpca_transform_all, CpcaBasis};
use crate::crbm::{cond_hidden, train, visible_mean, CrbmInit, CrbmParams, EpochLog, TrainConfig};
use crate::error::{Error, Result};
use crate::gbrbm::{from_block, gbrbm_cond_hidden, gbrbm_train, gbrbm_visible_mean, to_block, GbRbmInit, GbRbmParams};
use crate::persistence::AnyModel;
use crate::sequence::{append_deltas, build_s_matrix, mlpg_generate_model, FeatureSequence, TrajectoryModel};
use crate::signal::{eval_metrics, griffin_lim, istft, stft, Metrics, PhaseMode, Spectrogram, StftConfig, Waveform};

/// RNG stream for parameter initialization; training uses stream 0.
const INIT_STREAM: u64 = 1;
/// RNG stream for the Griffin-Lim initial phase.
const PHASE_STREAM: u64 = 2;

/// Floor added inside the log for log-amplitude features.
pub const LOG_AMPLITUDE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// STFT and basis only, no model.
    Bypass,
    Crbm,
    /// CRBM over static and delta features with trajectory decoding.
    CrbmT,
    /// GB-RBM over `[Re; Im]` of the complex features.
    Rbm,
    RbmT,
    /// GB-RBM over magnitude PCA features, phase from Griffin-Lim.
    RbmGl,
}

pub const ALL_METHODS: [Method; 6] = [
    Method::Bypass,
    Method::Crbm,
    Method::CrbmT,
    Method::Rbm,
    Method::RbmT,
    Method::RbmGl,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Crbm,
    GbRbm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bypass => "bypass",
            Method::Crbm => "crbm",
            Method::CrbmT => "crbm+t",
            Method::Rbm => "rbm",
            Method::RbmT => "rbm+t",
            Method::RbmGl => "rbm-gl",
        }
    }

    pub fn family(self) -> Option<ModelFamily> {
        match self {
            Method::Bypass => None,
            Method::Crbm | Method::CrbmT => Some(ModelFamily::Crbm),
            Method::Rbm | Method::RbmT | Method::RbmGl => Some(ModelFamily::GbRbm),
        }
    }

    pub fn uses_deltas(self) -> bool {
        matches!(self, Method::CrbmT | Method::RbmT)
    }

    pub fn uses_magnitude(self) -> bool {
        self == Method::RbmGl
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// How features enter and leave the magnitude path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Amplitude {
    #[default]
    Linear,
    /// `ln(|X| + LOG_AMPLITUDE_FLOOR)`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub amplitude: Amplitude,
    pub trajectory_iters: usize,
    pub trajectory_alpha: C64,
    pub griffin_lim_iters: usize,
    pub phase_mode: PhaseMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            amplitude: Amplitude::Linear,
            trajectory_iters: 50,
            trajectory_alpha: C64::new(0.1, 0.0),
            griffin_lim_iters: 100,
            phase_mode: PhaseMode::InterFrame,
            seed: 0,
        }
    }
}

/// Frames the basis is fitted to: complex spectra, or magnitudes for `rbm-gl`.
pub fn basis_frames(spec: &Spectrogram, method: Method, amplitude: Amplitude) -> Vec<CVec> {
    if !method.uses_magnitude() {
        return spec.frames.clone();
    }
    spec.frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|x| {
                    let a = x.norm();
                    C64::new(
                        match amplitude {
                            Amplitude::Linear => a,
                            Amplitude::Log => (a + LOG_AMPLITUDE_FLOOR).ln(),
                        },
                        0.0,
                    )
                })
                .collect()
        })
        .collect()
}

/// Pools frames of every waveform and fits a `components`-dimensional basis.
pub fn fit_basis(
    waves: &[Waveform],
    cfg: &PipelineConfig,
    method: Method,
    components: usize,
    centered: bool,
) -> Result<CpcaBasis> {
    let mut pooled = Vec::new();
    for w in waves {
        pooled.extend(basis_frames(&stft(w, &cfg.stft)?, method, cfg.amplitude));
    }
    cpca_fit(&pooled, components, centered)
}

/// Per-frame static features of one utterance.
pub fn static_features(w: &Waveform, basis: &CpcaBasis, cfg: &PipelineConfig, method: Method) -> Result<Vec<CVec>> {
    let spec = stft(w, &cfg.stft)?;
    let mut z = cpca_transform_all(&basis_frames(&spec, method, cfg.amplitude), basis)?;
    if method.uses_magnitude() {
        z.iter_mut().flatten().for_each(|x| x.im = 0.0);
    }
    Ok(z)
}

/// Model-ready vectors for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Complex(Vec<CVec>),
    Real(Vec<Vec<f64>>),
}

impl ModelInput {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Complex(v) => v.len(),
            ModelInput::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates utterances so frames are pooled for training.
    pub fn pool(inputs: Vec<ModelInput>) -> Result<ModelInput> {
        let mut iter = inputs.into_iter();
        let mut first = iter.next().ok_or(Error::EmptyBatch)?;
        for next in iter {
            match (&mut first, next) {
                (ModelInput::Complex(a), ModelInput::Complex(b)) => a.extend(b),
                (ModelInput::Real(a), ModelInput::Real(b)) => a.extend(b),
                _ => return Err(Error::InvalidConfig("cannot pool real and complex inputs".into())),
            }
        }
        Ok(first)
    }
}

/// Static features, plus deltas and the real layout where the method needs them.
pub fn model_input(statics: &[CVec], method: Method) -> Result<ModelInput> {
    let frames = if method.uses_deltas() {
        append_deltas(&FeatureSequence::new(statics.to_vec())?).frames
    } else {
        statics.to_vec()
    };
    Ok(match method.family() {
        None | Some(ModelFamily::Crbm) => ModelInput::Complex(frames),
        Some(ModelFamily::GbRbm) if method.uses_magnitude() => {
            ModelInput::Real(frames.iter().map(|f| f.iter().map(|x| x.re).collect()).collect())
        }
        Some(ModelFamily::GbRbm) => ModelInput::Real(frames.iter().map(|f| to_block(f)).collect()),
    })
}

/// Checks that the optimizer belongs to the model family.
pub fn check_optimizer(family: ModelFamily, train: &TrainConfig) -> Result<()> {
    let name = train.optimizer.name();
    let ok = match family {
        ModelFamily::Crbm => matches!(name, "csa" | "cadam"),
        ModelFamily::GbRbm => matches!(name, "sa" | "adam"),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "optimizer `{name}` does not apply to the {} model",
            match family {
                ModelFamily::Crbm => "crbm",
                ModelFamily::GbRbm => "rbm",
            }
        )))
    }
}

/// Initializes and trains the model of `family` on pooled input.
pub fn train_model(
    family: ModelFamily,
    input: &ModelInput,
    hidden: usize,
    train_cfg: &TrainConfig,
) -> Result<(AnyModel, Vec<EpochLog>)> {
    check_optimizer(family, train_cfg)?;
    let mut rng = SeededRng::new(train_cfg.seed, INIT_STREAM);
    match (family, input) {
        (ModelFamily::Crbm, ModelInput::Complex(data)) => {
            let init = CrbmParams::init(data, hidden, &CrbmInit::default(), &mut rng)?;
            let (params, log) = train(data, train_cfg, init)?;
            Ok((AnyModel::Crbm(params), log))
        }
        (ModelFamily::GbRbm, ModelInput::Real(data)) => {
            let init = GbRbmParams::init(data, hidden, &GbRbmInit::default(), &mut rng)?;
            let (params, log) = gbrbm_train(data, train_cfg, init)?;
            Ok((AnyModel::GbRbm(params), log))
        }
        _ => Err(Error::InvalidConfig(
            "model family does not match the input features".into(),
        )),
    }
}

/// Hidden expectations per frame.
pub fn encode(model: &AnyModel, input: &ModelInput) -> Result<Vec<Vec<f64>>> {
    match (model, input) {
        (AnyModel::Crbm(p), ModelInput::Complex(frames)) => frames.iter().map(|z| cond_hidden(z, p)).collect(),
        (AnyModel::GbRbm(p), ModelInput::Real(frames)) => frames.iter().map(|v| gbrbm_cond_hidden(v, p)).collect(),
        _ => Err(Error::InvalidConfig(
            "model family does not match the input features".into(),
        )),
    }
}

/// Static features from hidden expectations, frame-wise for methods without
/// deltas and by trajectory ascent otherwise. `static_dim` is the number of
/// complex static features.
pub fn decode(
    model: &AnyModel,
    method: Method,
    latent: &[Vec<f64>],
    static_dim: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<CVec>> {
    if method.uses_deltas() {
        let traj = match model {
            AnyModel::Crbm(p) => TrajectoryModel::from_crbm(latent, p)?,
            AnyModel::GbRbm(p) => TrajectoryModel::from_gbrbm(latent, p)?,
        };
        let s = build_s_matrix(latent.len(), static_dim)?;
        let trace = mlpg_generate_model(&traj, &s, cfg.trajectory_iters, cfg.trajectory_alpha)?;
        return Ok(trace.sequence.frames);
    }
    match model {
        AnyModel::Crbm(p) => latent.iter().map(|h| visible_mean(h, p)).collect(),
        AnyModel::GbRbm(p) => latent
            .iter()
            .map(|h| {
                let v = gbrbm_visible_mean(h, p)?;
                if method.uses_magnitude() {
                    Ok(v.iter().map(|&x| C64::new(x, 0.0)).collect())
                } else {
                    from_block(&v)
                }
            })
            .collect(),
    }
}

/// Static features back to a waveform of `signal_len` samples.
pub fn synthesize(
    statics: &[CVec],
    basis: &CpcaBasis,
    method: Method,
    cfg: &PipelineConfig,
    signal_len: usize,
    sample_rate: u32,
) -> Result<Waveform> {
    let frames = cpca_inverse_all(statics, basis)?;
    if !method.uses_magnitude() {
        let spec = Spectrogram {
            frames,
            config: cfg.stft,
            signal_len,
        };
        return istft(&spec, sample_rate);
    }
    let magnitude: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|x| match cfg.amplitude {
                    Amplitude::Linear => x.re.max(0.0),
                    Amplitude::Log => (x.re.exp() - LOG_AMPLITUDE_FLOOR).max(0.0),
                })
                .collect()
        })
        .collect();
    let mut rng = SeededRng::new(cfg.seed, PHASE_STREAM);
    let out = griffin_lim(
        &magnitude,
        &cfg.stft,
        signal_len,
        sample_rate,
        cfg.griffin_lim_iters,
        &mut rng,
    )?;
    Ok(out.waveform)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub waveform: Waveform,
    pub metrics: Metrics,
}

/// Full analysis, encode, decode and synthesis of one waveform, with metrics
/// of the re-analysed output against the input spectrogram.
pub fn reconstruct(
    w: &Waveform,
    method: Method,
    model: Option<&AnyModel>,
    basis: &CpcaBasis,
    cfg: &PipelineConfig,
) -> Result<Reconstruction> {
    let statics = static_features(w, basis, cfg, method)?;
    let decoded = match (method.family(), model) {
        (None, _) => statics,
        (Some(family), Some(model)) => {
            let matches = matches!(
                (family, model),
                (ModelFamily::Crbm, AnyModel::Crbm(_)) | (ModelFamily::GbRbm, AnyModel::GbRbm(_))
            );
            if !matches {
                return Err(Error::InvalidConfig(format!(
                    "method `{method}` needs a different model family"
                )));
            }
            let input = model_input(&statics, method)?;
            let latent = encode(model, &input)?;
            decode(model, method, &latent, basis.components(), cfg)?
        }
        (Some(_), None) => return Err(Error::InvalidConfig(format!("method `{method}` needs a model"))),
    };
    let waveform = synthesize(&decoded, basis, method, cfg, w.samples.len(), w.sample_rate)?;
    let metrics = compare(w, &waveform, cfg)?;
    Ok(Reconstruction { waveform, metrics })
}

/// Metrics between the spectrograms of two equal-length waveforms.
pub fn compare(reference: &Waveform, estimate: &Waveform, cfg: &PipelineConfig) -> Result<Metrics> {
    let a = stft(reference, &cfg.stft)?;
    let b = stft(estimate, &cfg.stft)?;
    eval_metrics(&a.frames, &b.frames, cfg.phase_mode)
}
