use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crbm_core::complex::{SeededRng, C64};
use crbm_core::crbm::{gibbs_samples, TrainConfig};
use crbm_core::gbrbm::{gbrbm_gibbs_samples, to_block};
use crbm_core::optim::{AdamConfig, CAdamConfig, CsaConfig, OptimizerConfig, SaConfig};
use crbm_core::persistence::{
    export_metrics, format_eval, load_any_features, load_any_model, load_basis, load_real, read_wav, save_basis,
    save_crbm, save_features, save_gbrbm, save_real, write_atomic, write_wav, AnyModel, FeatureFile, FeatureLayout,
    FeaturePayload,
};
use crbm_core::pipeline::{
    decode, encode, fit_basis, model_input, reconstruct, static_features, train_model, Amplitude, Method, ModelFamily,
    ModelInput, PipelineConfig,
};
use crbm_core::signal::{Metrics, PhaseMode, StftConfig, Waveform, WindowKind, PSNR_CAP_DB};
use crbm_core::synth::{mixture_samples, re_im_correlation, speech_like, MixtureSpec, SpeechSpec};
use crbm_core::Error;

use crate::config::{wav_inputs, Settings, Split};
use crate::error::{CliError, CliResult};

/// Output location; commands other than `eval` default to the working directory.
pub struct Output {
    pub dir: Option<PathBuf>,
}

impl Output {
    fn dir(&self) -> CliResult<PathBuf> {
        let dir = self.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(Error::from)?;
        Ok(dir)
    }

    fn file(&self, name: &str) -> CliResult<PathBuf> {
        Ok(self.dir()?.join(name))
    }
}

fn announce(path: &Path) {
    println!("{}", path.display());
}

fn stft_config(s: &Settings) -> CliResult<StftConfig> {
    let cfg = StftConfig {
        window_length: s.usize("window", 256)?,
        hop: s.usize("hop", 64)?,
        window: WindowKind::PeriodicHann,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline_config(s: &Settings) -> CliResult<PipelineConfig> {
    let d = PipelineConfig::default();
    Ok(PipelineConfig {
        stft: stft_config(s)?,
        amplitude: match s.choice("amplitude", &["linear", "log"])? {
            "log" => Amplitude::Log,
            _ => Amplitude::Linear,
        },
        trajectory_iters: s.usize("trajectory_iters", d.trajectory_iters)?,
        trajectory_alpha: C64::new(s.f64("trajectory_alpha", d.trajectory_alpha.re)?, 0.0),
        griffin_lim_iters: s.usize("griffin_lim_iters", d.griffin_lim_iters)?,
        phase_mode: match s.choice("phase_mode", &["inter-frame", "per-bin"])? {
            "per-bin" => PhaseMode::PerBin,
            _ => PhaseMode::InterFrame,
        },
        seed: s.u64("seed", 0)?,
    })
}

fn family(s: &Settings) -> CliResult<ModelFamily> {
    Ok(match s.choice("model", &["crbm", "rbm"])? {
        "rbm" => ModelFamily::GbRbm,
        _ => ModelFamily::Crbm,
    })
}

fn train_config(s: &Settings, family: ModelFamily) -> CliResult<TrainConfig> {
    let default = match family {
        ModelFamily::Crbm => "csa",
        ModelFamily::GbRbm => "sa",
    };
    let name = match s.get("optimizer") {
        None => default,
        Some(_) => s.choice("optimizer", &["csa", "cadam", "sa", "adam"])?,
    };
    let optimizer = match name {
        "csa" => OptimizerConfig::Csa(CsaConfig {
            alpha: C64::new(s.f64("lr", 0.01)?, s.f64("lr_im", 0.0)?),
            momentum: s.f64("momentum", 0.1)?,
        }),
        "cadam" => {
            let d = CAdamConfig::default();
            OptimizerConfig::CAdam(CAdamConfig {
                alpha: C64::new(s.f64("lr", d.alpha.re)?, s.f64("lr_im", 0.0)?),
                beta1: C64::new(s.f64("beta1", d.beta1.re)?, 0.0),
                beta2: C64::new(s.f64("beta2", d.beta2.re)?, 0.0),
                eps: s.f64("eps", d.eps)?,
                sqrt_v: s.bool("cadam_sqrt_v", d.sqrt_v)?,
            })
        }
        "sa" => OptimizerConfig::Sa(SaConfig {
            alpha: s.f64("lr", 0.01)?,
            momentum: s.f64("momentum", 0.1)?,
        }),
        _ => {
            let d = AdamConfig::default();
            OptimizerConfig::Adam(AdamConfig {
                alpha: s.f64("lr", d.alpha)?,
                beta1: s.f64("beta1", d.beta1)?,
                beta2: s.f64("beta2", d.beta2)?,
                eps: s.f64("eps", d.eps)?,
            })
        }
    };
    let cfg = TrainConfig {
        epochs: s.usize("epochs", 200)?,
        batch_size: s.usize("batch_size", 20)?,
        cd_steps: s.usize("cd_steps", 1)?,
        optimizer,
        seed: s.u64("seed", 0)?,
        log_interval: s.usize("log_interval", 0)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth_data(s: &Settings, out: &Output) -> CliResult<()> {
    let seed = s.u64("seed", 0)?;
    match s.choice("kind", &["mixture", "speech"])? {
        "mixture" => {
            let d = MixtureSpec::default();
            let spec = MixtureSpec {
                samples: s.usize("samples", d.samples)?,
                components: s.usize("components", d.components)?,
                correlation: s.f64("correlation", d.correlation)?,
                component_std: s.f64("component_std", d.component_std)?,
                spacing: s.f64("spacing", d.spacing)?,
            };
            let points = mixture_samples(&spec, &mut SeededRng::new(seed, 0))?;
            let features = out.file("synthetic.cfea")?;
            save_features(
                &features,
                &FeatureFile {
                    layout: FeatureLayout::Static,
                    frames: points.iter().map(|&z| vec![z]).collect(),
                },
            )?;
            let description = format!(
                "kind=mixture\nseed={seed}\nsamples={}\ncomponents={}\ncorrelation={:?}\ncomponent_std={:?}\nspacing={:?}\nsample_correlation={:?}\n",
                spec.samples,
                spec.components,
                spec.correlation,
                spec.component_std,
                spec.spacing,
                re_im_correlation(&points)
            );
            let desc_path = out.file("synthetic.txt")?;
            write_atomic(&desc_path, description.as_bytes())?;
            announce(&features);
            announce(&desc_path);
        }
        _ => {
            let d = SpeechSpec::default();
            let spec = SpeechSpec {
                seconds: s.f64("seconds", d.seconds)?,
                sample_rate: u32::try_from(s.u64("sample_rate", u64::from(d.sample_rate))?)
                    .map_err(|_| CliError::Config("sample_rate exceeds u32".into()))?,
            };
            let n_train = s.usize("train_utterances", 1)?;
            let n_test = s.usize("test_utterances", 1)?;
            let mut manifest = String::new();
            let mut stream = 0u64;
            for (split, count) in [("train", n_train), ("test", n_test)] {
                for k in 0..count {
                    let name = format!("speech_{split}_{k:03}.wav");
                    let samples = speech_like(&spec, &mut SeededRng::new(seed, stream))?;
                    stream += 1;
                    let path = out.file(&name)?;
                    write_wav(&path, &Waveform::new(samples, spec.sample_rate)?)?;
                    manifest.push_str(&format!("{split} {name}\n"));
                    announce(&path);
                }
            }
            let path = out.file("manifest.txt")?;
            write_atomic(&path, manifest.as_bytes())?;
            announce(&path);
        }
    }
    Ok(())
}

fn feature_method(s: &Settings) -> CliResult<Method> {
    let magnitude = s.choice("feature_kind", &["complex", "magnitude"])? == "magnitude";
    let deltas = s.bool("deltas", false)?;
    match (magnitude, deltas) {
        (true, true) => Err(CliError::Config(
            "deltas are not supported for magnitude features".into(),
        )),
        (true, false) => Ok(Method::RbmGl),
        (false, true) => Ok(Method::CrbmT),
        (false, false) => Ok(Method::Crbm),
    }
}

fn read_inputs(paths: &[PathBuf], sample_rate: u32) -> CliResult<Vec<Waveform>> {
    paths
        .iter()
        .map(|p| {
            let w = read_wav(p)?;
            if w.sample_rate != sample_rate {
                return Err(CliError::Config(format!(
                    "{}: sample rate {} differs from configured {sample_rate}",
                    p.display(),
                    w.sample_rate
                )));
            }
            Ok(w)
        })
        .collect()
}

fn sample_rate(s: &Settings) -> CliResult<u32> {
    u32::try_from(s.u64("sample_rate", 16_000)?).map_err(|_| CliError::Config("sample_rate exceeds u32".into()))
}

pub fn cpca_fit(s: &Settings, out: &Output) -> CliResult<()> {
    let cfg = pipeline_config(s)?;
    let method = feature_method(s)?;
    let waves = read_inputs(&wav_inputs(s, Split::Train)?, sample_rate(s)?)?;
    let components = s.usize("components", crbm_core::cpca::DEFAULT_COMPONENTS)?;
    let basis = fit_basis(&waves, &cfg, method, components, s.bool("centered", true)?)?;
    let inputs = waves
        .par_iter()
        .map(|w| model_input(&static_features(w, &basis, &cfg, method)?, method))
        .collect::<crbm_core::Result<Vec<_>>>()?;
    let basis_path = out.file("basis.cpca")?;
    save_basis(&basis_path, &basis)?;
    let features_path = out.file("features.cfea")?;
    match ModelInput::pool(inputs)? {
        ModelInput::Complex(frames) => save_features(
            &features_path,
            &FeatureFile {
                layout: if method.uses_deltas() {
                    FeatureLayout::StaticDelta
                } else {
                    FeatureLayout::Static
                },
                frames,
            },
        )?,
        ModelInput::Real(rows) => save_real(&features_path, &rows)?,
    }
    announce(&basis_path);
    announce(&features_path);
    Ok(())
}

fn input_for(model_family: ModelFamily, payload: FeaturePayload) -> CliResult<ModelInput> {
    match (model_family, payload) {
        (ModelFamily::Crbm, FeaturePayload::Complex(f)) => Ok(ModelInput::Complex(f.frames)),
        (ModelFamily::GbRbm, FeaturePayload::Complex(f)) => {
            Ok(ModelInput::Real(f.frames.iter().map(|z| to_block(z)).collect()))
        }
        (ModelFamily::GbRbm, FeaturePayload::Real(rows)) => Ok(ModelInput::Real(rows)),
        (ModelFamily::Crbm, FeaturePayload::Real(_)) => Err(Error::LayoutMismatch {
            expected: "static or static+delta",
            found: "real",
        }
        .into()),
    }
}

fn model_family(model: &AnyModel) -> ModelFamily {
    match model {
        AnyModel::Crbm(_) => ModelFamily::Crbm,
        AnyModel::GbRbm(_) => ModelFamily::GbRbm,
    }
}

pub fn train(s: &Settings, out: &Output) -> CliResult<()> {
    let fam = family(s)?;
    let cfg = train_config(s, fam)?;
    let input = input_for(fam, load_any_features(&s.path("features")?)?)?;
    let (model, log) = train_model(fam, &input, s.usize("hidden", 64)?, &cfg)?;
    let model_path = match &model {
        AnyModel::Crbm(p) => {
            let path = out.file("model.crbm")?;
            save_crbm(&path, p)?;
            path
        }
        AnyModel::GbRbm(p) => {
            let path = out.file("model.gbrb")?;
            save_gbrbm(&path, p)?;
            path
        }
    };
    let metrics_path = out.file("metrics.csv")?;
    export_metrics(&log, &metrics_path)?;
    announce(&model_path);
    announce(&metrics_path);
    Ok(())
}

pub fn encode_cmd(s: &Settings, out: &Output) -> CliResult<()> {
    let model = load_any_model(&s.path("model")?)?;
    let input = input_for(model_family(&model), load_any_features(&s.path("features")?)?)?;
    let latent = encode(&model, &input)?;
    let path = out.file("latent.cfea")?;
    save_real(&path, &latent)?;
    announce(&path);
    Ok(())
}

pub fn decode_cmd(s: &Settings, out: &Output) -> CliResult<()> {
    let cfg = pipeline_config(s)?;
    let model = load_any_model(&s.path("model")?)?;
    let latent = load_real(&s.path("latent")?)?;
    let trajectory = s.choice("mode", &["framewise", "trajectory"])? == "trajectory";
    let deltas = s.bool("deltas", trajectory)?;
    if trajectory && !deltas {
        return Err(CliError::Config(
            "trajectory decoding needs a model trained with deltas".into(),
        ));
    }
    let magnitude = s.choice("feature_kind", &["complex", "magnitude"])? == "magnitude";
    let (framewise_method, delta_method, complex_dim) = match &model {
        AnyModel::Crbm(p) => (Method::Crbm, Method::CrbmT, p.visible_dim()),
        AnyModel::GbRbm(p) if magnitude => {
            if deltas {
                return Err(CliError::Config(
                    "deltas are not supported for magnitude features".into(),
                ));
            }
            (Method::RbmGl, Method::RbmGl, p.visible_dim())
        }
        AnyModel::GbRbm(p) => {
            if p.visible_dim() % 2 != 0 {
                return Err(Error::DimensionMismatch {
                    context: "GB-RBM block layout parity",
                    expected: p.visible_dim() + 1,
                    found: p.visible_dim(),
                }
                .into());
            }
            (Method::Rbm, Method::RbmT, p.visible_dim() / 2)
        }
    };
    if magnitude && matches!(model, AnyModel::Crbm(_)) {
        return Err(CliError::Config("magnitude features need an rbm model".into()));
    }
    let static_dim = if deltas {
        if complex_dim % 2 != 0 {
            return Err(CliError::Config(
                "model width is odd, so it was not trained with deltas".into(),
            ));
        }
        complex_dim / 2
    } else {
        complex_dim
    };
    let method = if trajectory { delta_method } else { framewise_method };
    let mut decoded = decode(&model, method, &latent, static_dim, &cfg)?;
    decoded.iter_mut().for_each(|f| f.truncate(static_dim));
    let path = out.file("decoded.cfea")?;
    if magnitude {
        save_real(
            &path,
            &decoded
                .iter()
                .map(|f| f.iter().map(|x| x.re).collect())
                .collect::<Vec<_>>(),
        )?;
    } else {
        save_features(
            &path,
            &FeatureFile {
                layout: FeatureLayout::Static,
                frames: decoded,
            },
        )?;
    }
    announce(&path);
    Ok(())
}

pub fn sample(s: &Settings, out: &Output) -> CliResult<()> {
    let model = load_any_model(&s.path("model")?)?;
    let n = s.usize("samples", 1000)?;
    let burn_in = s.usize("burn_in", 100)?;
    let mut rng = SeededRng::new(s.u64("seed", 0)?, 0);
    let path = out.file("samples.cfea")?;
    match &model {
        AnyModel::Crbm(p) => save_features(
            &path,
            &FeatureFile {
                layout: FeatureLayout::Static,
                frames: gibbs_samples(p, n, burn_in, &mut rng)?,
            },
        )?,
        AnyModel::GbRbm(p) => save_real(&path, &gbrbm_gibbs_samples(p, n, burn_in, &mut rng)?)?,
    }
    announce(&path);
    Ok(())
}

/// Means of every column over the rows, after capping infinite PSNR.
pub fn aggregate(rows: &[(String, Metrics)]) -> Metrics {
    let n = rows.len() as f64;
    let cap = |x: f64| if x == f64::INFINITY { PSNR_CAP_DB } else { x };
    let sum = |f: &dyn Fn(&Metrics) -> f64| rows.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
    Metrics {
        mse: sum(&|m| m.mse),
        psnr_ms: sum(&|m| cap(m.psnr_ms)),
        psnr_pd: sum(&|m| cap(m.psnr_pd)),
        lsd: sum(&|m| m.lsd),
    }
}

fn with_aggregate(mut rows: Vec<(String, Metrics)>) -> Vec<(String, Metrics)> {
    let mean = aggregate(&rows);
    rows.push(("mean".to_string(), mean));
    rows
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

pub fn reconstruct_cmd(s: &Settings, out: &Output) -> CliResult<()> {
    let cfg = pipeline_config(s)?;
    let method: Method = s.get("method").unwrap_or("crbm").parse()?;
    let model = match method.family() {
        None => None,
        Some(_) => Some(load_any_model(&s.path("model")?)?),
    };
    let basis = load_basis(&s.path("basis")?)?;
    let paths = wav_inputs(s, Split::Test)?;
    let waves = read_inputs(&paths, sample_rate(s)?)?;
    let results = waves
        .par_iter()
        .map(|w| reconstruct(w, method, model.as_ref(), &basis, &cfg))
        .collect::<crbm_core::Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(paths.len());
    for (path, r) in paths.iter().zip(results) {
        let name = format!("{}_{}.wav", stem(path), method.name().replace('+', "_"));
        let target = out.file(&name)?;
        write_wav(&target, &r.waveform)?;
        announce(&target);
        rows.push((stem(path), r.metrics));
    }
    let metrics_path = out.file("reconstruct.csv")?;
    write_atomic(&metrics_path, format_eval(&with_aggregate(rows)).as_bytes())?;
    announce(&metrics_path);
    Ok(())
}

pub fn eval(s: &Settings, out: &Output) -> CliResult<()> {
    let cfg = pipeline_config(s)?;
    let refs = s.paths("reference")?;
    let ests = s.paths("estimate")?;
    if refs.len() != ests.len() {
        return Err(CliError::Config(format!(
            "{} reference files but {} estimates",
            refs.len(),
            ests.len()
        )));
    }
    let mut rows = Vec::with_capacity(refs.len());
    for (r, e) in refs.iter().zip(&ests) {
        let a = read_wav(r)?;
        let b = read_wav(e)?;
        if a.sample_rate != b.sample_rate {
            return Err(CliError::Config(format!(
                "{}: sample rate {} differs from reference {}",
                e.display(),
                b.sample_rate,
                a.sample_rate
            )));
        }
        let (la, lb) = (a.samples.len(), b.samples.len());
        if la.abs_diff(lb) > cfg.stft.hop {
            return Err(Error::DimensionMismatch {
                context: "eval waveform length",
                expected: la,
                found: lb,
            }
            .into());
        }
        let n = la.min(lb);
        if la != lb {
            log::warn!("{}: trimming to {n} samples", e.display());
        }
        let a = Waveform::new(a.samples[..n].to_vec(), a.sample_rate)?;
        let b = Waveform::new(b.samples[..n].to_vec(), b.sample_rate)?;
        rows.push((stem(r), crbm_core::pipeline::compare(&a, &b, &cfg)?));
    }
    let text = format_eval(&with_aggregate(rows));
    match &out.dir {
        Some(_) => {
            let path = out.file("eval.csv")?;
            write_atomic(&path, text.as_bytes())?;
            announce(&path);
        }
        None => print!("{text}"),
    }
    Ok(())
}
