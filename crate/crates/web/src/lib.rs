//! wasm-bindgen bindings behind `www/index.html`: a complex normal density
//! view, a small CRBM training run on the synthetic mixture, and the CPCA
//! error curve of a speech-like signal.

use wasm_bindgen::prelude::*;

use crbm_core::complex::{cn_log_density, ComplexNormalParams, SeededRng, C64};
use crbm_core::cpca::{cpca_fit, cpca_reconstruction_error};
use crbm_core::crbm::{gibbs_samples, train, CrbmInit, CrbmParams, TrainConfig};
use crbm_core::optim::{CsaConfig, OptimizerConfig};
use crbm_core::signal::{stft, StftConfig, Waveform};
use crbm_core::synth::{as_vectors, mixture_samples, re_im_correlation, speech_like, MixtureSpec, SpeechSpec};
use crbm_core::Error;

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Density of a scalar complex normal on a `size x size` grid covering
/// `[-extent, extent]^2`, row-major with the imaginary axis pointing up.
pub fn density_grid(mu: C64, gamma: f64, delta: C64, extent: f64, size: usize) -> Result<Vec<f64>, Error> {
    let params = ComplexNormalParams::new(vec![mu], vec![gamma], vec![delta])?;
    let step = 2.0 * extent / (size.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(size * size);
    for row in 0..size {
        let im = extent - row as f64 * step;
        for col in 0..size {
            let re = -extent + col as f64 * step;
            out.push(cn_log_density(&[C64::new(re, im)], &params)?.exp());
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn cn_density_grid(
    mu_re: f64,
    mu_im: f64,
    gamma: f64,
    delta_abs: f64,
    delta_arg: f64,
    extent: f64,
    size: usize,
) -> Result<Vec<f64>, JsValue> {
    let delta = C64::from_polar(delta_abs, delta_arg);
    density_grid(C64::new(mu_re, mu_im), gamma, delta, extent, size).map_err(js_err)
}

/// Outcome of [`mixture_run`]. Point sets are interleaved `re, im` pairs.
#[wasm_bindgen]
pub struct MixtureRun {
    mse: Vec<f64>,
    data: Vec<f64>,
    samples: Vec<f64>,
    data_corr: f64,
    sample_corr: f64,
}

#[wasm_bindgen]
impl MixtureRun {
    #[wasm_bindgen(getter)]
    pub fn mse(&self) -> Vec<f64> {
        self.mse.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn samples(&self) -> Vec<f64> {
        self.samples.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn data_corr(&self) -> f64 {
        self.data_corr
    }

    #[wasm_bindgen(getter)]
    pub fn sample_corr(&self) -> f64 {
        self.sample_corr
    }
}

fn interleave(points: &[C64]) -> Vec<f64> {
    points.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Trains a one-visible CRBM with CSA on the two-component mixture and
/// draws as many Gibbs samples as there are data points.
pub fn mixture_run(
    correlation: f64,
    samples: usize,
    hidden: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<MixtureRun, Error> {
    let spec = MixtureSpec {
        samples,
        correlation,
        ..MixtureSpec::default()
    };
    let points = mixture_samples(&spec, &mut SeededRng::new(seed, 0))?;
    let data = as_vectors(&points);
    let init = CrbmParams::init(&data, hidden, &CrbmInit::default(), &mut SeededRng::new(seed, 1))?;
    let cfg = TrainConfig {
        epochs,
        batch_size: 20,
        cd_steps: 1,
        optimizer: OptimizerConfig::Csa(CsaConfig {
            alpha: C64::new(lr, 0.0),
            momentum: 0.1,
        }),
        seed,
        log_interval: 0,
    };
    let (model, log) = train(&data, &cfg, init)?;
    let drawn: Vec<C64> = gibbs_samples(&model, samples, 100, &mut SeededRng::new(seed, 2))?
        .into_iter()
        .map(|z| z[0])
        .collect();
    Ok(MixtureRun {
        mse: log.iter().map(|e| e.mse).collect(),
        data: interleave(&points),
        samples: interleave(&drawn),
        data_corr: re_im_correlation(&points),
        sample_corr: re_im_correlation(&drawn),
    })
}

#[wasm_bindgen]
pub fn train_mixture(
    correlation: f64,
    samples: usize,
    hidden: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<MixtureRun, JsValue> {
    mixture_run(correlation, samples, hidden, epochs, lr, seed).map_err(js_err)
}

/// Mean squared CPCA reconstruction error of the STFT frames of a
/// speech-like signal, one entry per requested component count.
pub fn cpca_errors(seconds: f64, seed: u64, components: &[usize]) -> Result<Vec<f64>, Error> {
    let spec = SpeechSpec {
        seconds,
        ..SpeechSpec::default()
    };
    let samples = speech_like(&spec, &mut SeededRng::new(seed, 0))?;
    let wave = Waveform::new(samples, spec.sample_rate)?;
    let frames = stft(&wave, &StftConfig::default())?.frames;
    components
        .iter()
        .map(|&p| cpca_reconstruction_error(&frames, &cpca_fit(&frames, p, true)?))
        .collect()
}

#[wasm_bindgen]
pub fn cpca_error_curve(seconds: f64, seed: u64, components: Vec<usize>) -> Result<Vec<f64>, JsValue> {
    cpca_errors(seconds, seed, &components).map_err(js_err)
}
