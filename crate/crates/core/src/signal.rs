//! STFT analysis and weighted overlap-add synthesis, Griffin-Lim phase
//! recovery, and spectral reconstruction metrics.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::complex::{CVec, SeededRng, C64};
use crate::error::{check_len, Error, Result};

/// Mono waveform with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if !samples.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("waveform contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// `w[n] = 0.5 - 0.5 cos(2 pi n / N)`.
    PeriodicHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 256,
            hop: 64,
            window: WindowKind::PeriodicHann,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    pub fn window_samples(&self) -> Vec<f64> {
        let n = self.window_length as f64;
        match self.window {
            WindowKind::PeriodicHann => (0..self.window_length)
                .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n).cos())
                .collect(),
        }
    }

    /// Requires an even window length, `0 < hop <= window_length`, and the
    /// constant-overlap-add property of the window at this hop.
    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 || !self.window_length.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "window length must be even and at least 2, got {}",
                self.window_length
            )));
        }
        if self.hop == 0 || self.hop > self.window_length {
            return Err(Error::InvalidConfig(format!(
                "hop must be in 1..={}, got {}",
                self.window_length, self.hop
            )));
        }
        let w = self.window_samples();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let (lo, hi) = sums.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        if hi - lo > 1e-9 * hi.abs().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "window is not constant-overlap-add at hop {}",
                self.hop
            )));
        }
        Ok(())
    }

    /// Frames needed so every sample is covered; the tail is zero-padded.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + (len - self.window_length).div_ceil(self.hop)
    }
}

/// `T x F` complex spectrogram with the signal length it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<CVec>,
    pub config: StftConfig,
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let f = self.config.bins();
        for frame in &self.frames {
            check_len("spectrogram bins", f, frame.len())?;
        }
        Ok(())
    }

    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|x| x.norm()).collect())
            .collect()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn stft_with(samples: &[f64], cfg: &StftConfig, window: &[f64], plan: &Plans) -> Vec<CVec> {
    let n = cfg.window_length;
    let frames = cfg.frame_count(samples.len());
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); plan.forward.get_inplace_scratch_len()];
    (0..frames)
        .map(|t| {
            let start = t * cfg.hop;
            for (k, b) in buf.iter_mut().enumerate() {
                let x = samples.get(start + k).copied().unwrap_or(0.0);
                *b = C64::new(x * window[k], 0.0);
            }
            plan.forward.process_with_scratch(&mut buf, &mut scratch);
            buf[..cfg.bins()].to_vec()
        })
        .collect()
}

fn istft_with(frames: &[CVec], cfg: &StftConfig, len: usize, window: &[f64], plan: &Plans) -> Vec<f64> {
    let n = cfg.window_length;
    let half = n / 2;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); plan.inverse.get_inplace_scratch_len()];
    for (t, frame) in frames.iter().enumerate() {
        buf[..=half].copy_from_slice(frame);
        for k in 1..half {
            buf[n - k] = frame[k].conj();
        }
        plan.inverse.process_with_scratch(&mut buf, &mut scratch);
        let start = t * cfg.hop;
        for k in 0..n {
            let pos = start + k;
            if pos >= len {
                break;
            }
            out[pos] += window[k] * buf[k].re / n as f64;
            norm[pos] += window[k] * window[k];
        }
    }
    for (x, w) in out.iter_mut().zip(&norm) {
        *x = if *w > 1e-10 { *x / w } else { 0.0 };
    }
    out
}

/// Frame `t` covers samples `[t*hop, t*hop + N)`; bins `0..=N/2` are kept.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if w.samples.len() < cfg.window_length {
        return Err(Error::SignalTooShort {
            len: w.samples.len(),
            window: cfg.window_length,
        });
    }
    let window = cfg.window_samples();
    let frames = stft_with(&w.samples, cfg, &window, &plans(cfg.window_length));
    Ok(Spectrogram {
        frames,
        config: *cfg,
        signal_len: w.samples.len(),
    })
}

/// Weighted overlap-add: each output sample is `sum_t w x_t / sum_t w^2`,
/// and 0 where no window has weight.
pub fn istft(s: &Spectrogram, sample_rate: u32) -> Result<Waveform> {
    s.validate()?;
    let window = s.config.window_samples();
    let samples = istft_with(
        &s.frames,
        &s.config,
        s.signal_len,
        &window,
        &plans(s.config.window_length),
    );
    Waveform::new(samples, sample_rate)
}

/// Griffin-Lim result and `|| |STFT(x_i)| - A ||` for each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GriffinLimOutput {
    pub waveform: Waveform,
    pub inconsistency: Vec<f64>,
}

/// Norm of the magnitude error over the full two-sided spectrum, so interior
/// bins count twice.
fn magnitude_distance(frames: &[CVec], target: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (frame, mag) in frames.iter().zip(target) {
        let last = frame.len() - 1;
        for (k, (x, a)) in frame.iter().zip(mag).enumerate() {
            let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
            total += weight * (x.norm() - a).powi(2);
        }
    }
    total.sqrt()
}

/// Random-phase start, then `iters` rounds of magnitude substitution and
/// STFT re-analysis.
pub fn griffin_lim(
    magnitude: &[Vec<f64>],
    cfg: &StftConfig,
    signal_len: usize,
    sample_rate: u32,
    iters: usize,
    rng: &mut SeededRng,
) -> Result<GriffinLimOutput> {
    cfg.validate()?;
    if iters == 0 {
        return Err(Error::InvalidConfig("Griffin-Lim needs at least one iteration".into()));
    }
    if signal_len < cfg.window_length {
        return Err(Error::SignalTooShort {
            len: signal_len,
            window: cfg.window_length,
        });
    }
    check_len("Griffin-Lim frames", cfg.frame_count(signal_len), magnitude.len())?;
    for m in magnitude {
        check_len("Griffin-Lim bins", cfg.bins(), m.len())?;
    }
    let window = cfg.window_samples();
    let plan = plans(cfg.window_length);
    let with_phase = |phases: &[CVec]| -> Vec<CVec> {
        phases
            .iter()
            .zip(magnitude)
            .map(|(ph, mag)| {
                ph.iter()
                    .zip(mag)
                    .map(|(x, a)| {
                        let r = x.norm();
                        if r > 0.0 {
                            x * (a / r)
                        } else {
                            C64::new(*a, 0.0)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let init: Vec<CVec> = magnitude
        .iter()
        .map(|m| {
            m.iter()
                .map(|_| C64::from_polar(1.0, 2.0 * PI * rng.uniform()))
                .collect()
        })
        .collect();
    let mut x = istft_with(&with_phase(&init), cfg, signal_len, &window, &plan);
    let mut inconsistency = Vec::with_capacity(iters);
    for _ in 0..iters {
        let spec = stft_with(&x, cfg, &window, &plan);
        inconsistency.push(magnitude_distance(&spec, magnitude));
        x = istft_with(&with_phase(&spec), cfg, signal_len, &window, &plan);
    }
    Ok(GriffinLimOutput {
        waveform: Waveform::new(x, sample_rate)?,
        inconsistency,
    })
}

/// Phase-difference convention for PSNR-PD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMode {
    /// Compare inter-frame phase increments `phi_t - phi_{t-1}` per bin.
    #[default]
    InterFrame,
    /// Compare phases directly, `phi_ref - phi_est` per bin.
    PerBin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean of `|ref - est|^2` over all bins.
    pub mse: f64,
    /// `10 log10(max |ref|^2 / MSE(|ref|, |est|))`.
    pub psnr_ms: f64,
    /// `10 log10((2 pi)^2 / MSE(wrapped phase differences))`.
    pub psnr_pd: f64,
    /// Mean over frames of the RMS dB difference of power spectra.
    pub lsd: f64,
}

/// Cap applied to infinite PSNR values when written out.
pub const PSNR_CAP_DB: f64 = 200.0;

/// Power floor for the log-spectral distance.
const LSD_FLOOR: f64 = 1e-10;

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

fn psnr(peak_sq: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak_sq / mse).log10()
    }
}

/// Metrics over two spectrograms of the same shape.
pub fn eval_metrics(reference: &[CVec], estimate: &[CVec], mode: PhaseMode) -> Result<Metrics> {
    check_len("eval_metrics frames", reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let f = reference[0].len();
    for (r, e) in reference.iter().zip(estimate) {
        check_len("eval_metrics reference bins", f, r.len())?;
        check_len("eval_metrics estimate bins", f, e.len())?;
    }
    let count = (reference.len() * f) as f64;
    let mut mse = 0.0;
    let mut mag_mse = 0.0;
    let mut peak: f64 = 0.0;
    let mut lsd = 0.0;
    for (r, e) in reference.iter().zip(estimate) {
        let mut frame_lsd = 0.0;
        for (a, b) in r.iter().zip(e) {
            mse += (a - b).norm_sqr();
            mag_mse += (a.norm() - b.norm()).powi(2);
            peak = peak.max(a.norm_sqr());
            let d = 10.0 * (a.norm_sqr().max(LSD_FLOOR)).log10() - 10.0 * (b.norm_sqr().max(LSD_FLOOR)).log10();
            frame_lsd += d * d;
        }
        lsd += (frame_lsd / f as f64).sqrt();
    }
    let (phase_mse, phase_count) = match mode {
        PhaseMode::InterFrame => {
            let mut total = 0.0;
            for t in 1..reference.len() {
                for k in 0..f {
                    let dr = reference[t][k].arg() - reference[t - 1][k].arg();
                    let de = estimate[t][k].arg() - estimate[t - 1][k].arg();
                    total += wrap(dr - de).powi(2);
                }
            }
            (total, ((reference.len() - 1) * f) as f64)
        }
        PhaseMode::PerBin => {
            let mut total = 0.0;
            for (r, e) in reference.iter().zip(estimate) {
                for (a, b) in r.iter().zip(e) {
                    total += wrap(a.arg() - b.arg()).powi(2);
                }
            }
            (total, count)
        }
    };
    let pd = if phase_count == 0.0 {
        0.0
    } else {
        phase_mse / phase_count
    };
    Ok(Metrics {
        mse: mse / count,
        psnr_ms: psnr(peak, mag_mse / count),
        psnr_pd: psnr((2.0 * PI).powi(2), pd),
        lsd: lsd / reference.len() as f64,
    })
}

/// `10 log10(sum x^2 / sum (x - y)^2)` over `range`.
pub fn snr_db(reference: &[f64], estimate: &[f64], range: std::ops::Range<usize>) -> f64 {
    let (mut sig, mut err) = (0.0, 0.0);
    for n in range {
        sig += reference[n] * reference[n];
        err += (reference[n] - estimate[n]).powi(2);
    }
    if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sig / err).log10()
    }
}
