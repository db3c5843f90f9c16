//! Synthetic datasets: correlated 1-D complex mixtures and speech-like audio.

use std::f64::consts::PI;

use crate::complex::{CVec, SeededRng, C64};
use crate::error::{Error, Result};

/// Mixture of correlated complex Gaussians on one complex dimension.
///
/// Components share the covariance `s^2 [[1, rho], [rho, 1]]` over
/// `(Re, Im)` and have means evenly spaced along the `(1, 1)` diagonal. The
/// whole population is then rescaled along the `(1, 1)` and `(1, -1)`
/// directions so the population has zero mean, unit variance in both parts
/// and correlation `correlation`; a finite draw matches up to sampling error.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub samples: usize,
    pub components: usize,
    pub correlation: f64,
    /// Within-component standard deviation before rescaling.
    pub component_std: f64,
    /// Distance between neighbouring component means before rescaling.
    pub spacing: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            samples: 2000,
            components: 2,
            correlation: 0.8,
            component_std: 0.5,
            spacing: 2.0,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("mixture needs at least one sample".into()));
        }
        if self.components == 0 {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        if !(self.correlation > -1.0 && self.correlation < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "correlation {} outside (-1, 1)",
                self.correlation
            )));
        }
        if !(self.component_std > 0.0 && self.component_std.is_finite()) {
            return Err(Error::InvalidConfig("component_std must be positive".into()));
        }
        if !(self.spacing >= 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidConfig("spacing must be non-negative".into()));
        }
        Ok(())
    }

    /// Population variance of the diagonal coordinate before rescaling.
    fn diagonal_variance(&self) -> f64 {
        let k = self.components as f64;
        // Variance of k evenly spaced points with the given spacing.
        let between = self.spacing * self.spacing * (k * k - 1.0) / 12.0;
        self.component_std.powi(2) * (1.0 + self.correlation) + between
    }
}

/// Draws `spec.samples` points; component labels are chosen uniformly.
pub fn mixture_samples(spec: &MixtureSpec, rng: &mut SeededRng) -> Result<Vec<C64>> {
    spec.validate()?;
    let rho = spec.correlation;
    let s = spec.component_std;
    let k = spec.components;
    let scale_u = ((1.0 + rho) / spec.diagonal_variance()).sqrt();
    let scale_v = 1.0 / s;
    let half = (k as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let label = rng.below(k) as f64;
        // Work in the rotated frame u = (x + y)/sqrt 2, v = (x - y)/sqrt 2,
        // where the component covariance is diag(s^2 (1 + rho), s^2 (1 - rho)).
        let u = spec.spacing * (label - half) + s * (1.0 + rho).sqrt() * rng.normal();
        let v = s * (1.0 - rho).sqrt() * rng.normal();
        let (u, v) = (u * scale_u, v * scale_v);
        out.push(C64::new((u + v) / 2f64.sqrt(), (u - v) / 2f64.sqrt()));
    }
    Ok(out)
}

/// Pearson correlation of real and imaginary parts.
pub fn re_im_correlation(points: &[C64]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|z| z.re).sum::<f64>() / n;
    let my = points.iter().map(|z| z.im).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for z in points {
        let (dx, dy) = (z.re - mx, z.im - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Wraps scalar points as one-dimensional visible vectors.
pub fn as_vectors(points: &[C64]) -> Vec<CVec> {
    points.iter().map(|&z| vec![z]).collect()
}

/// Parameters of the speech-like generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSpec {
    pub seconds: f64,
    pub sample_rate: u32,
}

impl Default for SpeechSpec {
    fn default() -> Self {
        Self {
            seconds: 60.0,
            sample_rate: 16_000,
        }
    }
}

/// Formant centre frequencies (Hz) of a few vowel-like spectral envelopes.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];

fn formant_gain(freq: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let bw = 80.0 + 40.0 * k as f64;
            let d = (freq - f) / bw;
            1.0 / (1.0 + d * d) / (1.0 + k as f64)
        })
        .sum()
}

/// Generates a speech-like signal: voiced syllables with gliding pitch and
/// vowel-shaped harmonic envelopes, separated by short noise bursts and
/// pauses. Peak amplitude is normalized to 0.5.
pub fn speech_like(spec: &SpeechSpec, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if !(spec.seconds > 0.0 && spec.seconds.is_finite()) || spec.sample_rate == 0 {
        return Err(Error::InvalidConfig(
            "speech-like generator needs positive duration and rate".into(),
        ));
    }
    let sr = spec.sample_rate as f64;
    let total = (spec.seconds * sr).round() as usize;
    let mut out = vec![0.0; total];
    let nyquist = sr / 2.0;
    let mut pos = 0usize;
    let mut phase = 0.0f64;
    while pos < total {
        // Unvoiced onset burst.
        let burst = ((0.02 + 0.04 * rng.uniform()) * sr) as usize;
        let burst_amp = 0.05 + 0.1 * rng.uniform();
        let mut prev = 0.0;
        for n in 0..burst.min(total - pos) {
            let white = rng.normal();
            let hp = white - 0.9 * prev;
            prev = white;
            let env = (PI * n as f64 / burst as f64).sin();
            out[pos + n] += burst_amp * env * hp;
        }
        pos += burst;
        if pos >= total {
            break;
        }
        // Voiced nucleus.
        let len = ((0.12 + 0.2 * rng.uniform()) * sr) as usize;
        let f0_start = 90.0 + 140.0 * rng.uniform();
        let f0_end = f0_start * (0.8 + 0.4 * rng.uniform());
        let v0 = VOWELS[rng.below(VOWELS.len())];
        let v1 = VOWELS[rng.below(VOWELS.len())];
        let amp = 0.3 + 0.7 * rng.uniform();
        for n in 0..len.min(total - pos) {
            let frac = n as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += 2.0 * PI * f0 / sr;
            if phase > 2.0 * PI * 1e6 {
                phase -= 2.0 * PI * 1e6;
            }
            let formants = [
                v0[0] + (v1[0] - v0[0]) * frac,
                v0[1] + (v1[1] - v0[1]) * frac,
                v0[2] + (v1[2] - v0[2]) * frac,
            ];
            let env = (PI * frac).sin().powf(0.7);
            let mut sample = 0.0;
            let mut k = 1.0;
            while k * f0 < nyquist * 0.9 {
                sample += formant_gain(k * f0, &formants) * (k * phase).sin();
                k += 1.0;
            }
            out[pos + n] += amp * env * sample;
        }
        pos += len;
        // Pause.
        pos += ((0.01 + 0.08 * rng.uniform()) * sr) as usize;
    }
    let noise_floor = 1e-3;
    for x in out.iter_mut() {
        *x += noise_floor * rng.normal();
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mixture_hits_target_correlation() {
        let pts = mixture_samples(&MixtureSpec::default(), &mut SeededRng::new(1, 0)).unwrap();
        assert_eq!(pts.len(), 2000);
        assert!((re_im_correlation(&pts) - 0.8).abs() < 0.05);
    }

    #[test]
    fn zero_correlation_mixture() {
        let spec = MixtureSpec {
            correlation: 0.0,
            ..MixtureSpec::default()
        };
        let pts = mixture_samples(&spec, &mut SeededRng::new(2, 0)).unwrap();
        assert!(re_im_correlation(&pts).abs() < 0.05);
    }

    #[test]
    fn mixture_has_unit_variances() {
        let spec = MixtureSpec {
            samples: 100_000,
            components: 3,
            correlation: -0.4,
            ..MixtureSpec::default()
        };
        let pts = mixture_samples(&spec, &mut SeededRng::new(3, 0)).unwrap();
        let n = pts.len() as f64;
        let vx = pts.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let vy = pts.iter().map(|z| z.im * z.im).sum::<f64>() / n;
        assert!((vx - 1.0).abs() < 0.03 && (vy - 1.0).abs() < 0.03, "{vx} {vy}");
        assert!((re_im_correlation(&pts) + 0.4).abs() < 0.02);
    }

    #[test]
    fn invalid_mixture_rejected() {
        let spec = MixtureSpec {
            correlation: 1.0,
            ..MixtureSpec::default()
        };
        assert!(mixture_samples(&spec, &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn speech_like_is_bounded_and_deterministic() {
        let spec = SpeechSpec {
            seconds: 1.0,
            sample_rate: 16_000,
        };
        let a = speech_like(&spec, &mut SeededRng::new(4, 0)).unwrap();
        let b = speech_like(&spec, &mut SeededRng::new(4, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16_000);
        assert!(a.iter().all(|x| x.abs() <= 0.5 + 1e-12));
    }
}
