//! Doppler frequency shift estimation from one received window.
//!
//! Two spectral statistics are available:
//!
//! - [`EstimatorMode::LosPeak`]: Hann-windowed periodogram zero-padded x4,
//!   parabolic interpolation of the log-spectrum around the highest bin.
//!   When the window SNR is high enough that the Doppler-curve curvature
//!   inside the window dominates the error, the peak is refined with a cubic
//!   fit to the demodulated phase, which yields the instantaneous frequency at
//!   the window midpoint instead of a window average.
//! - [`EstimatorMode::NlosCentroid`]: power-weighted centroid of the bins
//!   that rise 6 dB above the median spectral level, restricted to
//!   `[-f_Dmax, +f_Dmax]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::channel::ReceivedWindow;

pub const ZERO_PAD_FACTOR: usize = 4;
pub const MIN_WINDOW_SAMPLES: usize = 64;
/// Normalized frequencies are clamped to `1 - CLAMP_EPS` in magnitude.
pub const CLAMP_EPS: f64 = 1e-3;
/// Samples with `|F|` below this carry almost no range information.
pub const LOW_INFO_F: f64 = 0.02;
/// Centroid bins must exceed the median spectral level by this much.
pub const CENTROID_THRESHOLD_DB: f64 = 6.0;
/// Per-sample SNR above which the phase refinement replaces the raw peak.
pub const REFINE_MIN_SNR_DB: f64 = 40.0;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("window has {0} samples; at least {MIN_WINDOW_SAMPLES} are required")]
    TooShort(usize),
    #[error("window contains non-finite samples")]
    NonFinite,
    #[error("f_Dmax must be positive (got {0})")]
    BadMaxDoppler(f64),
    #[error("no spectral bins above the detection threshold")]
    NoSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimatorMode {
    LosPeak,
    NlosCentroid,
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::LosPeak => "LOS-peak",
            EstimatorMode::NlosCentroid => "NLOS-centroid",
        })
    }
}

/// One Doppler estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DopplerSample {
    /// Window midpoint, seconds.
    pub t: f64,
    pub f_d_hat: f64,
    /// `f_d_hat / f_Dmax`, clamped into the open interval (-1, 1).
    pub normalized_f: f64,
    pub power: f64,
    pub mode: EstimatorMode,
}

impl DopplerSample {
    pub fn is_informative(&self) -> bool {
        self.normalized_f.abs() >= LOW_INFO_F
    }
}

pub fn normalize_frequency(f_d_hat: f64, f_dmax: f64) -> f64 {
    let limit = 1.0 - CLAMP_EPS;
    (f_d_hat / f_dmax).clamp(-limit, limit)
}

/// LOS-peak if the window power is within `los_threshold_db` of the
/// strongest UAV in the fleet, NLOS-centroid otherwise.
pub fn select_mode(power: f64, fleet_max_power: f64, los_threshold_db: f64) -> EstimatorMode {
    if power >= fleet_max_power - los_threshold_db {
        EstimatorMode::LosPeak
    } else {
        EstimatorMode::NlosCentroid
    }
}

/// Periodogram machinery for a fixed window length. Reuse one per window
/// length to avoid re-planning the FFT.
pub struct DfsEstimator {
    n: usize,
    taper: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for DfsEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DfsEstimator").field("n", &self.n).finish()
    }
}

impl DfsEstimator {
    pub fn new(n: usize) -> Self {
        let taper = (0..n)
            .map(|i| {
                let s = (PI * (i as f64 + 0.5) / n as f64).sin();
                s * s
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n * ZERO_PAD_FACTOR);
        Self { n, taper, fft }
    }

    pub fn window_len(&self) -> usize {
        self.n
    }

    fn fft_len(&self) -> usize {
        self.n * ZERO_PAD_FACTOR
    }

    /// Hann-tapered, zero-padded power spectrum in FFT bin order.
    pub fn power_spectrum(&self, samples: &[Complex64]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len()];
        for (b, (s, w)) in buf.iter_mut().zip(samples.iter().zip(&self.taper)) {
            *b = s * *w;
        }
        self.fft.process(&mut buf);
        buf.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Signed frequency of FFT bin `k`.
    pub fn bin_frequency(&self, k: f64, sample_rate: f64) -> f64 {
        let m = self.fft_len() as f64;
        let f = k * sample_rate / m;
        if k >= m / 2.0 {
            f - sample_rate
        } else {
            f
        }
    }

    pub fn estimate(
        &self,
        window: &ReceivedWindow,
        f_dmax: f64,
        mode: EstimatorMode,
    ) -> Result<DopplerSample, EstimateError> {
        let samples = &window.samples;
        if samples.len() < MIN_WINDOW_SAMPLES {
            return Err(EstimateError::TooShort(samples.len()));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(EstimateError::NonFinite);
        }
        if !(f_dmax > 0.0 && f_dmax.is_finite()) {
            return Err(EstimateError::BadMaxDoppler(f_dmax));
        }
        assert_eq!(samples.len(), self.n, "estimator planned for a different window length");

        let psd = self.power_spectrum(samples);
        let fs = window.sample_rate;
        let f_d_hat = match mode {
            EstimatorMode::LosPeak => self.peak_frequency(samples, &psd, fs),
            EstimatorMode::NlosCentroid => self.centroid_frequency(&psd, fs, f_dmax)?,
        };
        Ok(DopplerSample {
            t: window.center_time(),
            f_d_hat,
            normalized_f: normalize_frequency(f_d_hat, f_dmax),
            power: window.received_power,
            mode,
        })
    }

    fn peak_frequency(&self, samples: &[Complex64], psd: &[f64], fs: f64) -> f64 {
        let m = psd.len();
        let (k, &peak) = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        let left = psd[(k + m - 1) % m];
        let right = psd[(k + 1) % m];
        let offset = if left > 0.0 && right > 0.0 && peak > 0.0 {
            let (a, b, c) = (left.ln(), peak.ln(), right.ln());
            let denom = a - 2.0 * b + c;
            if denom < 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        } else {
            0.0
        };
        let mut pos = k as f64 + offset;
        if pos < 0.0 {
            pos += m as f64;
        }
        let coarse = self.bin_frequency(pos, fs);

        if self.snr_db(psd, peak) >= REFINE_MIN_SNR_DB {
            if let Some(refined) = self.refine_by_phase(samples, coarse, fs) {
                if (refined - coarse).abs() <= fs / self.n as f64 {
                    return refined;
                }
            }
        }
        coarse
    }

    /// Per-sample SNR implied by the peak height over the median level.
    fn snr_db(&self, psd: &[f64], peak: f64) -> f64 {
        let noise_mean = median(psd) / std::f64::consts::LN_2;
        if noise_mean <= 0.0 {
            return f64::INFINITY;
        }
        let sum_w: f64 = self.taper.iter().sum();
        let sum_w2: f64 = self.taper.iter().map(|w| w * w).sum();
        10.0 * (peak / noise_mean * sum_w2 / (sum_w * sum_w)).log10()
    }

    /// Instantaneous frequency at the window midpoint from a cubic fit to the
    /// unwrapped phase of the signal demodulated by `coarse`.
    fn refine_by_phase(&self, samples: &[Complex64], coarse: f64, fs: f64) -> Option<f64> {
        let n = samples.len();
        let half = 0.5 * n as f64 / fs;
        let mut points: Vec<(f64, f64)> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let tau = (i as f64 + 0.5) / fs - half;
                (tau, (s * Complex64::from_polar(1.0, -2.0 * PI * coarse * tau)).arg())
            })
            .collect();
        // unwrap
        for i in 1..points.len() {
            let mut d = points[i].1 - points[i - 1].1;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            points[i].1 = points[i - 1].1 + d;
        }
        let mut normal = Matrix4::<f64>::zeros();
        let mut rhs = Vector4::<f64>::zeros();
        for &(tau, phase) in &points {
            let basis = Vector4::new(1.0, tau, tau * tau, tau * tau * tau);
            normal += basis * basis.transpose();
            rhs += basis * phase;
        }
        let coeffs = normal.lu().solve(&rhs)?;
        let f = coarse + coeffs[1] / (2.0 * PI);
        f.is_finite().then_some(f)
    }

    fn centroid_frequency(&self, psd: &[f64], fs: f64, f_dmax: f64) -> Result<f64, EstimateError> {
        let threshold = median(psd) * 10f64.powf(CENTROID_THRESHOLD_DB / 10.0);
        let mut weight = 0.0;
        let mut moment = 0.0;
        for (k, &p) in psd.iter().enumerate() {
            let f = self.bin_frequency(k as f64, fs);
            if f.abs() <= f_dmax && p > threshold {
                weight += p;
                moment += p * f;
            }
        }
        if weight > 0.0 {
            Ok(moment / weight)
        } else {
            Err(EstimateError::NoSignal)
        }
    }
}

/// Spectral centroid and second central moment (Hz^2) of a PSD, over bins
/// with `|f| <= band`.
pub fn spectral_moments(estimator: &DfsEstimator, psd: &[f64], fs: f64, band: f64) -> (f64, f64) {
    let mut w = 0.0;
    let mut m1 = 0.0;
    for (k, &p) in psd.iter().enumerate() {
        let f = estimator.bin_frequency(k as f64, fs);
        if f.abs() <= band {
            w += p;
            m1 += p * f;
        }
    }
    let mean = m1 / w;
    let var = psd
        .iter()
        .enumerate()
        .map(|(k, &p)| (estimator.bin_frequency(k as f64, fs), p))
        .filter(|(f, _)| f.abs() <= band)
        .map(|(f, p)| p * (f - mean).powi(2))
        .sum::<f64>()
        / w;
    (mean, var)
}

/// Convenience wrapper that plans a fresh estimator for the window.
pub fn estimate_dfs(
    window: &ReceivedWindow,
    f_dmax: f64,
    mode: EstimatorMode,
) -> Result<DopplerSample, EstimateError> {
    if window.samples.len() < MIN_WINDOW_SAMPLES {
        return Err(EstimateError::TooShort(window.samples.len()));
    }
    DfsEstimator::new(window.samples.len()).estimate(window, f_dmax, mode)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}
