//! Received-signal synthesis for one UAV and one estimation window.
//!
//! The channel is a surrogate with three conditions:
//!
//! - LOS: a single direct path whose phase follows the true range history,
//!   so the instantaneous frequency is exactly the geometric Doppler shift.
//! - OLOS: the same direct path with extra attenuation.
//! - NLOS: a sum of scattered components with Doppler offsets
//!   `f_Dmax * cos(theta_k)`, `theta_k` spread around the direct bearing. The
//!   diffuse sum is normalized to unit mean power before the excess loss is
//!   applied, so the power gap between conditions is deterministic.
//!
//! Power convention: 0 dBm is unit mean-square amplitude.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{Condition, Scenario, ScenarioError, Vec3};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Power reported for a window with no energy at all.
pub const SILENT_POWER_DBM: f64 = -300.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("receiver coincides with the emitter; Doppler shift is undefined")]
    Singularity,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelParams {
    /// Complex noise power per sample in dBm; `-inf` disables noise.
    pub noise_floor: f64,
    pub path_loss_exponent: f64,
    pub olos_excess_loss: f64,
    pub nlos_excess_loss: f64,
    pub nlos_scatterer_count: usize,
    /// Half-width, in radians, of the scatterer bearing spread around the
    /// direct path. `PI` covers the full azimuth ring.
    pub nlos_angular_spread: f64,
    pub reference_loss_at_1m: f64,
}

impl ChannelParams {
    pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 2.0;
    pub const DEFAULT_OLOS_EXCESS_LOSS: f64 = 10.0;
    pub const DEFAULT_NLOS_EXCESS_LOSS: f64 = 20.0;
    pub const DEFAULT_NLOS_SCATTERER_COUNT: usize = 32;
    pub const DEFAULT_NLOS_ANGULAR_SPREAD: f64 = PI;

    pub fn new(noise_floor: f64, reference_loss_at_1m: f64) -> Self {
        Self {
            noise_floor,
            path_loss_exponent: Self::DEFAULT_PATH_LOSS_EXPONENT,
            olos_excess_loss: Self::DEFAULT_OLOS_EXCESS_LOSS,
            nlos_excess_loss: Self::DEFAULT_NLOS_EXCESS_LOSS,
            nlos_scatterer_count: Self::DEFAULT_NLOS_SCATTERER_COUNT,
            nlos_angular_spread: Self::DEFAULT_NLOS_ANGULAR_SPREAD,
            reference_loss_at_1m,
        }
    }

    pub fn noise_enabled(&self) -> bool {
        self.noise_floor.is_finite()
    }

    /// Log-distance path loss; distances under 1 m are treated as 1 m.
    pub fn path_loss_db(&self, distance: f64) -> f64 {
        self.reference_loss_at_1m + 10.0 * self.path_loss_exponent * distance.max(1.0).log10()
    }

    pub fn excess_loss_db(&self, condition: Condition) -> f64 {
        match condition {
            Condition::Los => 0.0,
            Condition::Olos => self.olos_excess_loss,
            Condition::Nlos => self.nlos_excess_loss,
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.noise_floor.is_nan() || self.noise_floor == f64::INFINITY {
            v.push("channel.noise_floor must be finite or -inf".to_string());
        }
        if !self.reference_loss_at_1m.is_finite() {
            v.push("channel.reference_loss_at_1m must be finite".to_string());
        }
        if !(self.path_loss_exponent >= 0.0 && self.path_loss_exponent.is_finite()) {
            v.push("channel.path_loss_exponent must be finite and >= 0".to_string());
        }
        if !(self.olos_excess_loss >= 0.0 && self.olos_excess_loss.is_finite()) {
            v.push("channel.olos_excess_loss must be finite and >= 0".to_string());
        }
        if !(self.nlos_excess_loss >= 0.0 && self.nlos_excess_loss.is_finite()) {
            v.push("channel.nlos_excess_loss must be finite and >= 0".to_string());
        }
        if self.nlos_scatterer_count < 1 {
            v.push("channel.nlos_scatterer_count must be >= 1".to_string());
        }
        if !(self.nlos_angular_spread >= 0.0 && self.nlos_angular_spread <= PI) {
            v.push("channel.nlos_angular_spread must lie in [0, pi]".to_string());
        }
        v
    }
}

/// `f0 * v / c`.
pub fn max_doppler_hz(carrier_frequency: f64, speed: f64) -> f64 {
    carrier_frequency * speed / SPEED_OF_LIGHT
}

/// Doppler shift seen by a UAV flying along local +x at speed `v`, for an
/// emitter at local coordinates `emitter_local`, at elapsed time `t`.
pub fn true_dfs(emitter_local: &Vec3, v: f64, f0: f64, t: f64) -> Result<f64, ChannelError> {
    let along = emitter_local.x - v * t;
    let range = (along * along + emitter_local.y.powi(2) + emitter_local.z.powi(2)).sqrt();
    if range == 0.0 {
        return Err(ChannelError::Singularity);
    }
    Ok(max_doppler_hz(f0, v) * along / range)
}

/// World-frame form of [`true_dfs`]: projection of the receiver velocity on
/// the receiver-to-emitter line, scaled by `f0 / c`.
pub fn doppler_world(
    uav_position: &Vec3,
    uav_velocity: &Vec3,
    emitter: &Vec3,
    f0: f64,
) -> Result<f64, ChannelError> {
    let los = emitter - uav_position;
    let range = los.norm();
    if range == 0.0 {
        return Err(ChannelError::Singularity);
    }
    Ok(f0 / SPEED_OF_LIGHT * uav_velocity.dot(&los) / range)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedWindow {
    pub uav_id: u32,
    pub t_start: f64,
    pub sample_rate: f64,
    pub samples: Vec<Complex64>,
    pub true_condition: Condition,
    /// Measured power in dBm.
    pub received_power: f64,
}

impl ReceivedWindow {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn center_time(&self) -> f64 {
        self.t_start + 0.5 * self.duration()
    }

    /// Time of sample `n`. Samples sit at the centers of their sampling
    /// intervals so the window midpoint is the centroid of the sample times.
    pub fn sample_time(&self, n: usize) -> f64 {
        self.t_start + (n as f64 + 0.5) / self.sample_rate
    }
}

/// `10 log10(mean |x|^2)` with the 0 dBm = unit mean-square convention.
/// Returns [`SILENT_POWER_DBM`] for an empty or all-zero window.
pub fn received_power_dbm(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return SILENT_POWER_DBM;
    }
    let mean_sq = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    if mean_sq > 0.0 {
        (10.0 * mean_sq.log10()).max(SILENT_POWER_DBM)
    } else {
        SILENT_POWER_DBM
    }
}

/// Independent generator for one (uav, window) pair. Serial and parallel
/// schedules draw identical streams.
pub fn window_rng(seed: u64, uav_id: u32, window_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(uav_id) << 40) ^ window_index);
    rng
}

/// Synthesizes the complex baseband window received by `uav_id` starting at
/// `t_start`. The propagation condition comes from the scenario timeline at
/// the window midpoint.
pub fn synthesize_window<R: Rng + ?Sized>(
    scenario: &Scenario,
    uav_id: u32,
    t_start: f64,
    rng: &mut R,
) -> Result<ReceivedWindow, ChannelError> {
    let uav = scenario.uav(uav_id)?;
    let n = scenario.samples_per_window();
    let fs = scenario.sample_rate;
    let t_mid = t_start + 0.5 * n as f64 / fs;
    // check the whole window lies on the route
    uav.segment_at(t_start)?;
    uav.segment_at(t_start + n as f64 / fs)?;
    let condition = scenario.timeline.condition_at(uav_id, t_mid)?;

    let emitter = scenario.emitter.position_world;
    let f0 = scenario.emitter.carrier_frequency;
    let params = &scenario.channel;

    let seg_mid = uav.segment_at(t_mid)?;
    let range_at = |t: f64| -> Result<f64, ChannelError> {
        let p = uav.segment_at(t)?.position_at(t);
        Ok((emitter - p).norm())
    };
    let range_mid = range_at(t_mid)?;
    if range_mid == 0.0 {
        return Err(ChannelError::Singularity);
    }
    let rx_dbm = scenario.emitter.transmit_power
        - params.path_loss_db(range_mid)
        - params.excess_loss_db(condition);
    let amplitude = 10f64.powf(rx_dbm / 20.0);

    let mut samples = Vec::with_capacity(n);
    match condition {
        Condition::Los | Condition::Olos => {
            let phase0 = rng.random::<f64>() * 2.0 * PI;
            let k = 2.0 * PI * f0 / SPEED_OF_LIGHT;
            for i in 0..n {
                let t = t_start + (i as f64 + 0.5) / fs;
                // phase = -2 pi f0 r(t) / c, whose derivative is the Doppler shift
                let phase = phase0 - k * (range_at(t)? - range_mid);
                samples.push(Complex64::from_polar(amplitude, phase));
            }
        }
        Condition::Nlos => {
            let f_dmax = max_doppler_hz(f0, seg_mid.speed);
            let p_mid = seg_mid.position_at(t_mid);
            let f_mid = doppler_world(&p_mid, &seg_mid.velocity(), &emitter, f0)?;
            let bearing = (f_mid / f_dmax).clamp(-1.0, 1.0).acos();
            let spread = params.nlos_angular_spread;
            let components: Vec<(f64, f64)> = (0..params.nlos_scatterer_count)
                .map(|_| {
                    let offset = (2.0 * rng.random::<f64>() - 1.0) * spread;
                    let phase = rng.random::<f64>() * 2.0 * PI;
                    (f_dmax * (bearing + offset).cos(), phase)
                })
                .collect();
            for i in 0..n {
                let tau = (i as f64 + 0.5) / fs - 0.5 * n as f64 / fs;
                let s: Complex64 = components
                    .iter()
                    .map(|&(f, ph)| Complex64::from_polar(1.0, ph + 2.0 * PI * f * tau))
                    .sum();
                samples.push(s);
            }
            let mean_sq = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
            let scale = if mean_sq > 0.0 {
                amplitude / mean_sq.sqrt()
            } else {
                0.0
            };
            samples.iter_mut().for_each(|s| *s *= scale);
        }
    }

    if params.noise_enabled() {
        let sigma = (10f64.powf(params.noise_floor / 10.0) / 2.0).sqrt();
        for s in samples.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s += Complex64::new(re * sigma, im * sigma);
        }
    }

    let received_power = received_power_dbm(&samples);
    Ok(ReceivedWindow {
        uav_id,
        t_start,
        sample_rate: fs,
        samples,
        true_condition: condition,
        received_power,
    })
}
