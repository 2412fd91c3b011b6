#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use sdfloc::channel::{max_doppler_hz, true_dfs};
use sdfloc::dfs::{DopplerSample, EstimatorMode};
use sdfloc::scenario::{ConditionTimeline, EmitterConfig, TrajectorySegment, UavConfig};
use sdfloc::{ChannelParams, Condition, Scenario, Vec3};

pub const F0: f64 = 3.0e8;

pub fn shipped_scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/five_uav_city.scn")
}

pub fn segment(start: [f64; 3], heading: [f64; 3], speed: f64, t0: f64, duration: f64) -> TrajectorySegment {
    TrajectorySegment {
        start_world: Vec3::from(start),
        heading_unit: Vec3::from(heading).normalize(),
        speed,
        start_time: t0,
        duration,
    }
}

/// Scenario with one straight-leg UAV per entry of `uavs`, all with the same
/// constant condition.
pub fn scenario(
    emitter: [f64; 3],
    uavs: Vec<UavConfig>,
    condition: Condition,
    noise_floor: f64,
    seed: u64,
) -> Scenario {
    let tracks: BTreeMap<u32, Vec<(f64, Condition)>> = uavs
        .iter()
        .map(|u| (u.id, vec![(u.start_time(), condition)]))
        .collect();
    Scenario {
        emitter: EmitterConfig {
            position_world: Vec3::from(emitter),
            carrier_frequency: F0,
            transmit_power: 0.0,
        },
        uavs,
        timeline: ConditionTimeline { tracks },
        channel: ChannelParams::new(noise_floor, 22.0),
        sample_rate: 200.0,
        window_duration: 1.0,
        dfs_history_len: 20,
        seed,
        los_threshold_db: 6.0,
    }
}

/// One UAV at (0, 0, 100) flying +x at 10 m/s for `windows` seconds; the
/// emitter at world (100, 50, 0) sits at local (100, 50, -100).
pub fn canonical(windows: usize, condition: Condition, noise_floor: f64) -> Scenario {
    let uav = UavConfig {
        id: 1,
        trajectory: vec![segment([0.0, 0.0, 100.0], [1.0, 0.0, 0.0], 10.0, 0.0, windows as f64)],
    };
    scenario([100.0, 50.0, 0.0], vec![uav], condition, noise_floor, 7)
}

/// Exact Doppler samples from the forward model for an emitter at local
/// `p`, at absolute times `times` on a pass starting at t = 0.
pub fn exact_samples(p: Vec3, v: f64, times: &[f64]) -> Vec<DopplerSample> {
    let f_dmax = max_doppler_hz(F0, v);
    times
        .iter()
        .map(|&t| {
            let f = true_dfs(&p, v, F0, t).unwrap();
            DopplerSample {
                t,
                f_d_hat: f,
                normalized_f: f / f_dmax,
                power: 0.0,
                mode: EstimatorMode::LosPeak,
            }
        })
        .collect()
}
