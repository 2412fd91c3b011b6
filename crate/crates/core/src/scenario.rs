//! World description: emitter, UAV trajectories, the scripted propagation
//! condition timeline and the per-segment local frames the Doppler solver
//! works in.
//!
//! Scenario files are TOML with the sections `[emitter]`, `[[uav]]`,
//! `[[uav.segment]]`, `[timeline]`, `[channel]` and `[sim]`. Unknown keys are
//! rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{max_doppler_hz, ChannelParams};

pub type Vec3 = Vector3<f64>;

const UNIT_NORM_TOL: f64 = 1e-9;
const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("time {t} s is outside the trajectory span [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("heading {0:?} has no horizontal component; cannot build a local frame")]
    DegenerateFrame([f64; 3]),
    #[error("unknown uav id {0}")]
    UnknownUav(u32),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("scenario invalid:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// Propagation condition on the path between a UAV and the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "OLOS")]
    Olos,
    #[serde(rename = "NLOS")]
    Nlos,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Los => "LOS",
            Condition::Olos => "OLOS",
            Condition::Nlos => "NLOS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitterConfig {
    pub position_world: Vec3,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    /// Transmit power in dBm.
    pub transmit_power: f64,
}

/// One rectilinear, constant-speed leg of a UAV route.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySegment {
    pub start_world: Vec3,
    pub heading_unit: Vec3,
    pub speed: f64,
    pub start_time: f64,
    pub duration: f64,
}

impl TrajectorySegment {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn velocity(&self) -> Vec3 {
        self.heading_unit * self.speed
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        self.start_world + self.velocity() * (t - self.start_time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavConfig {
    pub id: u32,
    pub trajectory: Vec<TrajectorySegment>,
}

impl UavConfig {
    pub fn start_time(&self) -> f64 {
        self.trajectory.first().map_or(0.0, |s| s.start_time)
    }

    pub fn end_time(&self) -> f64 {
        self.trajectory.last().map_or(0.0, |s| s.end_time())
    }

    /// Index of the segment active at `t`. A boundary instant belongs to the
    /// later segment, except at the very end of the route.
    pub fn segment_index_at(&self, t: f64) -> Result<usize, ScenarioError> {
        let (start, end) = (self.start_time(), self.end_time());
        if self.trajectory.is_empty() || !(t >= start - TIME_TOL && t <= end + TIME_TOL) {
            return Err(ScenarioError::OutOfRange { t, start, end });
        }
        let idx = self
            .trajectory
            .iter()
            .rposition(|s| s.start_time <= t + TIME_TOL)
            .unwrap_or(0);
        Ok(idx)
    }

    pub fn segment_at(&self, t: f64) -> Result<&TrajectorySegment, ScenarioError> {
        self.segment_index_at(t).map(|i| &self.trajectory[i])
    }
}

/// World position of a UAV at time `t`.
pub fn uav_position_at(uav: &UavConfig, t: f64) -> Result<Vec3, ScenarioError> {
    Ok(uav.segment_at(t)?.position_at(t))
}

/// Scripted LOS/OLOS/NLOS intervals per UAV. Each track is a sorted list of
/// `(start_time, condition)` change points; a condition holds until the next
/// change point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionTimeline {
    pub tracks: BTreeMap<u32, Vec<(f64, Condition)>>,
}

impl ConditionTimeline {
    pub fn condition_at(&self, uav_id: u32, t: f64) -> Result<Condition, ScenarioError> {
        let track = self
            .tracks
            .get(&uav_id)
            .ok_or(ScenarioError::UnknownUav(uav_id))?;
        let first = track.first().ok_or(ScenarioError::UnknownUav(uav_id))?;
        if t < first.0 {
            return Err(ScenarioError::OutOfRange {
                t,
                start: first.0,
                end: f64::INFINITY,
            });
        }
        // boundary instant belongs to the later interval
        let idx = track.partition_point(|(start, _)| *start <= t);
        Ok(track[idx - 1].1)
    }
}

pub fn condition_at(
    timeline: &ConditionTimeline,
    uav_id: u32,
    t: f64,
) -> Result<Condition, ScenarioError> {
    timeline.condition_at(uav_id, t)
}

/// Rectilinear-pass frame: the UAV moves along +x at z = 0, z is world
/// vertical, y completes a right-handed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFrame {
    pub origin_world: Vec3,
    /// Rows are the local axes expressed in world coordinates.
    pub rotation: Matrix3<f64>,
    pub speed: f64,
    /// Absolute time at which the UAV is at the frame origin.
    pub start_time: f64,
}

impl LocalFrame {
    pub fn to_local(&self, p_world: &Vec3) -> Vec3 {
        self.rotation * (p_world - self.origin_world)
    }

    pub fn to_world(&self, p_local: &Vec3) -> Vec3 {
        self.rotation.transpose() * p_local + self.origin_world
    }

    /// Elapsed time along the pass for absolute time `t`.
    pub fn elapsed(&self, t: f64) -> f64 {
        t - self.start_time
    }

    pub fn along_track_axis(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }
}

pub fn build_local_frame(segment: &TrajectorySegment) -> Result<LocalFrame, ScenarioError> {
    let up = Vec3::z();
    let h = segment.heading_unit;
    let horizontal = Vec3::new(h.x, h.y, 0.0);
    if horizontal.norm() < UNIT_NORM_TOL {
        return Err(ScenarioError::DegenerateFrame([h.x, h.y, h.z]));
    }
    let x_axis = h.normalize();
    let z_axis = (up - x_axis * up.dot(&x_axis)).normalize();
    let y_axis = z_axis.cross(&x_axis);
    let rotation = Matrix3::from_rows(&[
        x_axis.transpose(),
        y_axis.transpose(),
        z_axis.transpose(),
    ]);
    Ok(LocalFrame {
        origin_world: segment.start_world,
        rotation,
        speed: segment.speed,
        start_time: segment.start_time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub emitter: EmitterConfig,
    pub uavs: Vec<UavConfig>,
    pub timeline: ConditionTimeline,
    pub channel: ChannelParams,
    pub sample_rate: f64,
    pub window_duration: f64,
    pub dfs_history_len: usize,
    pub seed: u64,
    pub los_threshold_db: f64,
}

impl Scenario {
    pub fn uav(&self, id: u32) -> Result<&UavConfig, ScenarioError> {
        self.uavs
            .iter()
            .find(|u| u.id == id)
            .ok_or(ScenarioError::UnknownUav(id))
    }

    /// Time span covered by every UAV route.
    pub fn span(&self) -> (f64, f64) {
        let start = self
            .uavs
            .iter()
            .map(UavConfig::start_time)
            .fold(f64::NEG_INFINITY, f64::max);
        let end = self
            .uavs
            .iter()
            .map(UavConfig::end_time)
            .fold(f64::INFINITY, f64::min);
        (start, end)
    }

    pub fn samples_per_window(&self) -> usize {
        (self.sample_rate * self.window_duration).round() as usize
    }

    pub fn window_count(&self) -> usize {
        let (start, end) = self.span();
        if !(end > start) || !(self.window_duration > 0.0) {
            return 0;
        }
        ((end - start) / self.window_duration + TIME_TOL).floor() as usize
    }

    pub fn window_start(&self, k: usize) -> f64 {
        self.span().0 + k as f64 * self.window_duration
    }

    /// Largest Doppler shift any UAV can observe.
    pub fn max_doppler(&self) -> f64 {
        self.uavs
            .iter()
            .flat_map(|u| u.trajectory.iter())
            .map(|s| max_doppler_hz(self.emitter.carrier_frequency, s.speed))
            .fold(0.0, f64::max)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v = Vec::new();
        let e = &self.emitter;
        if !(e.carrier_frequency > 0.0 && e.carrier_frequency.is_finite()) {
            v.push(format!(
                "emitter.carrier_frequency must be > 0 (got {})",
                e.carrier_frequency
            ));
        }
        if !e.transmit_power.is_finite() {
            v.push("emitter.transmit_power must be finite".to_string());
        }
        if !e.position_world.iter().all(|c| c.is_finite()) {
            v.push("emitter.position must be finite".to_string());
        }
        if self.uavs.is_empty() {
            v.push("at least one [[uav]] is required".to_string());
        }

        let mut ids = BTreeSet::new();
        for uav in &self.uavs {
            let id = uav.id;
            if !ids.insert(id) {
                v.push(format!("uav id {id} is not unique"));
            }
            if uav.trajectory.is_empty() {
                v.push(format!("uav {id}: at least one [[uav.segment]] is required"));
            }
            for (i, s) in uav.trajectory.iter().enumerate() {
                let n = i + 1;
                if !(s.speed > 0.0 && s.speed.is_finite()) {
                    v.push(format!("uav {id} segment {n}: speed must be > 0 (got {})", s.speed));
                }
                if !(s.duration > 0.0 && s.duration.is_finite()) {
                    v.push(format!(
                        "uav {id} segment {n}: duration must be > 0 (got {})",
                        s.duration
                    ));
                }
                let norm = s.heading_unit.norm();
                if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                    v.push(format!(
                        "uav {id} segment {n}: heading must be a unit vector (norm {norm})"
                    ));
                }
                if s.heading_unit.z.abs() > UNIT_NORM_TOL {
                    v.push(format!(
                        "uav {id} segment {n}: heading must be horizontal (constant altitude)"
                    ));
                }
                if !s.start_world.iter().all(|c| c.is_finite()) || !s.start_time.is_finite() {
                    v.push(format!("uav {id} segment {n}: start must be finite"));
                }
                if i > 0 {
                    let prev = &uav.trajectory[i - 1];
                    if (prev.end_time() - s.start_time).abs() > TIME_TOL {
                        v.push(format!(
                            "uav {id} segment {n}: start_time {} does not follow previous segment end {}",
                            s.start_time,
                            prev.end_time()
                        ));
                    }
                    let gap = (prev.position_at(prev.end_time()) - s.start_world).norm();
                    if gap > 1e-6 {
                        v.push(format!(
                            "uav {id} segment {n}: start position is {gap:.3} m from the previous segment end"
                        ));
                    }
                }
            }
        }

        let (start, end) = self.span();
        for uav in &self.uavs {
            match self.timeline.tracks.get(&uav.id) {
                None => v.push(format!("timeline has no track for uav {}", uav.id)),
                Some(track) => {
                    if track.is_empty() {
                        v.push(format!("timeline track for uav {} is empty", uav.id));
                    } else {
                        if track[0].0 > start + TIME_TOL {
                            v.push(format!(
                                "timeline track for uav {} starts at {} s, after the simulation start {} s",
                                uav.id, track[0].0, start
                            ));
                        }
                        if track.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                            v.push(format!(
                                "timeline track for uav {} is not strictly increasing in time",
                                uav.id
                            ));
                        }
                    }
                }
            }
        }
        for id in self.timeline.tracks.keys() {
            if !ids.contains(id) {
                v.push(format!("timeline references unknown uav {id}"));
            }
        }

        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            v.push(format!("sim.sample_rate must be > 0 (got {})", self.sample_rate));
        } else {
            let need = 4.0 * self.max_doppler();
            if self.sample_rate < need {
                v.push(format!(
                    "sim.sample_rate {} Hz is below 4 x max Doppler ({need:.3} Hz)",
                    self.sample_rate
                ));
            }
        }
        if !(self.window_duration > 0.0 && self.window_duration.is_finite()) {
            v.push(format!(
                "sim.window_duration must be > 0 (got {})",
                self.window_duration
            ));
        } else if self.sample_rate > 0.0 && self.samples_per_window() < 64 {
            v.push(format!(
                "sim.sample_rate x sim.window_duration gives {} samples per window; at least 64 are required",
                self.samples_per_window()
            ));
        }
        if self.dfs_history_len < 2 {
            v.push(format!(
                "sim.dfs_history_len must be >= 2 (got {})",
                self.dfs_history_len
            ));
        }
        if !(self.los_threshold_db >= 0.0 && self.los_threshold_db.is_finite()) {
            v.push(format!(
                "sim.los_threshold_db must be finite and >= 0 (got {})",
                self.los_threshold_db
            ));
        }
        if !self.uavs.is_empty() && self.window_count() < 2 && self.window_duration > 0.0 {
            v.push(format!(
                "common route span [{start}, {end}] s holds fewer than 2 windows"
            ));
        }
        v.extend(self.channel.violations());

        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(v))
        }
    }

    /// SHA-256 over the canonical serialized scenario.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Ok(file.into_scenario())
    }

    /// Parses and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario = Self::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Parse(msg) => ScenarioError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        scenario.validate()?;
        Ok(scenario)
    }
}

// On-disk layout.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    emitter: EmitterSection,
    #[serde(default)]
    uav: Vec<UavSection>,
    #[serde(default)]
    timeline: TimelineSection,
    channel: ChannelSection,
    sim: SimSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmitterSection {
    position: [f64; 3],
    carrier_frequency: f64,
    transmit_power: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UavSection {
    id: u32,
    #[serde(default)]
    segment: Vec<SegmentSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentSection {
    start: [f64; 3],
    heading: [f64; 3],
    speed: f64,
    start_time: f64,
    duration: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimelineSection {
    #[serde(default)]
    track: Vec<TrackSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackSection {
    uav: u32,
    changes: Vec<ChangeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeSection {
    at: f64,
    condition: Condition,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    noise_floor: f64,
    reference_loss_at_1m: f64,
    #[serde(default = "defaults::path_loss_exponent")]
    path_loss_exponent: f64,
    #[serde(default = "defaults::olos_excess_loss")]
    olos_excess_loss: f64,
    #[serde(default = "defaults::nlos_excess_loss")]
    nlos_excess_loss: f64,
    #[serde(default = "defaults::nlos_scatterer_count")]
    nlos_scatterer_count: usize,
    #[serde(default = "defaults::nlos_angular_spread")]
    nlos_angular_spread: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    seed: u64,
    #[serde(default = "defaults::sample_rate")]
    sample_rate: f64,
    #[serde(default = "defaults::window_duration")]
    window_duration: f64,
    #[serde(default = "defaults::dfs_history_len")]
    dfs_history_len: usize,
    #[serde(default = "defaults::los_threshold_db")]
    los_threshold_db: f64,
}

mod defaults {
    use crate::channel::ChannelParams;

    pub fn path_loss_exponent() -> f64 {
        ChannelParams::DEFAULT_PATH_LOSS_EXPONENT
    }
    pub fn olos_excess_loss() -> f64 {
        ChannelParams::DEFAULT_OLOS_EXCESS_LOSS
    }
    pub fn nlos_excess_loss() -> f64 {
        ChannelParams::DEFAULT_NLOS_EXCESS_LOSS
    }
    pub fn nlos_scatterer_count() -> usize {
        ChannelParams::DEFAULT_NLOS_SCATTERER_COUNT
    }
    pub fn nlos_angular_spread() -> f64 {
        ChannelParams::DEFAULT_NLOS_ANGULAR_SPREAD
    }
    pub fn sample_rate() -> f64 {
        200.0
    }
    pub fn window_duration() -> f64 {
        1.0
    }
    pub fn dfs_history_len() -> usize {
        20
    }
    pub fn los_threshold_db() -> f64 {
        6.0
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Scenario {
        let uavs = self
            .uav
            .into_iter()
            .map(|u| UavConfig {
                id: u.id,
                trajectory: u
                    .segment
                    .into_iter()
                    .map(|s| TrajectorySegment {
                        start_world: Vec3::from(s.start),
                        heading_unit: Vec3::from(s.heading),
                        speed: s.speed,
                        start_time: s.start_time,
                        duration: s.duration,
                    })
                    .collect(),
            })
            .collect();
        let tracks = self
            .timeline
            .track
            .into_iter()
            .map(|t| (t.uav, t.changes.into_iter().map(|c| (c.at, c.condition)).collect()))
            .collect();
        let c = self.channel;
        Scenario {
            emitter: EmitterConfig {
                position_world: Vec3::from(self.emitter.position),
                carrier_frequency: self.emitter.carrier_frequency,
                transmit_power: self.emitter.transmit_power,
            },
            uavs,
            timeline: ConditionTimeline { tracks },
            channel: ChannelParams {
                noise_floor: c.noise_floor,
                path_loss_exponent: c.path_loss_exponent,
                olos_excess_loss: c.olos_excess_loss,
                nlos_excess_loss: c.nlos_excess_loss,
                nlos_scatterer_count: c.nlos_scatterer_count,
                nlos_angular_spread: c.nlos_angular_spread,
                reference_loss_at_1m: c.reference_loss_at_1m,
            },
            sample_rate: self.sim.sample_rate,
            window_duration: self.sim.window_duration,
            dfs_history_len: self.sim.dfs_history_len,
            seed: self.sim.seed,
            los_threshold_db: self.sim.los_threshold_db,
        }
    }
}
