//! End-to-end, time-stepped simulation.
//!
//! For every back-to-back window and every UAV: synthesize the received
//! signal, pick the spectral statistic from fleet-relative power, estimate
//! the Doppler shift, push it into the UAV's FIFO history and re-solve the
//! emitter position. Each timestep then classifies the nodes from their
//! powers, fuses the estimates with both rules and scores horizontal errors
//! against the true emitter position.
//!
//! Windows are synthesized from per-(uav, window) generators, so results do
//! not depend on how rayon schedules the work.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{self, max_doppler_hz, ChannelError, ReceivedWindow};
use crate::dfs::{select_mode, DfsEstimator, DopplerSample, EstimatorMode};
use crate::fusion::{
    classify_conditions, fuse_arithmetic, fuse_weighted, FusedEstimate, FusionError, FusionRule,
    LinkClass, NodeReport,
};
use crate::scenario::{build_local_frame, Condition, Scenario, ScenarioError, Vec3};
use crate::sdf::{LocalEstimate, SdfSolver, SignEvidence};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("uav {0} never produced a position estimate")]
    NoEstimate(u32),
    #[error("error series is empty")]
    EmptySeries,
    #[error("error series contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("at least one seed is required")]
    NoSeeds,
}

/// What happened for one UAV in one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowTrace {
    pub k: usize,
    pub t: f64,
    pub uav_id: u32,
    pub power: f64,
    pub mode: EstimatorMode,
    /// `None` when the estimator found no signal.
    pub f_d_hat: Option<f64>,
    pub f_d_true: f64,
    pub condition_true: Condition,
    pub condition_classified: LinkClass,
    /// Horizontal error of the UAV's current estimate, if it has one.
    pub error_m: Option<f64>,
    pub history_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavSeries {
    pub uav_id: u32,
    pub errors: Vec<f64>,
    pub route_avg: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedSeries {
    pub rules: Vec<FusionRule>,
    pub errors: Vec<f64>,
    pub n_contributors: Vec<usize>,
    pub route_avg: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub seed: u64,
    pub scenario_digest: String,
    /// Window midpoints of the scored steps, shared by every series.
    pub time_axis: Vec<f64>,
    /// Index of the first scored window.
    pub first_scored_window: usize,
    pub per_uav: Vec<UavSeries>,
    pub arithmetic: FusedSeries,
    pub weighted: FusedSeries,
    pub envelope_min: Vec<f64>,
    pub envelope_max: Vec<f64>,
    /// `windows[k][i]` is window `k` of the i-th UAV, for every window.
    pub windows: Vec<Vec<WindowTrace>>,
}

/// `sqrt(mean(e^2))`.
pub fn rms_error(errors: &[f64]) -> Result<f64, SimError> {
    if errors.is_empty() {
        return Err(SimError::EmptySeries);
    }
    if let Some(i) = errors.iter().position(|e| !e.is_finite()) {
        return Err(SimError::NonFinite(i));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn horizontal_error(estimate: &Vec3, truth: &Vec3) -> f64 {
    (estimate.x - truth.x).hypot(estimate.y - truth.y)
}

/// Per-UAV sliding state across windows.
struct Tracker {
    segment: Option<usize>,
    history: VecDeque<DopplerSample>,
    evidence: VecDeque<SignEvidence>,
    estimate: Option<LocalEstimate>,
}

pub fn run_simulation(scenario: &Scenario, seed: u64) -> Result<SimResult, SimError> {
    scenario.validate()?;
    let n_windows = scenario.window_count();
    let n_samples = scenario.samples_per_window();
    let uav_ids: Vec<u32> = scenario.uavs.iter().map(|u| u.id).collect();
    let n_uavs = uav_ids.len();
    let emitter = scenario.emitter.position_world;
    let f0 = scenario.emitter.carrier_frequency;

    // Synthesis, k-major.
    let jobs: Vec<(usize, usize)> = (0..n_windows)
        .flat_map(|k| (0..n_uavs).map(move |i| (k, i)))
        .collect();
    let received: Vec<ReceivedWindow> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let mut rng = channel::window_rng(seed, uav_ids[i], k as u64);
            channel::synthesize_window(scenario, uav_ids[i], scenario.window_start(k), &mut rng)
        })
        .collect::<Result<_, _>>()?;

    let fleet_max: Vec<f64> = received
        .chunks(n_uavs)
        .map(|step| step.iter().map(|w| w.received_power).fold(f64::NEG_INFINITY, f64::max))
        .collect();

    // Doppler estimation.
    let estimated: Vec<(EstimatorMode, Option<DopplerSample>, f64)> = jobs
        .par_iter()
        .map_init(
            || DfsEstimator::new(n_samples),
            |est, &(k, i)| -> Result<_, SimError> {
                let w = &received[k * n_uavs + i];
                let uav = &scenario.uavs[i];
                let t_mid = w.center_time();
                let seg = uav.segment_at(t_mid)?;
                let f_dmax = max_doppler_hz(f0, seg.speed);
                let mode = select_mode(w.received_power, fleet_max[k], scenario.los_threshold_db);
                let f_true =
                    channel::doppler_world(&seg.position_at(t_mid), &seg.velocity(), &emitter, f0)?;
                Ok((mode, est.estimate(w, f_dmax, mode).ok(), f_true))
            },
        )
        .collect::<Result<_, _>>()?;

    // Localization, sequential in time per UAV.
    let tracks: Vec<Vec<(Option<LocalEstimate>, usize)>> = (0..n_uavs)
        .into_par_iter()
        .map(|i| -> Result<_, SimError> {
            let uav = &scenario.uavs[i];
            let mut tr = Tracker {
                segment: None,
                history: VecDeque::with_capacity(scenario.dfs_history_len + 1),
                evidence: VecDeque::new(),
                estimate: None,
            };
            let mut out = Vec::with_capacity(n_windows);
            for k in 0..n_windows {
                let w = &received[k * n_uavs + i];
                let t_mid = w.center_time();
                let seg_idx = uav.segment_index_at(t_mid)?;
                let seg = &uav.trajectory[seg_idx];
                let frame = build_local_frame(seg)?;
                let solver = SdfSolver::new(
                    &frame,
                    emitter.z - seg.start_world.z,
                    max_doppler_hz(f0, seg.speed),
                );
                if tr.segment != Some(seg_idx) {
                    if let Some(prev_idx) = tr.segment {
                        let prev = &uav.trajectory[prev_idx];
                        let prev_frame = build_local_frame(prev)?;
                        let prev_solver = SdfSolver::new(&prev_frame, 0.0, 1.0);
                        for s in tr.history.drain(..).filter(|s| s.is_informative()) {
                            tr.evidence.push_back(prev_solver.evidence_for(&s));
                        }
                        while tr.evidence.len() > scenario.dfs_history_len {
                            tr.evidence.pop_front();
                        }
                    }
                    tr.history.clear();
                    tr.segment = Some(seg_idx);
                }
                if let Some(sample) = estimated[k * n_uavs + i].1 {
                    tr.history.push_back(sample);
                    while tr.history.len() > scenario.dfs_history_len {
                        tr.history.pop_front();
                    }
                }
                let usable = tr.history.iter().filter(|s| s.is_informative()).count();
                if usable >= 2 {
                    let samples: Vec<DopplerSample> = tr.history.iter().copied().collect();
                    let evidence: Vec<SignEvidence> = tr.evidence.iter().copied().collect();
                    if let Ok(e) = solver.estimate(uav.id, &samples, &evidence) {
                        tr.estimate = Some(e);
                    }
                }
                out.push((tr.estimate.clone(), tr.history.len()));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    // Fusion and scoring.
    let mut windows = Vec::with_capacity(n_windows);
    let mut fused = Vec::with_capacity(n_windows);
    for k in 0..n_windows {
        let mut reports: Vec<NodeReport> = (0..n_uavs)
            .map(|i| {
                let w = &received[k * n_uavs + i];
                NodeReport::new(uav_ids[i], w.center_time(), w.received_power, tracks[i][k].0.clone())
            })
            .collect();
        classify_conditions(&mut reports, scenario.los_threshold_db)?;
        let step: Vec<WindowTrace> = (0..n_uavs)
            .map(|i| {
                let w = &received[k * n_uavs + i];
                let (mode, sample, f_true) = &estimated[k * n_uavs + i];
                WindowTrace {
                    k,
                    t: w.center_time(),
                    uav_id: uav_ids[i],
                    power: w.received_power,
                    mode: *mode,
                    f_d_hat: sample.map(|s| s.f_d_hat),
                    f_d_true: *f_true,
                    condition_true: w.true_condition,
                    condition_classified: reports[i].classified_condition,
                    error_m: tracks[i][k]
                        .0
                        .as_ref()
                        .map(|e| horizontal_error(&e.position_world, &emitter)),
                    history_len: tracks[i][k].1,
                }
            })
            .collect();
        let pair = if reports.iter().all(|r| r.estimate.is_some()) {
            let mut a = fuse_arithmetic(&reports)?;
            let mut w = fuse_weighted(&reports)?;
            a.error_m = Some(horizontal_error(&a.position_world, &emitter));
            w.error_m = Some(horizontal_error(&w.position_world, &emitter));
            Some((a, w))
        } else {
            None
        };
        windows.push(step);
        fused.push(pair);
    }

    // Scoring starts once a full history could have been collected, or later
    // if some UAV still has no estimate by then.
    let warmup = scenario.dfs_history_len.saturating_sub(1).min(n_windows.saturating_sub(1));
    let first_scored_window = match fused.iter().skip(warmup).position(Option::is_some) {
        Some(k) => warmup + k,
        None => {
            let missing = (0..n_uavs)
                .find(|&i| tracks[i].last().is_none_or(|t| t.0.is_none()))
                .map_or(uav_ids[0], |i| uav_ids[i]);
            return Err(SimError::NoEstimate(missing));
        }
    };
    let scored = &windows[first_scored_window..];
    let time_axis: Vec<f64> = scored.iter().map(|step| step[0].t).collect();

    let per_uav = (0..n_uavs)
        .map(|i| -> Result<UavSeries, SimError> {
            let errors: Vec<f64> = scored
                .iter()
                .map(|step| step[i].error_m.expect("estimates persist once produced"))
                .collect();
            Ok(UavSeries {
                uav_id: uav_ids[i],
                route_avg: mean(&errors),
                rms: rms_error(&errors)?,
                errors,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let series = |pick: fn(&(FusedEstimate, FusedEstimate)) -> &FusedEstimate| {
        let picked: Vec<&FusedEstimate> = fused[first_scored_window..]
            .iter()
            .map(|p| pick(p.as_ref().expect("all uavs have estimates after first scored window")))
            .collect();
        let errors: Vec<f64> = picked.iter().map(|f| f.error_m.unwrap_or(f64::NAN)).collect();
        rms_error(&errors).map(|rms| FusedSeries {
            rules: picked.iter().map(|f| f.rule_used).collect(),
            n_contributors: picked.iter().map(|f| f.contributing_ids.len()).collect(),
            route_avg: mean(&errors),
            rms,
            errors,
        })
    };
    let arithmetic = series(|p| &p.0)?;
    let weighted = series(|p| &p.1)?;

    let envelope_min = (0..time_axis.len())
        .map(|j| per_uav.iter().map(|s| s.errors[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let envelope_max = (0..time_axis.len())
        .map(|j| per_uav.iter().map(|s| s.errors[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();

    Ok(SimResult {
        seed,
        scenario_digest: scenario.digest(),
        time_axis,
        first_scored_window,
        per_uav,
        arithmetic,
        weighted,
        envelope_min,
        envelope_max,
        windows,
    })
}

/// Grouping used in summaries: one UAV or one fusion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scope {
    Uav(u32),
    Arithmetic,
    Weighted,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Uav(id) => write!(f, "uav{id}"),
            Scope::Arithmetic => f.write_str("arithmetic"),
            Scope::Weighted => f.write_str("weighted"),
        }
    }
}

/// Route-average errors of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub route_avg: Vec<(Scope, f64)>,
    /// Arithmetic over weighted route-average error.
    pub improvement_ratio: f64,
}

impl RunSummary {
    pub fn from_result(r: &SimResult) -> Self {
        let mut route_avg: Vec<(Scope, f64)> = r
            .per_uav
            .iter()
            .map(|s| (Scope::Uav(s.uav_id), s.route_avg))
            .collect();
        route_avg.push((Scope::Arithmetic, r.arithmetic.route_avg));
        route_avg.push((Scope::Weighted, r.weighted.route_avg));
        Self {
            seed: r.seed,
            route_avg,
            improvement_ratio: r.arithmetic.route_avg / r.weighted.route_avg,
        }
    }

    pub fn get(&self, scope: Scope) -> Option<f64> {
        self.route_avg.iter().find(|(s, _)| *s == scope).map(|p| p.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub median: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self { mean: m, std, median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub runs: Vec<RunSummary>,
    pub per_scope: Vec<(Scope, Stats)>,
    pub improvement_ratio: Stats,
}

pub fn run_sweep(scenario: &Scenario, seeds: &[u64]) -> Result<SweepSummary, SimError> {
    if seeds.is_empty() {
        return Err(SimError::NoSeeds);
    }
    let runs: Vec<RunSummary> = seeds
        .par_iter()
        .map(|&seed| run_simulation(scenario, seed).map(|r| RunSummary::from_result(&r)))
        .collect::<Result<_, _>>()?;
    let scopes: Vec<Scope> = runs[0].route_avg.iter().map(|p| p.0).collect();
    let per_scope = scopes
        .iter()
        .map(|&scope| {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.get(scope)).collect();
            (scope, Stats::of(&values))
        })
        .collect();
    let ratios: Vec<f64> = runs.iter().map(|r| r.improvement_ratio).collect();
    Ok(SweepSummary {
        improvement_ratio: Stats::of(&ratios),
        per_scope,
        runs,
    })
}
