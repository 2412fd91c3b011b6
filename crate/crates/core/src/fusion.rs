//! Cooperative fusion of per-UAV estimates.
//!
//! Each UAV shares its received power and current estimate. A node is
//! classified LOS-usable when its power is within `los_threshold_db` of the
//! strongest node. The arithmetic rule averages every available estimate; the
//! weighted rule averages only LOS-usable nodes (binary weights) and falls
//! back to the arithmetic mean when no node qualifies.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::scenario::Vec3;
use crate::sdf::LocalEstimate;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("no reports to classify")]
    NoReports,
    #[error("report from uav {0} has a non-finite power")]
    NonFinitePower(u32),
    #[error("no report carries a position estimate")]
    NoEstimates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LinkClass {
    LosUsable,
    Nlos,
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkClass::LosUsable => "LOS",
            LinkClass::Nlos => "NLOS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FusionRule {
    Arithmetic,
    Weighted,
    WeightedFallbackArithmetic,
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionRule::Arithmetic => "arithmetic",
            FusionRule::Weighted => "weighted",
            FusionRule::WeightedFallbackArithmetic => "weighted-fallback-arithmetic",
        })
    }
}

/// What a UAV shares with the fleet at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub uav_id: u32,
    pub t: f64,
    /// Received power in dBm.
    pub power: f64,
    pub estimate: Option<LocalEstimate>,
    pub classified_condition: LinkClass,
}

impl NodeReport {
    /// New report, provisionally NLOS until classified.
    pub fn new(uav_id: u32, t: f64, power: f64, estimate: Option<LocalEstimate>) -> Self {
        Self {
            uav_id,
            t,
            power,
            estimate,
            classified_condition: LinkClass::Nlos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedEstimate {
    pub t: f64,
    pub position_world: Vec3,
    pub rule_used: FusionRule,
    /// Sorted ascending.
    pub contributing_ids: Vec<u32>,
    /// Horizontal error against ground truth, filled in by the harness.
    pub error_m: Option<f64>,
}

pub fn classify_conditions(reports: &mut [NodeReport], los_threshold_db: f64) -> Result<(), FusionError> {
    if reports.is_empty() {
        return Err(FusionError::NoReports);
    }
    if let Some(r) = reports.iter().find(|r| !r.power.is_finite()) {
        return Err(FusionError::NonFinitePower(r.uav_id));
    }
    let max = reports.iter().map(|r| r.power).fold(f64::NEG_INFINITY, f64::max);
    for r in reports.iter_mut() {
        r.classified_condition = if r.power >= max - los_threshold_db {
            LinkClass::LosUsable
        } else {
            LinkClass::Nlos
        };
    }
    Ok(())
}

/// Mean of the selected estimates, summed in uav-id order so the result does
/// not depend on report order.
fn mean_of<'a, I>(selected: I, rule: FusionRule) -> Option<FusedEstimate>
where
    I: Iterator<Item = &'a NodeReport>,
{
    let mut chosen: Vec<(&NodeReport, &LocalEstimate)> = selected
        .filter_map(|r| r.estimate.as_ref().map(|e| (r, e)))
        .collect();
    if chosen.is_empty() {
        return None;
    }
    chosen.sort_by(|a, b| a.0.uav_id.cmp(&b.0.uav_id).then(a.0.t.total_cmp(&b.0.t)));
    let sum = chosen
        .iter()
        .fold(Vec3::zeros(), |acc, (_, e)| acc + e.position_world);
    Some(FusedEstimate {
        t: chosen.iter().map(|(r, _)| r.t).fold(f64::NEG_INFINITY, f64::max),
        position_world: sum / chosen.len() as f64,
        rule_used: rule,
        contributing_ids: chosen.iter().map(|(r, _)| r.uav_id).collect(),
        error_m: None,
    })
}

pub fn fuse_arithmetic(reports: &[NodeReport]) -> Result<FusedEstimate, FusionError> {
    mean_of(reports.iter(), FusionRule::Arithmetic).ok_or(FusionError::NoEstimates)
}

pub fn fuse_weighted(reports: &[NodeReport]) -> Result<FusedEstimate, FusionError> {
    let usable = reports
        .iter()
        .filter(|r| r.classified_condition == LinkClass::LosUsable);
    if let Some(fused) = mean_of(usable, FusionRule::Weighted) {
        return Ok(fused);
    }
    mean_of(reports.iter(), FusionRule::WeightedFallbackArithmetic).ok_or(FusionError::NoEstimates)
}
