//! Closed-form Doppler position solver for one rectilinear pass.
//!
//! With the receiver on the local x-axis moving at speed `v` and
//! `A(t) = sqrt(1 - F(t)^2) / F(t)`, any two Doppler samples give
//!
//! ```text
//! x = v (t1 A1 - t2 A2) / (A1 - A2)
//! R = v (t1 - t2) A1 A2 / (A1 - A2),   |y| = sqrt(R^2 - z^2)
//! ```
//!
//! where `R` is the distance from the emitter to the flight line and `z` the
//! (known) vertical offset. A window of samples is reduced with a median over
//! all pairs.
//!
//! The Doppler curve of a single straight pass depends on `y` only through
//! `y^2`, so the side of the track cannot be told from that pass alone. The
//! sign is picked by comparing Doppler residuals of both mirror candidates
//! over the current pass plus any [`SignEvidence`] retained from earlier legs
//! with a different heading. An exact tie goes to `+y`.

use thiserror::Error;

use crate::dfs::DopplerSample;
use crate::scenario::{LocalFrame, Vec3};

/// Pairs whose A values differ by less than this are degenerate.
pub const DEGENERATE_A_TOL: f64 = 1e-6;
/// Accept `R^2 - z^2 >= -(INFEASIBLE_REL_TOL * R)^2`, clamped to zero.
pub const INFEASIBLE_REL_TOL: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum SdfError {
    #[error("A(F) is singular at F = 0")]
    Singular,
    #[error("|F| = {0} is outside (0, 1)")]
    Domain(f64),
    #[error("sample times coincide")]
    SameTime,
    #[error("A(t1) and A(t2) are equal within tolerance")]
    DegeneratePair,
    #[error("pair range {range} m is shorter than the vertical offset {z} m")]
    InfeasibleGeometry { range: f64, z: f64 },
    #[error("sample is below the low-information threshold")]
    LowInformation,
    #[error("no usable sample pair in the window")]
    EstimationFailed,
}

/// `sqrt(1 - F^2) / F`.
pub fn a_of_f(f: f64) -> Result<f64, SdfError> {
    if f == 0.0 {
        return Err(SdfError::Singular);
    }
    if !(f.abs() < 1.0) {
        return Err(SdfError::Domain(f));
    }
    Ok((1.0 - f * f).sqrt() / f)
}

/// Solves one pair given elapsed times and A values. Returns `(x, |y|)`.
pub fn pair_from_a(
    t1: f64,
    a1: f64,
    t2: f64,
    a2: f64,
    v: f64,
    z_tilde: f64,
) -> Result<(f64, f64), SdfError> {
    if t1 == t2 {
        return Err(SdfError::SameTime);
    }
    let da = a1 - a2;
    if da.abs() < DEGENERATE_A_TOL {
        return Err(SdfError::DegeneratePair);
    }
    let x = v * (t1 * a1 - t2 * a2) / da;
    let r = v * (t1 - t2) * (a1 * a2) / da;
    let excess = r * r - z_tilde * z_tilde;
    if excess < -(INFEASIBLE_REL_TOL * r).powi(2) {
        return Err(SdfError::InfeasibleGeometry {
            range: r.abs(),
            z: z_tilde.abs(),
        });
    }
    Ok((x, excess.max(0.0).sqrt()))
}

/// Pair solution from two Doppler samples whose `t` is elapsed pass time.
pub fn pairwise_estimate(
    s1: &DopplerSample,
    s2: &DopplerSample,
    v: f64,
    z_tilde: f64,
) -> Result<(f64, f64), SdfError> {
    if !s1.is_informative() || !s2.is_informative() {
        return Err(SdfError::LowInformation);
    }
    let a1 = a_of_f(s1.normalized_f)?;
    let a2 = a_of_f(s2.normalized_f)?;
    pair_from_a(s1.t, a1, s2.t, a2, v, z_tilde)
}

/// Component-wise median of pair solutions.
pub fn median_of_pairs(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.is_empty() {
        return None;
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Some((median(xs), median(ys)))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A Doppler observation from an earlier leg, kept in world coordinates so
/// it can discriminate between mirror candidates of the current leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignEvidence {
    pub uav_position: Vec3,
    /// Unit vector of the UAV velocity.
    pub heading: Vec3,
    pub normalized_f: f64,
}

impl SignEvidence {
    fn predicted_f(&self, emitter: &Vec3) -> f64 {
        let los = emitter - self.uav_position;
        let range = los.norm();
        if range > 0.0 {
            self.heading.dot(&los) / range
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEstimate {
    pub uav_id: u32,
    /// Time of the newest sample used, seconds.
    pub t: f64,
    pub position_world: Vec3,
    pub position_local: Vec3,
    /// RMS Doppler misfit of the chosen candidate over the pass, Hz.
    pub residual: f64,
    pub n_pairs_used: usize,
}

/// Solver bound to one leg of one UAV.
#[derive(Debug, Clone)]
pub struct SdfSolver<'a> {
    pub frame: &'a LocalFrame,
    /// Emitter height minus UAV height.
    pub z_tilde: f64,
    /// Maximum Doppler shift on this leg, Hz.
    pub f_dmax: f64,
}

impl<'a> SdfSolver<'a> {
    pub fn new(frame: &'a LocalFrame, z_tilde: f64, f_dmax: f64) -> Self {
        Self {
            frame,
            z_tilde,
            f_dmax,
        }
    }

    /// Evidence record for a sample taken on this leg.
    pub fn evidence_for(&self, sample: &DopplerSample) -> SignEvidence {
        let tau = self.frame.elapsed(sample.t);
        SignEvidence {
            uav_position: self.frame.to_world(&Vec3::new(self.frame.speed * tau, 0.0, 0.0)),
            heading: self.frame.along_track_axis(),
            normalized_f: sample.normalized_f,
        }
    }

    /// Estimates the emitter position from the samples of this leg (absolute
    /// timestamps). `earlier` holds observations from previous legs.
    pub fn estimate(
        &self,
        uav_id: u32,
        samples: &[DopplerSample],
        earlier: &[SignEvidence],
    ) -> Result<LocalEstimate, SdfError> {
        let usable: Vec<DopplerSample> = samples
            .iter()
            .filter(|s| s.is_informative())
            .map(|s| DopplerSample {
                t: self.frame.elapsed(s.t),
                ..*s
            })
            .collect();
        let v = self.frame.speed;
        let mut pairs = Vec::with_capacity(usable.len() * usable.len().saturating_sub(1) / 2);
        for (i, s1) in usable.iter().enumerate() {
            for s2 in &usable[i + 1..] {
                if let Ok(p) = pairwise_estimate(s1, s2, v, self.z_tilde) {
                    pairs.push(p);
                }
            }
        }
        let (x, y_abs) = median_of_pairs(&pairs).ok_or(SdfError::EstimationFailed)?;

        let current: Vec<SignEvidence> = samples
            .iter()
            .filter(|s| s.is_informative())
            .map(|s| self.evidence_for(s))
            .collect();
        let candidates = [
            Vec3::new(x, y_abs, self.z_tilde),
            Vec3::new(x, -y_abs, self.z_tilde),
        ];
        let misfit = |local: &Vec3, set: &[SignEvidence]| -> f64 {
            let world = self.frame.to_world(local);
            set.iter()
                .map(|e| (e.normalized_f - e.predicted_f(&world)).powi(2))
                .sum::<f64>()
        };
        let score = |local: &Vec3| misfit(local, &current) + misfit(local, earlier);
        let (plus, minus) = (score(&candidates[0]), score(&candidates[1]));
        let tie = (plus - minus).abs() <= 1e-9 * (plus + minus) + 1e-20;
        let chosen = if tie || plus <= minus {
            candidates[0]
        } else {
            candidates[1]
        };
        let residual = if current.is_empty() {
            0.0
        } else {
            self.f_dmax * (misfit(&chosen, &current) / current.len() as f64).sqrt()
        };

        Ok(LocalEstimate {
            uav_id,
            t: samples.iter().map(|s| s.t).fold(f64::NEG_INFINITY, f64::max),
            position_world: self.frame.to_world(&chosen),
            position_local: chosen,
            residual,
            n_pairs_used: pairs.len(),
        })
    }
}

/// Single-leg convenience form of [`SdfSolver::estimate`].
pub fn estimate_from_window(
    uav_id: u32,
    samples: &[DopplerSample],
    frame: &LocalFrame,
    z_tilde: f64,
    f_dmax: f64,
) -> Result<LocalEstimate, SdfError> {
    SdfSolver::new(frame, z_tilde, f_dmax).estimate(uav_id, samples, &[])
}
