//! Density-aware chamfer distance and the grasp score built on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::{CloudError, NnIndex, PointCloud};

/// Sensitivity used when none is configured, in 1/m.
pub const DEFAULT_ALPHA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("alpha must be positive and finite, got {0}")]
    Alpha(f64),
    #[error("distance {0} outside [0, 1]")]
    DistanceRange(f64),
    #[error("invalid partial grasp timing: t_dropped={t_dropped}, t_cycle={t_cycle}")]
    Timing { t_dropped: f64, t_cycle: f64 },
    #[error("a distance is required for a {0} grasp")]
    MissingDistance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcdParams {
    /// Sensitivity in 1/m.
    pub alpha: f64,
}

impl Default for DcdParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl DcdParams {
    pub fn new(alpha: f64) -> Result<Self, MetricError> {
        let p = Self { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(MetricError::Alpha(self.alpha))
        }
    }
}

/// One direction of the distance: every point of `reference` is matched to
/// its nearest neighbour in `other`.
///
/// A neighbour hit `n` times contributes `1 - exp(-alpha d) / n` per hit,
/// where `n` counts all hits over the whole reference cloud. Terms are summed
/// in point order.
pub fn one_sided_dcd(reference: &PointCloud, other: &NnIndex, alpha: f64) -> Result<f64, MetricError> {
    DcdParams::new(alpha)?;
    reference.require_non_empty()?;
    let matches: Vec<(usize, f64)> = reference.points().iter().map(|p| other.nearest(p)).collect();
    let mut hits = vec![0u32; other.len()];
    for &(j, _) in &matches {
        hits[j] += 1;
    }
    let sum: f64 = matches
        .iter()
        .map(|&(j, d)| 1.0 - (-alpha * d).exp() / hits[j] as f64)
        .sum();
    Ok(sum / matches.len() as f64)
}

/// Symmetric density-aware chamfer distance in `[0, 1]`.
pub fn dcd(s1: &PointCloud, s2: &PointCloud, params: &DcdParams) -> Result<f64, MetricError> {
    params.validate()?;
    let i1 = NnIndex::build(s1)?;
    let i2 = NnIndex::build(s2)?;
    dcd_indexed(s1, &i1, s2, &i2, params)
}

/// [`dcd`] with prebuilt indices over both clouds.
pub fn dcd_indexed(
    s1: &PointCloud,
    i1: &NnIndex,
    s2: &PointCloud,
    i2: &NnIndex,
    params: &DcdParams,
) -> Result<f64, MetricError> {
    let a = one_sided_dcd(s1, i2, params.alpha)?;
    let b = one_sided_dcd(s2, i1, params.alpha)?;
    // a + b == b + a in IEEE arithmetic, so the result is argument-order symmetric.
    let d = 0.5 * (a + b);
    assert!(d.is_finite() && (0.0..=1.0).contains(&d), "dcd out of range: {d}");
    Ok(d)
}

/// How a grasp attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraspOutcome {
    Unsuccessful,
    /// Dropped after the in-hand capture. Times in seconds.
    Partial { t_dropped: f64, t_cycle: f64 },
    Successful,
}

impl GraspOutcome {
    pub fn validate(&self) -> Result<(), MetricError> {
        if let GraspOutcome::Partial { t_dropped, t_cycle } = *self {
            let ok = t_cycle > 0.0
                && t_cycle.is_finite()
                && t_dropped >= 0.0
                && t_dropped <= t_cycle;
            if !ok {
                return Err(MetricError::Timing { t_dropped, t_cycle });
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            GraspOutcome::Unsuccessful => "unsuccessful",
            GraspOutcome::Partial { .. } => "partial",
            GraspOutcome::Successful => "successful",
        }
    }
}

/// Grasp quality in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(pub(crate) f64);

impl Score {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Scores an attempt: 0 when unsuccessful, `(1 - d) t_dropped / (2 t_cycle)`
/// when dropped part-way, `1 - d / 2` when held for the whole cycle.
///
/// `d` is ignored (and may be `None`) for unsuccessful grasps.
pub fn grasp_score(outcome: &GraspOutcome, d: Option<f64>) -> Result<Score, MetricError> {
    outcome.validate()?;
    if let Some(d) = d {
        if !(0.0..=1.0).contains(&d) {
            return Err(MetricError::DistanceRange(d));
        }
    }
    let value = match *outcome {
        GraspOutcome::Unsuccessful => 0.0,
        GraspOutcome::Partial { t_dropped, t_cycle } => {
            let d = d.ok_or(MetricError::MissingDistance("partial"))?;
            (1.0 - d) * t_dropped / (2.0 * t_cycle)
        }
        GraspOutcome::Successful => {
            let d = d.ok_or(MetricError::MissingDistance("successful"))?;
            1.0 - d / 2.0
        }
    };
    Ok(Score(value))
}
