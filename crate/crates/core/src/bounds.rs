//! Sharp partial-identification bounds for LATE when direct effects may
//! differ across subgroups.
//!
//! The point estimator identifies the always-taker direct effect on the
//! treated outcome and the never-taker direct effect on the untreated
//! outcome. If the complier direct effects can deviate from those by at most
//! `k1` and `k0`, LATE is bounded by the point value plus or minus
//! `k1 * P(Z=0) + k0 * P(Z=1)`, with instrument shares estimated from the
//! sample. The interval collapses to the point estimate at zero caps, and the
//! endpoints are attained by data-generating processes sitting exactly at the
//! caps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{late_estimate, EstimateError, EstimatorConfig, LateComponents};
use crate::sample::Sample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("heterogeneity cap {which} must be nonnegative, got {value}")]
    NegativeCap { which: &'static str, value: f64 },
    #[error(transparent)]
    Estimation(#[from] EstimateError),
}

/// Known caps on the direct-effect differences between compliers and the
/// identifying subgroup: `|rho_cp1 - rho_at1| <= k1`,
/// `|rho_cp0 - rho_nt0| <= k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityCaps {
    pub k1: f64,
    pub k0: f64,
}

/// Whether the deviation direction is unknown (symmetric interval) or known
/// to be nonnegative (one-sided tightening, upper endpoint at the point
/// value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsDirection {
    Symmetric,
    NonnegativeDifference,
}

/// Interval estimate for LATE under the heterogeneity caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    /// The point value under homogeneous direct effects.
    pub center: f64,
    /// `k1 * (1 - z_bar) + k0 * z_bar`.
    pub half_width: f64,
}

fn validate_caps(caps: &HeterogeneityCaps) -> Result<(), BoundsError> {
    if !(caps.k1 >= 0.0) {
        return Err(BoundsError::NegativeCap {
            which: "k1",
            value: caps.k1,
        });
    }
    if !(caps.k0 >= 0.0) {
        return Err(BoundsError::NegativeCap {
            which: "k0",
            value: caps.k0,
        });
    }
    Ok(())
}

/// Bounds from an existing fit.
pub fn late_bounds_from_fit(
    fit: &LateComponents,
    caps: &HeterogeneityCaps,
    direction: BoundsDirection,
) -> Result<BoundsResult, BoundsError> {
    validate_caps(caps)?;
    let half_width = caps.k1 * (1.0 - fit.z_bar) + caps.k0 * fit.z_bar;
    let center = fit.late;
    let upper = match direction {
        BoundsDirection::Symmetric => center + half_width,
        BoundsDirection::NonnegativeDifference => center,
    };
    Ok(BoundsResult {
        lower: center - half_width,
        upper,
        center,
        half_width,
    })
}

/// Estimates the point value and wraps it in the symmetric sharp interval.
pub fn late_bounds(
    sample: &Sample,
    caps: &HeterogeneityCaps,
    config: &EstimatorConfig,
) -> Result<BoundsResult, BoundsError> {
    let fit = late_estimate(sample, config)?;
    late_bounds_from_fit(&fit, caps, BoundsDirection::Symmetric)
}
