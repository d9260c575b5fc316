//! Estimation of local average treatment effects (LATE) with two imperfect
//! instruments.
//!
//! The classical IV identification of LATE requires a single instrument that
//! simultaneously satisfies exclusion, monotonicity, and independence. This
//! crate implements a two-instrument strategy that weakens one assumption on
//! each instrument: the first instrument `Z` may shift the outcome directly
//! (no exclusion), and the second instrument `W` may push treatment in either
//! direction (no monotonicity). Exogenous variation in `W` identifies the
//! direct effects of `Z`, which are then subtracted from the conditional Wald
//! ratio to recover LATE.
//!
//! Modules:
//! - [`sample`]: the `(Y, D, Z, W)` data model and validation.
//! - [`estimators`]: subgroup probabilities, Wald ratios, direct effects, and
//!   the corrected LATE estimator.
//! - [`inference`]: influence functions, standard errors, confidence intervals.
//! - [`bounds`]: sharp partial-identification intervals under bounded
//!   heterogeneity of direct effects.
//! - [`simulation`]: a seeded, parallel Monte Carlo engine for the reference
//!   designs, with bias/SD/rMSE/MAD aggregation.

pub mod bounds;
pub mod estimators;
pub mod inference;
mod kahan;
pub mod normal;
pub mod sample;
pub mod simulation;

pub use bounds::{
    late_bounds, late_bounds_from_fit, BoundsDirection, BoundsError, BoundsResult,
    HeterogeneityCaps,
};
pub use estimators::{
    complier_means, direct_effects, iv1_estimand, iv_estimand, late_estimate, late_weights,
    r_moment, subgroup_probs, Arm, DirectEffects, EstimateError, EstimatorConfig, LateComponents,
    SubgroupProbs,
};
pub use inference::{influence_set, standard_errors, InferenceError, InferenceResult, InfluenceSet};
pub use sample::{cell_counts, CellCounts, Sample, SampleError};
pub use simulation::{
    generate_sample, metrics, run_monte_carlo, run_replications, true_late, Design, MetricsRecord,
    RepEstimates, SimConfig, SimError, SimReport,
};
