//! Point estimators for LATE under an exclusion-violating instrument.
//!
//! With two binary instruments `Z` (monotone, possibly direct-effecting) and
//! `W` (excludable, possibly non-monotone), the complier treatment effect is
//! recovered as a conditional Wald ratio corrected by the estimated direct
//! effects of `Z`:
//!
//! ```text
//! late = iv1 - rho1 * w1 - rho0 * w0
//! ```
//!
//! where `iv1` is the Wald ratio within the conditioning arm of `W`, `rho_d`
//! is the average direct effect of `Z` on the outcome at treatment level `d`,
//! and `(w1, w0)` are subgroup-share weights. Every quantity is a plug-in
//! functional of the (z, w) cell moments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{CellMoments, Sample};

/// Which arm of the second instrument conditions the Wald ratio, the weights,
/// and the complier means.
///
/// `W1` is the default. `W0` applies the symmetric formulas within `W = 0`,
/// an extension for data where the complier share given `W = 1` is too weak
/// to divide by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    W1,
    W0,
}

impl Arm {
    /// Column index of the conditioning arm.
    pub(crate) fn index(self) -> usize {
        match self {
            Arm::W1 => 1,
            Arm::W0 => 0,
        }
    }
}

/// Tunables shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Absolute threshold below which a denominator counts as numerically
    /// irrelevant. Population relevance assumptions guarantee the limits are
    /// nonzero; this guards the finite-sample plug-ins.
    pub relevance_tol: f64,
    /// Conditioning arm for IV1, the weights, and the complier means.
    pub arm: Arm,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            relevance_tol: 1e-6,
            arm: Arm::W1,
        }
    }
}

/// Denominators whose magnitude is checked before dividing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceCheck {
    /// Treatment contrast of the unconditional Wald ratio.
    IvContrast,
    /// Product-moment denominator of the conditional Wald ratio.
    Iv1Contrast,
    /// Always-taker cross-product identifying `rho1`.
    AlwaysTaker,
    /// Never-taker cross-product identifying `rho0`.
    NeverTaker,
}

impl std::fmt::Display for RelevanceCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RelevanceCheck::IvContrast => "iv_contrast",
            RelevanceCheck::Iv1Contrast => "iv1_contrast",
            RelevanceCheck::AlwaysTaker => "always_taker",
            RelevanceCheck::NeverTaker => "never_taker",
        };
        f.write_str(name)
    }
}

fn fmt_cell_w(w: &Option<u8>) -> String {
    match w {
        Some(v) => format!(", w={v}"),
        None => String::new(),
    }
}

/// Estimation failures. Each names the failing component so callers can
/// report which empirical support condition broke.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    /// A conditioning cell has no observations. `w = None` means the whole
    /// `Z = z` margin is empty.
    #[error("no observations in cell z={z}{}", fmt_cell_w(.w))]
    EmptyCell { z: u8, w: Option<u8> },
    #[error("relevance denominator {which} has magnitude {magnitude:e}, below tolerance {tol:e}")]
    WeakRelevance {
        which: RelevanceCheck,
        magnitude: f64,
        tol: f64,
    },
    #[error("complier share {share:e} in the conditioning arm is below tolerance {tol:e}")]
    WeakComplierShare { share: f64, tol: f64 },
}

/// Plug-in conditional probabilities of the three subgroups given `W = w`.
///
/// `p_at + p_nt + p_cp == 1` holds algebraically; `p_cp` may come out
/// negative in finite samples, which is diagnostic information (a possible
/// monotonicity failure of `Z`), not an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupProbs {
    pub p_at: f64,
    pub p_nt: f64,
    pub p_cp: f64,
    /// Conditioning value of W.
    pub w: u8,
}

/// Average direct effects of `Z` on the treated and untreated outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectEffects {
    pub rho1: f64,
    pub rho0: f64,
}

/// Full decomposition of the corrected LATE estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateComponents {
    /// Unconditional Wald ratio (the classical single-instrument estimand).
    pub iv: f64,
    /// Wald ratio within the conditioning arm of W, product-moment form.
    pub iv1: f64,
    pub rho: DirectEffects,
    /// Weight on `rho1`: P(AT|arm)/P(CP|arm) + 1 - z_bar.
    pub w1: f64,
    /// Weight on `rho0`: P(NT|arm)/P(CP|arm) + z_bar.
    pub w0: f64,
    /// Corrected estimate: `iv1 - rho1*w1 - rho0*w0`, exactly as written.
    pub late: f64,
    pub probs_w1: SubgroupProbs,
    pub probs_w0: SubgroupProbs,
    pub z_bar: f64,
    /// Treated-outcome contrasts `(r1(1), r1(0))`.
    pub r1: (f64, f64),
    /// Untreated-outcome contrasts `(r0(1), r0(0))`.
    pub r0: (f64, f64),
    /// Configuration the fit was produced under.
    pub config: EstimatorConfig,
}

impl LateComponents {
    /// Subgroup probabilities in the conditioning arm.
    pub fn probs_arm(&self) -> &SubgroupProbs {
        match self.config.arm {
            Arm::W1 => &self.probs_w1,
            Arm::W0 => &self.probs_w0,
        }
    }

    fn r_arm(&self) -> (f64, f64) {
        match self.config.arm {
            Arm::W1 => (self.r1.0, self.r0.0),
            Arm::W0 => (self.r1.1, self.r0.1),
        }
    }

    /// Plug-in complier means of the treated and untreated potential outcome,
    /// `(E[Y11|CP], E[Y00|CP])`.
    ///
    /// Satisfies the decomposition
    /// `E[Y11|CP] - E[Y00|CP] - rho1*(1 - z_bar) - rho0*z_bar = late`
    /// up to floating-point noise.
    pub fn complier_means(&self) -> Result<(f64, f64), EstimateError> {
        let probs = self.probs_arm();
        if probs.p_cp.abs() <= self.config.relevance_tol {
            return Err(EstimateError::WeakComplierShare {
                share: probs.p_cp,
                tol: self.config.relevance_tol,
            });
        }
        let (r1_arm, r0_arm) = self.r_arm();
        let y11 = (r1_arm - self.rho.rho1 * probs.p_at) / probs.p_cp;
        let y00 = -(r0_arm - self.rho.rho0 * probs.p_nt) / probs.p_cp;
        Ok((y11, y00))
    }
}

/// See [`LateComponents::complier_means`].
pub fn complier_means(components: &LateComponents) -> Result<(f64, f64), EstimateError> {
    components.complier_means()
}

fn require_cell(m: &CellMoments, z: usize, w: usize) -> Result<(), EstimateError> {
    if m.count[z][w] == 0 {
        return Err(EstimateError::EmptyCell {
            z: z as u8,
            w: Some(w as u8),
        });
    }
    Ok(())
}

fn probs_from(m: &CellMoments, w: usize) -> Result<SubgroupProbs, EstimateError> {
    require_cell(m, 0, w)?;
    require_cell(m, 1, w)?;
    let p_at = m.sum_d[0][w] as f64 / m.count[0][w] as f64;
    let treated_z1 = m.sum_d[1][w] as f64 / m.count[1][w] as f64;
    let p_nt = 1.0 - treated_z1;
    let p_cp = treated_z1 - p_at;
    Ok(SubgroupProbs {
        p_at,
        p_nt,
        p_cp,
        w: w as u8,
    })
}

fn r_from(m: &CellMoments, d: u8, w: usize) -> Result<f64, EstimateError> {
    require_cell(m, 0, w)?;
    require_cell(m, 1, w)?;
    let mean = |z: usize| {
        let c = m.count[z][w] as f64;
        match d {
            1 => m.sum_yd[z][w] / c,
            _ => (m.sum_y[z][w] - m.sum_yd[z][w]) / c,
        }
    };
    Ok(mean(1) - mean(0))
}

fn iv_from(m: &CellMoments, tol: f64) -> Result<f64, EstimateError> {
    let n1 = m.count_z(1);
    let n0 = m.count_z(0);
    if n0 == 0 {
        return Err(EstimateError::EmptyCell { z: 0, w: None });
    }
    if n1 == 0 {
        return Err(EstimateError::EmptyCell { z: 1, w: None });
    }
    let ey1 = (m.sum_y[1][0] + m.sum_y[1][1]) / n1 as f64;
    let ey0 = (m.sum_y[0][0] + m.sum_y[0][1]) / n0 as f64;
    let ed1 = (m.sum_d[1][0] + m.sum_d[1][1]) as f64 / n1 as f64;
    let ed0 = (m.sum_d[0][0] + m.sum_d[0][1]) as f64 / n0 as f64;
    let den = ed1 - ed0;
    if den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::IvContrast,
            magnitude: den.abs(),
            tol,
        });
    }
    Ok((ey1 - ey0) / den)
}

fn iv1_from(m: &CellMoments, arm: Arm, tol: f64) -> Result<f64, EstimateError> {
    let a = arm.index();
    require_cell(m, 0, a)?;
    require_cell(m, 1, a)?;
    let nf = m.n as f64;
    let m_w = (m.count[0][a] + m.count[1][a]) as f64 / nf;
    let m_zw = m.count[1][a] as f64 / nf;
    let m_yzw = m.sum_y[1][a] / nf;
    let m_yw = (m.sum_y[0][a] + m.sum_y[1][a]) / nf;
    let m_dzw = m.sum_d[1][a] as f64 / nf;
    let m_dw = (m.sum_d[0][a] + m.sum_d[1][a]) as f64 / nf;
    let num = m_yzw * m_w - m_yw * m_zw;
    let den = m_dzw * m_w - m_dw * m_zw;
    if den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::Iv1Contrast,
            magnitude: den.abs(),
            tol,
        });
    }
    Ok(num / den)
}

fn weights_from(
    m: &CellMoments,
    arm: Arm,
    tol: f64,
) -> Result<(f64, f64), EstimateError> {
    let probs = probs_from(m, arm.index())?;
    if probs.p_cp.abs() <= tol {
        return Err(EstimateError::WeakComplierShare {
            share: probs.p_cp,
            tol,
        });
    }
    let z_bar = m.z_bar();
    let w1 = probs.p_at / probs.p_cp + (1.0 - z_bar);
    let w0 = probs.p_nt / probs.p_cp + z_bar;
    Ok((w1, w0))
}

struct DirectEffectParts {
    rho: DirectEffects,
    r1: (f64, f64),
    r0: (f64, f64),
}

fn direct_effects_from(m: &CellMoments, tol: f64) -> Result<DirectEffectParts, EstimateError> {
    let p1 = probs_from(m, 1)?;
    let p0 = probs_from(m, 0)?;
    let r1 = (r_from(m, 1, 1)?, r_from(m, 1, 0)?);
    let r0 = (r_from(m, 0, 1)?, r_from(m, 0, 0)?);

    let at_den = p1.p_at * p0.p_cp - p0.p_at * p1.p_cp;
    if at_den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::AlwaysTaker,
            magnitude: at_den.abs(),
            tol,
        });
    }
    let nt_den = p1.p_nt * p0.p_cp - p0.p_nt * p1.p_cp;
    if nt_den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::NeverTaker,
            magnitude: nt_den.abs(),
            tol,
        });
    }

    let rho1 = (r1.0 * p0.p_cp - r1.1 * p1.p_cp) / at_den;
    let rho0 = (r0.0 * p0.p_cp - r0.1 * p1.p_cp) / nt_den;
    Ok(DirectEffectParts {
        rho: DirectEffects { rho1, rho0 },
        r1,
        r0,
    })
}

/// Conditional subgroup probabilities given `W = w`.
///
/// `p_at` is the treated share at `Z = 0`, `p_nt` the untreated share at
/// `Z = 1`, and `p_cp` their complement; requires both `(Z, W = w)` cells
/// to be populated.
pub fn subgroup_probs(sample: &Sample, w: u8) -> Result<SubgroupProbs, EstimateError> {
    probs_from(&CellMoments::from_sample(sample), w as usize)
}

/// Unconditional Wald ratio of mean outcome contrast to mean treatment
/// contrast across `Z`.
pub fn iv_estimand(sample: &Sample, config: &EstimatorConfig) -> Result<f64, EstimateError> {
    iv_from(&CellMoments::from_sample(sample), config.relevance_tol)
}

/// Conditional Wald ratio in product-moment form:
///
/// ```text
/// (E[YZW]E[W] - E[YW]E[ZW]) / (E[DZW]E[W] - E[DW]E[ZW])
/// ```
///
/// with sample means in place of expectations and the conditioning arm's
/// indicator in place of `W`. Algebraically identical to the Wald ratio
/// computed within the arm's subsample.
pub fn iv1_estimand(sample: &Sample, config: &EstimatorConfig) -> Result<f64, EstimateError> {
    iv1_from(
        &CellMoments::from_sample(sample),
        config.arm,
        config.relevance_tol,
    )
}

/// Outcome-contrast moment across `Z` within `W = w`.
///
/// For `d = 1` the contrast of `Y*D` cell means (`r1(w)`); for `d = 0` the
/// contrast of `Y*(1-D)` cell means (`r0(w)`).
pub fn r_moment(sample: &Sample, d: u8, w: u8) -> Result<f64, EstimateError> {
    r_from(&CellMoments::from_sample(sample), d, w as usize)
}

/// Plug-in direct effects of `Z` on the treated and untreated outcome,
/// identified from the variation of `r_d(w)` across the two arms of `W`:
///
/// ```text
/// rho1 = (r1(1) P(CP|0) - r1(0) P(CP|1)) / (P(AT|1) P(CP|0) - P(AT|0) P(CP|1))
/// rho0 = (r0(1) P(CP|0) - r0(0) P(CP|1)) / (P(NT|1) P(CP|0) - P(NT|0) P(CP|1))
/// ```
pub fn direct_effects(
    sample: &Sample,
    config: &EstimatorConfig,
) -> Result<DirectEffects, EstimateError> {
    direct_effects_from(&CellMoments::from_sample(sample), config.relevance_tol).map(|p| p.rho)
}

/// Weights attached to the direct effects in the LATE correction.
///
/// Returns `(w1, w0)`; their sum equals `1 / P(CP|arm)` by construction.
pub fn late_weights(
    sample: &Sample,
    config: &EstimatorConfig,
) -> Result<(f64, f64), EstimateError> {
    weights_from(
        &CellMoments::from_sample(sample),
        config.arm,
        config.relevance_tol,
    )
}

/// Runs the full estimation pipeline over a single moment pass.
///
/// Errors propagate from the first constituent whose empirical support or
/// relevance condition fails, naming the component.
pub fn late_estimate(
    sample: &Sample,
    config: &EstimatorConfig,
) -> Result<LateComponents, EstimateError> {
    let m = CellMoments::from_sample(sample);
    let probs_w1 = probs_from(&m, 1)?;
    let probs_w0 = probs_from(&m, 0)?;
    let parts = direct_effects_from(&m, config.relevance_tol)?;
    let iv = iv_from(&m, config.relevance_tol)?;
    let iv1 = iv1_from(&m, config.arm, config.relevance_tol)?;
    let (w1, w0) = weights_from(&m, config.arm, config.relevance_tol)?;
    let rho = parts.rho;
    let late = iv1 - rho.rho1 * w1 - rho.rho0 * w0;
    Ok(LateComponents {
        iv,
        iv1,
        rho,
        w1,
        w0,
        late,
        probs_w1,
        probs_w0,
        z_bar: m.z_bar(),
        r1: parts.r1,
        r0: parts.r0,
        config: *config,
    })
}
