//! Influence functions and asymptotic inference for the corrected LATE
//! estimator.
//!
//! Every estimator in this crate is a smooth functional of sample means, so
//! each admits a per-observation linearization ("influence function") built
//! from centered moments. The estimator's asymptotic variance is the variance
//! of its influence sequence divided by the sample size; plug-in centering
//! makes every sequence average to zero exactly.
//!
//! The LATE influence combines its five constituents:
//!
//! ```text
//! phi_late = phi_iv1 - rho1*phi_w1 - w1*phi_rho1 - rho0*phi_w0 - w0*phi_rho0
//! ```

use thiserror::Error;

use crate::estimators::{EstimateError, LateComponents, RelevanceCheck};
use crate::kahan;
use crate::normal;
use crate::sample::{CellMoments, Sample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("confidence level must lie in (0, 1), got {level}")]
    InvalidLevel { level: f64 },
    #[error(transparent)]
    Estimation(#[from] EstimateError),
}

/// Per-observation influence sequences for the five estimators and their
/// LATE combination. All sequences have length `n` and sample mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSet {
    pub phi_iv1: Vec<f64>,
    pub phi_w1: Vec<f64>,
    pub phi_w0: Vec<f64>,
    pub phi_rho1: Vec<f64>,
    pub phi_rho0: Vec<f64>,
    pub phi_late: Vec<f64>,
}

impl InfluenceSet {
    pub fn n(&self) -> usize {
        self.phi_late.len()
    }
}

/// Standard errors and symmetric normal confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InferenceResult {
    pub se_late: f64,
    pub se_rho1: f64,
    pub se_rho0: f64,
    pub ci_late: (f64, f64),
    pub ci_rho1: (f64, f64),
    pub ci_rho0: (f64, f64),
    pub level: f64,
}

/// Moment means entering the ratio linearizations, taken over the full
/// sample with the conditioning arm's indicator in place of `W`.
struct Moments {
    m_w: f64,
    m_z: f64,
    m_zw: f64,
    m_znw: f64,  // E[(1-Z) A]
    m_zwn: f64,  // E[Z (1-A)]
    m_znwn: f64, // E[(1-Z)(1-A)]
    m_yzw: f64,
    m_yw: f64,
    m_dzw: f64,
    m_dw: f64,
    m_dznw: f64,
    m_dzwn: f64,
    m_dznwn: f64,
    m_ndzw: f64,  // E[(1-D) Z A]
    m_ndzwn: f64, // E[(1-D) Z (1-A)]
    m_ydzw: f64,
    m_ydznw: f64,
    m_ydzwn: f64,
    m_ydznwn: f64,
    m_yndzw: f64, // E[Y (1-D) Z A]
    m_yndznw: f64,
    m_yndzwn: f64,
    m_yndznwn: f64,
}

impl Moments {
    fn from_cells(m: &CellMoments, arm_index: usize) -> Result<Self, EstimateError> {
        let a = arm_index;
        let b = 1 - a;
        for (z, w) in [(0, a), (1, a), (0, b), (1, b)] {
            if m.count[z][w] == 0 {
                return Err(EstimateError::EmptyCell {
                    z: z as u8,
                    w: Some(w as u8),
                });
            }
        }
        let n = m.n as f64;
        Ok(Self {
            m_w: (m.count[0][a] + m.count[1][a]) as f64 / n,
            m_z: m.count_z(1) as f64 / n,
            m_zw: m.count[1][a] as f64 / n,
            m_znw: m.count[0][a] as f64 / n,
            m_zwn: m.count[1][b] as f64 / n,
            m_znwn: m.count[0][b] as f64 / n,
            m_yzw: m.sum_y[1][a] / n,
            m_yw: (m.sum_y[0][a] + m.sum_y[1][a]) / n,
            m_dzw: m.sum_d[1][a] as f64 / n,
            m_dw: (m.sum_d[0][a] + m.sum_d[1][a]) as f64 / n,
            m_dznw: m.sum_d[0][a] as f64 / n,
            m_dzwn: m.sum_d[1][b] as f64 / n,
            m_dznwn: m.sum_d[0][b] as f64 / n,
            m_ndzw: (m.count[1][a] as u64 - m.sum_d[1][a]) as f64 / n,
            m_ndzwn: (m.count[1][b] as u64 - m.sum_d[1][b]) as f64 / n,
            m_ydzw: m.sum_yd[1][a] / n,
            m_ydznw: m.sum_yd[0][a] / n,
            m_ydzwn: m.sum_yd[1][b] / n,
            m_ydznwn: m.sum_yd[0][b] / n,
            m_yndzw: (m.sum_y[1][a] - m.sum_yd[1][a]) / n,
            m_yndznw: (m.sum_y[0][a] - m.sum_yd[0][a]) / n,
            m_yndzwn: (m.sum_y[1][b] - m.sum_yd[1][b]) / n,
            m_yndznwn: (m.sum_y[0][b] - m.sum_yd[0][b]) / n,
        })
    }
}

/// Linearization of a cell-mean ratio `E[num 1{cell}] / E[1{cell}]`:
/// `phi = phi_num / m_cell - m_num * phi_cell / m_cell^2`.
#[inline]
fn ratio_if(num: f64, m_num: f64, cell: f64, m_cell: f64) -> f64 {
    (num - m_num) / m_cell - m_num * (cell - m_cell) / (m_cell * m_cell)
}

/// Builds the six influence sequences for a fit on the same sample.
///
/// Uses the plug-in values recorded in `fit`; the relevance tolerances of the
/// fit's configuration guard every denominator that appears in a
/// linearization.
pub fn influence_set(
    sample: &Sample,
    fit: &LateComponents,
) -> Result<InfluenceSet, InferenceError> {
    let tol = fit.config.relevance_tol;
    let arm_index = fit.config.arm.index();
    let cells = CellMoments::from_sample(sample);
    let m = Moments::from_cells(&cells, arm_index)?;

    // Subgroup probabilities and r-moments, arm-relative: suffix `a` is the
    // conditioning arm, `b` the other. The rho linearizations are invariant
    // to which arm carries which label (numerator and denominator flip sign
    // together), so arm-relative labels reproduce the literal formulas.
    let (probs_a, probs_b) = match arm_index {
        1 => (&fit.probs_w1, &fit.probs_w0),
        _ => (&fit.probs_w0, &fit.probs_w1),
    };
    let (r1_a, r1_b, r0_a, r0_b) = match arm_index {
        1 => (fit.r1.0, fit.r1.1, fit.r0.0, fit.r0.1),
        _ => (fit.r1.1, fit.r1.0, fit.r0.1, fit.r0.0),
    };

    let iv1_den = m.m_dzw * m.m_w - m.m_dw * m.m_zw;
    if iv1_den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::Iv1Contrast,
            magnitude: iv1_den.abs(),
            tol,
        }
        .into());
    }
    let at_den = probs_a.p_at * probs_b.p_cp - probs_b.p_at * probs_a.p_cp;
    if at_den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::AlwaysTaker,
            magnitude: at_den.abs(),
            tol,
        }
        .into());
    }
    let nt_den = probs_a.p_nt * probs_b.p_cp - probs_b.p_nt * probs_a.p_cp;
    if nt_den.abs() <= tol {
        return Err(EstimateError::WeakRelevance {
            which: RelevanceCheck::NeverTaker,
            magnitude: nt_den.abs(),
            tol,
        }
        .into());
    }
    if probs_a.p_cp.abs() <= tol {
        return Err(EstimateError::WeakComplierShare {
            share: probs_a.p_cp,
            tol,
        }
        .into());
    }

    let n = sample.n();
    let mut set = InfluenceSet {
        phi_iv1: Vec::with_capacity(n),
        phi_w1: Vec::with_capacity(n),
        phi_w0: Vec::with_capacity(n),
        phi_rho1: Vec::with_capacity(n),
        phi_rho0: Vec::with_capacity(n),
        phi_late: Vec::with_capacity(n),
    };

    let rho1 = fit.rho.rho1;
    let rho0 = fit.rho.rho0;
    let p_cp_a = probs_a.p_cp;
    let p_cp_sq = p_cp_a * p_cp_a;

    for i in 0..n {
        let y = sample.y()[i];
        let d = sample.d()[i] as f64;
        let z = sample.z()[i] as f64;
        let a = if sample.w()[i] as usize == arm_index {
            1.0
        } else {
            0.0
        };
        let b = 1.0 - a;
        let za = z * a;
        let zna = (1.0 - z) * a;
        let zb = z * b;
        let znb = (1.0 - z) * b;

        // Conditional subgroup probability linearizations.
        let phi_at_a = ratio_if(d * zna, m.m_dznw, zna, m.m_znw);
        let phi_at_b = ratio_if(d * znb, m.m_dznwn, znb, m.m_znwn);
        let phi_cp_a = ratio_if(d * za, m.m_dzw, za, m.m_zw) - phi_at_a;
        let phi_cp_b = ratio_if(d * zb, m.m_dzwn, zb, m.m_zwn) - phi_at_b;
        let phi_nt_a = ratio_if((1.0 - d) * za, m.m_ndzw, za, m.m_zw);
        let phi_nt_b = ratio_if((1.0 - d) * zb, m.m_ndzwn, zb, m.m_zwn);

        // Product-moment Wald ratio.
        let phi_ivn = m.m_yzw * (a - m.m_w) + m.m_w * (y * za - m.m_yzw)
            - m.m_yw * (za - m.m_zw)
            - m.m_zw * (y * a - m.m_yw);
        let phi_ivd = m.m_dzw * (a - m.m_w) + m.m_w * (d * za - m.m_dzw)
            - m.m_dw * (za - m.m_zw)
            - m.m_zw * (d * a - m.m_dw);
        let phi_iv1 = (phi_ivn - fit.iv1 * phi_ivd) / iv1_den;

        // Weights.
        let phi_z = z - m.m_z;
        let phi_w1 = phi_at_a / p_cp_a - probs_a.p_at * phi_cp_a / p_cp_sq - phi_z;
        let phi_w0 = phi_nt_a / p_cp_a - probs_a.p_nt * phi_cp_a / p_cp_sq + phi_z;

        // Outcome-contrast moments.
        let yd = y * d;
        let ynd = y * (1.0 - d);
        let phi_r1_a = ratio_if(yd * za, m.m_ydzw, za, m.m_zw)
            - ratio_if(yd * zna, m.m_ydznw, zna, m.m_znw);
        let phi_r1_b = ratio_if(yd * zb, m.m_ydzwn, zb, m.m_zwn)
            - ratio_if(yd * znb, m.m_ydznwn, znb, m.m_znwn);
        let phi_r0_a = ratio_if(ynd * za, m.m_yndzw, za, m.m_zw)
            - ratio_if(ynd * zna, m.m_yndznw, zna, m.m_znw);
        let phi_r0_b = ratio_if(ynd * zb, m.m_yndzwn, zb, m.m_zwn)
            - ratio_if(ynd * znb, m.m_yndznwn, znb, m.m_znwn);

        // Direct effects.
        let phi_n1 = r1_a * phi_cp_b + probs_b.p_cp * phi_r1_a
            - r1_b * phi_cp_a
            - p_cp_a * phi_r1_b;
        let phi_d1 = probs_a.p_at * phi_cp_b + probs_b.p_cp * phi_at_a
            - probs_b.p_at * phi_cp_a
            - p_cp_a * phi_at_b;
        let phi_rho1 = (phi_n1 - rho1 * phi_d1) / at_den;
        let phi_n0 = r0_a * phi_cp_b + probs_b.p_cp * phi_r0_a
            - r0_b * phi_cp_a
            - p_cp_a * phi_r0_b;
        let phi_d0 = probs_a.p_nt * phi_cp_b + probs_b.p_cp * phi_nt_a
            - probs_b.p_nt * phi_cp_a
            - p_cp_a * phi_nt_b;
        let phi_rho0 = (phi_n0 - rho0 * phi_d0) / nt_den;

        let phi_late =
            phi_iv1 - rho1 * phi_w1 - fit.w1 * phi_rho1 - rho0 * phi_w0 - fit.w0 * phi_rho0;

        set.phi_iv1.push(phi_iv1);
        set.phi_w1.push(phi_w1);
        set.phi_w0.push(phi_w0);
        set.phi_rho1.push(phi_rho1);
        set.phi_rho0.push(phi_rho0);
        set.phi_late.push(phi_late);
    }

    Ok(set)
}

/// Standard deviation of an influence sequence over sqrt(n), with 1/n
/// normalization to match the asymptotic variance formula literally.
fn influence_se(phi: &[f64]) -> f64 {
    let n = phi.len() as f64;
    let mean = kahan::mean(phi);
    let var = kahan::sum(phi.iter().map(|&v| (v - mean) * (v - mean))) / n;
    (var / n).sqrt()
}

/// Standard errors and symmetric normal confidence intervals at `level` for
/// the LATE and direct-effect estimates of `fit`.
pub fn standard_errors(
    influences: &InfluenceSet,
    fit: &LateComponents,
    level: f64,
) -> Result<InferenceResult, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel { level });
    }
    let z = normal::critical_value(level);
    let interval = |point: f64, se: f64| (point - z * se, point + z * se);
    let se_late = influence_se(&influences.phi_late);
    let se_rho1 = influence_se(&influences.phi_rho1);
    let se_rho0 = influence_se(&influences.phi_rho0);
    Ok(InferenceResult {
        se_late,
        se_rho1,
        se_rho0,
        ci_late: interval(fit.late, se_late),
        ci_rho1: interval(fit.rho.rho1, se_rho1),
        ci_rho0: interval(fit.rho.rho0, se_rho0),
        level,
    })
}
