//! Sinusoid fits of rf-phase correlation histograms and the linear
//! zero-crossing fit of signed visibility versus voltage.
//!
//! N(φ) = O·(1 + V·sin(φ + φ0)) is linear in (O, O·V·cosφ0, O·V·sinφ0),
//! so the histogram fit is a weighted 3-parameter linear least-squares
//! problem with no iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linalg::SymMatrix;
use crate::fit::lm::t_quantile_975;
use crate::sim::CorrelationHistogram;

/// Result of fitting N(φ) = O·(1 + V·sin(φ + φ0)) to a histogram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Phase φ0 in radians, in (−π, π].
    pub phase: f64,
    /// amplitude/offset, clamped to [0, 1].
    pub visibility: f64,
    pub offset_err: f64,
    pub amplitude_err: f64,
    pub visibility_err: f64,
    /// √(Σ weighted residual²).
    pub residual_norm: f64,
}

impl SinusoidFit {
    /// Visibility with the sign carried by the fitted phase: positive for
    /// |φ0| < π/2, negative beyond. The phase jumps by π across the
    /// micromotion null, so this signs the modulation by which side of the
    /// null the ion sits on.
    pub fn signed_visibility(&self) -> f64 {
        if self.phase.cos() >= 0.0 {
            self.visibility
        } else {
            -self.visibility
        }
    }
}

/// Weighted least-squares sinusoid fit of a phase-binned histogram.
pub fn fit_sinusoid(hist: &CorrelationHistogram) -> Result<SinusoidFit> {
    let n = hist.counts.len();
    if n < 8 {
        return Err(Error::data(format!(
            "sinusoid fit needs at least 8 bins, got {n}"
        )));
    }
    if hist.phases.len() != n {
        return Err(Error::data("phase/count length mismatch"));
    }
    if hist.total_counts() == 0 {
        return Err(Error::data("degenerate histogram: all bins empty"));
    }

    // Basis: [1, sin φ, cos φ]; Poisson weights 1/max(counts, 1).
    let mut normal = SymMatrix::zeros(3);
    let mut rhs = [0.0; 3];
    for i in 0..n {
        let w = 1.0 / (hist.counts[i] as f64).max(1.0);
        let basis = [1.0, hist.phases[i].sin(), hist.phases[i].cos()];
        let y = hist.counts[i] as f64;
        for a in 0..3 {
            rhs[a] += w * basis[a] * y;
            for b in 0..=a {
                normal.add(a, b, w * basis[a] * basis[b]);
                if a != b {
                    normal.add(b, a, w * basis[a] * basis[b]);
                }
            }
        }
    }
    let coeff = normal.solve(&rhs)?;
    let (offset, s_coef, c_coef) = (coeff[0], coeff[1], coeff[2]);

    let mut chi2 = 0.0;
    for i in 0..n {
        let w = 1.0 / (hist.counts[i] as f64).max(1.0);
        let model = offset + s_coef * hist.phases[i].sin() + c_coef * hist.phases[i].cos();
        let r = model - hist.counts[i] as f64;
        chi2 += w * r * r;
    }
    let dof = n - 3;
    let sigma2 = chi2 / dof as f64;
    let cov = normal.invert()?;
    let var = |i: usize| cov.get(i, i) * sigma2;
    let covar = |i: usize, j: usize| cov.get(i, j) * sigma2;

    // O·V·sin(φ+φ0) = s_coef·sinφ + c_coef·cosφ
    let amplitude = s_coef.hypot(c_coef);
    let phase = c_coef.atan2(s_coef);
    let visibility = if offset > 0.0 {
        (amplitude / offset).clamp(0.0, 1.0)
    } else {
        0.0
    };

    // First-order error propagation through A = √(s²+c²) and V = A/O.
    let amplitude_var = if amplitude > 1e-12 {
        (s_coef * s_coef * var(1)
            + c_coef * c_coef * var(2)
            + 2.0 * s_coef * c_coef * covar(1, 2))
            / (amplitude * amplitude)
    } else {
        var(1).max(var(2))
    };
    let cov_amp_offset = if amplitude > 1e-12 {
        (s_coef * covar(0, 1) + c_coef * covar(0, 2)) / amplitude
    } else {
        0.0
    };
    let visibility_var = if offset > 0.0 {
        (amplitude_var + (amplitude / offset).powi(2) * var(0)
            - 2.0 * (amplitude / offset) * cov_amp_offset)
            / (offset * offset)
    } else {
        f64::INFINITY
    };

    Ok(SinusoidFit {
        offset,
        amplitude,
        phase,
        visibility,
        offset_err: var(0).max(0.0).sqrt(),
        amplitude_err: amplitude_var.max(0.0).sqrt(),
        visibility_err: visibility_var.max(0.0).sqrt(),
        residual_norm: chi2.sqrt(),
    })
}

/// One voltage point of a visibility-versus-voltage series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPoint {
    pub voltage: f64,
    /// Visibility signed by the fitted sinusoid phase.
    pub signed_visibility: f64,
    pub std_error: f64,
}

/// Zero crossing of the signed visibility, i.e. the compensation voltage
/// seen by the photon-correlation method.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZeroCrossing {
    pub voltage: f64,
    pub ci95: f64,
    /// Set when the series never changes sign and the root is an
    /// extrapolation beyond the scanned range.
    pub extrapolated: bool,
}

/// Weighted linear fit of signed visibility against voltage; the root
/// −intercept/slope estimates the compensation voltage, with its 95%
/// interval from first-order propagation of the (intercept, slope)
/// covariance.
pub fn visibility_zero_crossing(points: &[VisibilityPoint]) -> Result<ZeroCrossing> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "zero-crossing fit needs at least 3 points, got {n}"
        )));
    }
    for p in points {
        if p.std_error < 0.0 {
            return Err(Error::data("negative std_error"));
        }
    }
    // Equal weights when errors are absent; otherwise inverse variance
    // with a floor at a tenth of the smallest reported error.
    let smallest_positive = points
        .iter()
        .map(|p| p.std_error)
        .filter(|&e| e > 0.0)
        .fold(f64::INFINITY, f64::min);
    let weight = |p: &VisibilityPoint| -> f64 {
        if smallest_positive.is_infinite() {
            1.0
        } else {
            let e = p.std_error.max(smallest_positive / 10.0);
            1.0 / (e * e)
        }
    };

    let mut normal = SymMatrix::zeros(2);
    let mut rhs = [0.0; 2];
    for p in points {
        let w = weight(p);
        normal.add(0, 0, w);
        normal.add(0, 1, w * p.voltage);
        normal.add(1, 0, w * p.voltage);
        normal.add(1, 1, w * p.voltage * p.voltage);
        rhs[0] += w * p.signed_visibility;
        rhs[1] += w * p.voltage * p.signed_visibility;
    }
    let coeff = normal.solve(&rhs)?;
    let (intercept, slope) = (coeff[0], coeff[1]);
    if slope == 0.0 {
        return Err(Error::DegenerateFit(
            "zero slope: visibility does not depend on voltage".into(),
        ));
    }

    let mut chi2 = 0.0;
    for p in points {
        let r = intercept + slope * p.voltage - p.signed_visibility;
        chi2 += weight(p) * r * r;
    }
    let dof = n - 2;
    let sigma2 = chi2 / dof as f64;
    let cov = normal.invert()?;
    let var_i = cov.get(0, 0) * sigma2;
    let var_s = cov.get(1, 1) * sigma2;
    let cov_is = cov.get(0, 1) * sigma2;

    let root = -intercept / slope;
    // Var(−i/s) to first order.
    let var_root = (var_i + root * root * var_s + 2.0 * root * cov_is) / (slope * slope);
    let ci95 = t_quantile_975(dof) * var_root.max(0.0).sqrt();

    let min_v = points
        .iter()
        .map(|p| p.signed_visibility)
        .fold(f64::INFINITY, f64::min);
    let max_v = points
        .iter()
        .map(|p| p.signed_visibility)
        .fold(f64::NEG_INFINITY, f64::max);
    let extrapolated = min_v * max_v > 0.0;

    Ok(ZeroCrossing {
        voltage: root,
        ci95,
        extrapolated,
    })
}
