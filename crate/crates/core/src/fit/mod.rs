//! Nonlinear least-squares extraction of the compensation voltage.

mod linalg;
mod lm;
mod scan;
mod sinusoid;

pub use lm::{levenberg_marquardt, numeric_jacobian, t_quantile_975, LmOptions, LmResult};
pub use scan::{fit_bessel_scan, fit_fluorescence_scan, fit_scan, initial_guess};
pub(crate) use scan::{fluorescence_data, model_curve, model_value, raman_data};
pub use sinusoid::{
    fit_sinusoid, visibility_zero_crossing, SinusoidFit, VisibilityPoint, ZeroCrossing,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::TrapConfig;

/// Which data a fit consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RamanScan,
    FluorescenceScan,
    Sinusoid,
    VisibilityLine,
}

/// Fit-model description for voltage scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// rf sideband order n (0 = carrier).
    pub order: u32,
    /// Commanded pulse time in seconds.
    pub pulse_time: f64,
    /// Whether the pulse time floats in the fit. Off by default: the
    /// commanded pulse time is usually known better than the data can
    /// constrain it.
    pub float_pulse_time: bool,
    /// Whether the intrinsic modulation-depth offset b0 floats. Off by
    /// default: with zero β-curvature only b0 − b1·c is observable, so
    /// floating both b0 and c is degenerate. Enable only for scans wide
    /// enough to pin the curvature.
    #[serde(default)]
    pub float_beta_offset: bool,
    /// Lamb–Dicke parameter of the probed mode (held fixed).
    pub lamb_dicke: f64,
}

impl ModelSpec {
    pub fn raman(order: u32, pulse_time: f64, lamb_dicke: f64) -> Self {
        ModelSpec {
            kind: ModelKind::RamanScan,
            order,
            pulse_time,
            float_pulse_time: false,
            float_beta_offset: false,
            lamb_dicke,
        }
    }

    pub fn fluorescence(order: u32) -> Self {
        ModelSpec {
            kind: ModelKind::FluorescenceScan,
            order,
            pulse_time: 0.0,
            float_pulse_time: false,
            float_beta_offset: false,
            lamb_dicke: 0.0,
        }
    }
}

/// Identifies one entry of [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    /// Transition-strength scale (rad/s for Raman scans, √counts for
    /// fluorescence scans).
    Strength,
    /// Intrinsic modulation depth at the null.
    BetaOffset,
    /// Modulation depth per volt.
    BetaSlope,
    /// Modulation depth per volt².
    BetaCurvature,
    /// Compensation voltage.
    CenterVoltage,
    /// Mean thermal phonon number.
    MeanPhonons,
    /// Pulse time in seconds.
    PulseTime,
    /// Constant photon background (fluorescence scans only).
    Background,
}

impl ParamName {
    pub fn label(self) -> &'static str {
        match self {
            ParamName::Strength => "strength",
            ParamName::BetaOffset => "beta_offset",
            ParamName::BetaSlope => "beta_slope",
            ParamName::BetaCurvature => "beta_curvature",
            ParamName::CenterVoltage => "center_voltage",
            ParamName::MeanPhonons => "mean_phonons",
            ParamName::PulseTime => "pulse_time",
            ParamName::Background => "background",
        }
    }
}

/// Full parameter set of the scan models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub strength: f64,
    pub beta_offset: f64,
    pub beta_slope: f64,
    pub beta_curvature: f64,
    pub center_voltage: f64,
    pub mean_phonons: f64,
    pub pulse_time: f64,
    pub background: f64,
}

impl ParamVector {
    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Strength => self.strength,
            ParamName::BetaOffset => self.beta_offset,
            ParamName::BetaSlope => self.beta_slope,
            ParamName::BetaCurvature => self.beta_curvature,
            ParamName::CenterVoltage => self.center_voltage,
            ParamName::MeanPhonons => self.mean_phonons,
            ParamName::PulseTime => self.pulse_time,
            ParamName::Background => self.background,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::Strength => self.strength = value,
            ParamName::BetaOffset => self.beta_offset = value,
            ParamName::BetaSlope => self.beta_slope = value,
            ParamName::BetaCurvature => self.beta_curvature = value,
            ParamName::CenterVoltage => self.center_voltage = value,
            ParamName::MeanPhonons => self.mean_phonons = value,
            ParamName::PulseTime => self.pulse_time = value,
            ParamName::Background => self.background = value,
        }
    }
}

/// Scan-fit output: fitted parameters with covariance and 95% confidence
/// half-widths over the floated subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParamVector,
    /// Floated parameters, in covariance row order.
    pub floated: Vec<ParamName>,
    pub covariance: Vec<Vec<f64>>,
    pub ci95: Vec<f64>,
    pub residual_norm: f64,
    pub reduced_chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dof: usize,
}

impl FitResult {
    pub fn ci95_for(&self, name: ParamName) -> Option<f64> {
        self.floated
            .iter()
            .position(|&p| p == name)
            .map(|i| self.ci95[i])
    }

    /// Fitted compensation voltage in volts.
    pub fn compensation_voltage(&self) -> f64 {
        self.params.center_voltage
    }

    /// 95% confidence half-width of the compensation voltage in volts.
    pub fn compensation_ci95(&self) -> f64 {
        self.ci95_for(ParamName::CenterVoltage).unwrap_or(f64::NAN)
    }
}

/// Convert a voltage (or a voltage confidence interval) on the control
/// electrode to the electric field it produces at the ion.
pub fn voltage_to_field(value: f64, trap: &TrapConfig) -> Result<f64> {
    if !(trap.field_gain > 0.0) {
        return Err(Error::config("field_gain must be positive"));
    }
    Ok(value * trap.field_gain)
}
