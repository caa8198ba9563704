//! JSON run configuration: preset resolution and unit conversion.
//!
//! Frequencies enter in hertz and are converted to angular frequencies
//! internally. `cmd_simulate` and `cmd_monitor` echo the fully resolved
//! configuration (presets expanded) so a run can be audited and replayed
//! from its own output.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use micromotion_core::error::{Error, Result};
use micromotion_core::physics::{
    FluorescenceConfig, IonSpecies, LaserGeometry, ThermalState, TrapConfig,
};
use micromotion_core::presets;
use micromotion_core::sim::{ScanMode, ScanPlan, ScanSetup, StrayFieldModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapSection {
    pub rf_frequency_hz: f64,
    pub secular_frequency_hz: f64,
    pub q_parameter: f64,
    #[serde(default)]
    pub axis_angle_rad: f64,
    pub field_gain_v_per_m_per_v: f64,
}

impl TrapSection {
    fn to_core(&self) -> TrapConfig {
        TrapConfig {
            rf_frequency: TAU * self.rf_frequency_hz,
            secular_frequency: TAU * self.secular_frequency_hz,
            q_parameter: self.q_parameter,
            axis_angle: self.axis_angle_rad,
            field_gain: self.field_gain_v_per_m_per_v,
        }
    }

    fn from_core(trap: &TrapConfig) -> Self {
        TrapSection {
            rf_frequency_hz: trap.rf_frequency / TAU,
            secular_frequency_hz: trap.secular_frequency / TAU,
            q_parameter: trap.q_parameter,
            axis_angle_rad: trap.axis_angle,
            field_gain_v_per_m_per_v: trap.field_gain,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IonSection {
    pub name: String,
    pub mass_amu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaserSection {
    pub wavelength_m: f64,
    pub geometry_factor: f64,
    #[serde(default = "one")]
    pub projection: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalSection {
    pub mean_phonons: f64,
    pub lamb_dicke: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StraySection {
    #[serde(default)]
    pub constant_v_per_m: f64,
    #[serde(default)]
    pub linear_drift_v_per_m_per_s: f64,
    #[serde(default)]
    pub charging_amplitude_v_per_m: f64,
    #[serde(default = "one")]
    pub charging_timescale_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluorescenceSection {
    pub collection_efficiency: f64,
    pub cycling_rate_hz: f64,
    pub detection_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanSection {
    pub start_voltage_v: f64,
    pub stop_voltage_v: f64,
    pub points: usize,
    pub shots_per_point: u64,
    #[serde(default)]
    pub order: u32,
    #[serde(default = "default_pulse_time")]
    pub pulse_time_s: f64,
    #[serde(default = "default_mode")]
    pub mode: ScanMode,
}

fn default_pulse_time() -> f64 {
    1e-5
}

fn default_mode() -> ScanMode {
    ScanMode::Raman
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorSection {
    pub repeat: usize,
    #[serde(default = "default_cadence")]
    pub cadence_s: f64,
}

fn default_cadence() -> f64 {
    20.0
}

/// Top-level run configuration. Either `preset` or the full inline
/// apparatus sections must be present; inline sections override preset
/// values field by field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ion: Option<IonSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laser: Option<LaserSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stray: Option<StraySection>,
    pub scan: ScanSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluorescence: Option<FluorescenceSection>,
    /// Bare Rabi frequency in Hz; defaults to the exact π-pulse value
    /// 1/(2·pulse_time).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_frequency_hz: Option<f64>,
    #[serde(default = "default_overhead")]
    pub overhead_per_shot_s: f64,
    #[serde(default)]
    pub spam_flip_probability: f64,
    #[serde(default)]
    pub dark_rate_hz: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorSection>,
}

fn default_overhead() -> f64 {
    1e-2
}

/// A config with every section populated, ready to drive the simulator.
pub struct ResolvedRun {
    pub config: RunConfig,
    pub plan: ScanPlan,
    pub setup: ScanSetup,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        Ok(config)
    }

    /// Expand the preset, apply overrides, validate, and convert units.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<ResolvedRun> {
        let preset = match &self.preset {
            Some(name) => Some(presets::preset(name)?),
            None => None,
        };
        let trap = match (&self.trap, &preset) {
            (Some(section), _) => section.to_core(),
            (None, Some(app)) => app.trap,
            (None, None) => {
                return Err(Error::Config(
                    "config needs either a preset or an inline trap section".into(),
                ))
            }
        };
        let ion = match (&self.ion, &preset) {
            (Some(section), _) => IonSpecies {
                name: section.name.clone(),
                mass_amu: section.mass_amu,
            },
            (None, Some(app)) => app.ion.clone(),
            (None, None) => {
                return Err(Error::Config(
                    "config needs either a preset or an inline ion section".into(),
                ))
            }
        };
        let laser = match (&self.laser, &preset) {
            (Some(section), _) => LaserGeometry {
                wavelength: section.wavelength_m,
                geometry_factor: section.geometry_factor,
                projection: section.projection,
            },
            (None, Some(app)) => app.laser,
            (None, None) => {
                return Err(Error::Config(
                    "config needs either a preset or an inline laser section".into(),
                ))
            }
        };
        let thermal = match (&self.thermal, &preset) {
            (Some(section), _) => ThermalState {
                mean_phonons: section.mean_phonons,
                lamb_dicke: section.lamb_dicke,
            },
            (None, Some(app)) => app.thermal,
            (None, None) => {
                return Err(Error::Config(
                    "config needs either a preset or an inline thermal section".into(),
                ))
            }
        };
        let stray = match &self.stray {
            Some(section) => StrayFieldModel {
                constant: section.constant_v_per_m,
                linear_drift: section.linear_drift_v_per_m_per_s,
                charging_amplitude: section.charging_amplitude_v_per_m,
                charging_timescale: section.charging_timescale_s,
            },
            None => StrayFieldModel::constant(0.0),
        };

        let plan = ScanPlan::linear(
            self.scan.start_voltage_v,
            self.scan.stop_voltage_v,
            self.scan.points,
            self.scan.shots_per_point,
            self.scan.order,
            self.scan.pulse_time_s,
            self.scan.mode,
        )?;

        let mut setup = ScanSetup::new(trap, ion, laser, thermal, stray);
        setup.fluorescence = self.fluorescence.as_ref().map(|f| FluorescenceConfig {
            collection_efficiency: f.collection_efficiency,
            cycling_rate: f.cycling_rate_hz,
            detection_time: f.detection_time_s,
        });
        setup.rabi_frequency = self.rabi_frequency_hz.map(|f| TAU * f);
        setup.overhead_per_shot = self.overhead_per_shot_s;
        setup.spam_flip_probability = self.spam_flip_probability;
        setup.dark_rate = self.dark_rate_hz;
        setup.validate(&plan)?;

        let seed = seed_override.unwrap_or(self.seed);

        // The echo carries every resolved section so it can be replayed
        // verbatim, preset or not.
        let mut echo = self.clone();
        echo.trap = Some(TrapSection::from_core(&trap));
        echo.ion = Some(IonSection {
            name: setup.ion.name.clone(),
            mass_amu: setup.ion.mass_amu,
        });
        echo.laser = Some(LaserSection {
            wavelength_m: laser.wavelength,
            geometry_factor: laser.geometry_factor,
            projection: laser.projection,
        });
        echo.thermal = Some(ThermalSection {
            mean_phonons: thermal.mean_phonons,
            lamb_dicke: thermal.lamb_dicke,
        });
        echo.stray = Some(StraySection {
            constant_v_per_m: stray.constant,
            linear_drift_v_per_m_per_s: stray.linear_drift,
            charging_amplitude_v_per_m: stray.charging_amplitude,
            charging_timescale_s: stray.charging_timescale,
        });
        echo.seed = seed;

        Ok(ResolvedRun {
            config: echo,
            plan,
            setup,
            seed,
        })
    }
}
