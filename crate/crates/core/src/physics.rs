//! Closed-form models of micromotion-modified transitions.
//!
//! A dc displacement u0 from the rf null phase-modulates the transition
//! field seen by the ion at the trap rf frequency with modulation depth
//! β = k·q·u0/2. Expanding the modulation in Bessel functions, a near-π
//! pulse on the n-th rf sideband transfers population
//! sin²(π·J_n(β)/2), so scanning the dc voltage maps out a Bessel profile
//! whose extremum marks the compensation voltage. This module holds those
//! models plus the thermal averaging over the phonon distribution and the
//! weak-repump fluorescence variant.

use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_KG, ELEMENTARY_CHARGE, HBAR};
use crate::error::{Error, Result};
use crate::special::bessel_j;

/// Hard ceiling on the phonon sum length; reaching it means the thermal
/// distribution's tail cannot be captured and the evaluation fails.
pub const MAX_PHONON_TRUNCATION: u32 = 100_000;

/// Probability-mass deficit tolerated by the truncated thermal sum. Small
/// enough that the truncation step (which moves with the mean phonon
/// number) stays far below the finite-difference resolution of the fitter.
const THERMAL_MASS_DEFICIT: f64 = 1e-13;

/// Ion species, stored as a mass in atomic mass units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// Mass in atomic mass units.
    pub mass_amu: f64,
}

impl IonSpecies {
    pub fn new(name: impl Into<String>, mass_amu: f64) -> Result<Self> {
        let species = IonSpecies {
            name: name.into(),
            mass_amu,
        };
        species.validate()?;
        Ok(species)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_amu > 0.0) {
            return Err(Error::config(format!(
                "ion mass must be positive, got {} amu",
                self.mass_amu
            )));
        }
        Ok(())
    }

    /// Mass in kilograms.
    pub fn mass_kg(&self) -> f64 {
        self.mass_amu * ATOMIC_MASS_KG
    }
}

/// Trap drive and confinement parameters along the probed axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// rf drive angular frequency ω_rf in rad/s.
    pub rf_frequency: f64,
    /// Secular angular frequency ω_x of the probed axis in rad/s.
    pub secular_frequency: f64,
    /// Dimensionless q-parameter along the micromotion direction.
    pub q_parameter: f64,
    /// Angle θ in radians between the static displacement and the
    /// micromotion direction.
    pub axis_angle: f64,
    /// Field-to-voltage gain K in (V/m) per volt on the control electrode.
    pub field_gain: f64,
}

impl TrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rf_frequency > 0.0) {
            return Err(Error::config("rf_frequency must be positive"));
        }
        if !(self.secular_frequency > 0.0) {
            return Err(Error::config("secular_frequency must be positive"));
        }
        if self.secular_frequency >= self.rf_frequency {
            return Err(Error::config(
                "secular_frequency must be below rf_frequency",
            ));
        }
        if !(self.q_parameter > 0.0 && self.q_parameter < 0.9) {
            return Err(Error::config(format!(
                "q_parameter must lie in (0, 0.9), got {}",
                self.q_parameter
            )));
        }
        if !(self.axis_angle >= 0.0 && self.axis_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::config(format!(
                "axis_angle must lie in [0, pi/2), got {}",
                self.axis_angle
            )));
        }
        if !(self.field_gain > 0.0) {
            return Err(Error::config("field_gain must be positive"));
        }
        Ok(())
    }
}

/// Probe-beam geometry determining the effective momentum transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserGeometry {
    /// Wavelength in meters.
    pub wavelength: f64,
    /// Multiplier on the single-photon wavenumber: 2 for counter-propagating
    /// Raman beams, √2 for perpendicular beams, 1 for a single beam.
    pub geometry_factor: f64,
    /// Cosine of the angle between the momentum transfer and the
    /// micromotion direction.
    pub projection: f64,
}

impl LaserGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::config("wavelength must be positive"));
        }
        if !(self.geometry_factor > 0.0 && self.geometry_factor <= 2.0) {
            return Err(Error::config(format!(
                "geometry_factor must lie in (0, 2], got {}",
                self.geometry_factor
            )));
        }
        if !(self.projection > 0.0 && self.projection <= 1.0) {
            return Err(Error::config(format!(
                "projection must lie in (0, 1], got {}",
                self.projection
            )));
        }
        Ok(())
    }

    /// Effective momentum-transfer wavenumber in rad/m.
    pub fn effective_wavenumber(&self) -> f64 {
        self.geometry_factor * std::f64::consts::TAU / self.wavelength * self.projection
    }
}

/// Motional state after Doppler cooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Mean thermal phonon number of the probed mode.
    pub mean_phonons: f64,
    /// Lamb–Dicke parameter η of the probe on that mode.
    pub lamb_dicke: f64,
}

impl ThermalState {
    pub fn new(mean_phonons: f64, lamb_dicke: f64) -> Result<Self> {
        let state = ThermalState {
            mean_phonons,
            lamb_dicke,
        };
        state.validate()?;
        Ok(state)
    }

    /// Zero-temperature, zero-recoil state; the Rabi profile reduces to
    /// the bare sin².
    pub fn ground() -> Self {
        ThermalState {
            mean_phonons: 0.0,
            lamb_dicke: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_phonons >= 0.0) {
            return Err(Error::config(format!(
                "mean_phonons must be >= 0, got {}",
                self.mean_phonons
            )));
        }
        if !(self.lamb_dicke >= 0.0 && self.lamb_dicke < 1.0) {
            return Err(Error::config(format!(
                "lamb_dicke must lie in [0, 1), got {}",
                self.lamb_dicke
            )));
        }
        Ok(())
    }
}

/// Photon-collection parameters of the weak-repump detection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceConfig {
    /// Collection efficiency η_coll.
    pub collection_efficiency: f64,
    /// Cycling-transition rate Γ in 1/s.
    pub cycling_rate: f64,
    /// Detection time t_det in seconds.
    pub detection_time: f64,
}

impl FluorescenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.collection_efficiency > 0.0 && self.collection_efficiency <= 1.0) {
            return Err(Error::config(format!(
                "collection_efficiency must lie in (0, 1], got {}",
                self.collection_efficiency
            )));
        }
        if !(self.cycling_rate > 0.0) {
            return Err(Error::config("cycling_rate must be positive"));
        }
        if !(self.detection_time > 0.0) {
            return Err(Error::config("detection_time must be positive"));
        }
        Ok(())
    }
}

/// Phase-modulation index β of the transition field.
///
/// Kept signed even though every observable is even in β; the sign carries
/// which side of the null the ion sits on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationDepth(pub f64);

impl ModulationDepth {
    pub fn beta(self) -> f64 {
        self.0
    }
}

/// Static displacement u0 = e·E/(m·ω_x²) of the ion in the pseudopotential,
/// in meters. Sign follows the field.
pub fn displacement_from_field(field: f64, trap: &TrapConfig, ion: &IonSpecies) -> f64 {
    let omega = trap.secular_frequency;
    ELEMENTARY_CHARGE * field / (ion.mass_kg() * omega * omega)
}

/// Modulation depth β = k_eff·q·u0/2 for a displacement u0 in meters.
pub fn modulation_depth(u0: f64, laser: &LaserGeometry, trap: &TrapConfig) -> ModulationDepth {
    ModulationDepth(laser.effective_wavenumber() * trap.q_parameter * u0 / 2.0)
}

/// Modulation depth produced by a control voltage offset and a stray field:
/// β = (k_eff·q·e / 2mω_x²)·(K·δV + E_stray). Zero exactly at the
/// compensation condition K·δV = −E_stray.
pub fn beta_from_voltage(
    delta_v: f64,
    stray_field: f64,
    trap: &TrapConfig,
    ion: &IonSpecies,
    laser: &LaserGeometry,
) -> ModulationDepth {
    let field = trap.field_gain * delta_v + stray_field;
    modulation_depth(displacement_from_field(field, trap, ion), laser, trap)
}

/// Modulation depth per unit of static field, in (V/m)⁻¹.
pub fn beta_per_field(trap: &TrapConfig, ion: &IonSpecies, laser: &LaserGeometry) -> f64 {
    modulation_depth(displacement_from_field(1.0, trap, ion), laser, trap).beta()
}

/// Lamb–Dicke parameter η = k_eff·√(ħ/2mω_x) of the probe geometry.
pub fn lamb_dicke_parameter(laser: &LaserGeometry, trap: &TrapConfig, ion: &IonSpecies) -> f64 {
    laser.effective_wavenumber() * (HBAR / (2.0 * ion.mass_kg() * trap.secular_frequency)).sqrt()
}

/// Population transferred by an ideal π pulse on the n-th rf sideband:
/// sin²(π·J_n(β)/2). Even in β; equals 1 at β = 0 on the carrier and 0 at
/// β = 0 on any sideband.
pub fn pi_pulse_probability(order: u32, beta: ModulationDepth) -> Result<f64> {
    let j = bessel_j(order, beta.beta())?;
    let s = (std::f64::consts::FRAC_PI_2 * j).sin();
    Ok(s * s)
}

/// Truncation point of the thermal sum for mean phonon number `nbar`:
/// returns (last included Fock state, captured probability mass).
pub fn thermal_truncation(nbar: f64) -> Result<(u32, f64)> {
    if !(nbar >= 0.0) {
        return Err(Error::domain(format!("nbar must be >= 0, got {nbar}")));
    }
    if nbar == 0.0 {
        return Ok((0, 1.0));
    }
    let ratio = nbar / (nbar + 1.0);
    // Track the tail mass multiplicatively: after including Fock state m
    // the remainder is exactly ratio^(m+1), which never stalls against
    // the accumulation limit of summed f64 terms.
    let mut remaining = ratio;
    let mut m: u32 = 0;
    loop {
        if remaining <= THERMAL_MASS_DEFICIT {
            return Ok((m, 1.0 - remaining));
        }
        if m >= MAX_PHONON_TRUNCATION {
            return Err(Error::Numeric(format!(
                "thermal sum truncated at m = {m} with probability mass {} below target",
                1.0 - remaining
            )));
        }
        remaining *= ratio;
        m += 1;
    }
}

/// Transition probability of a pulse of length `pulse_time` averaged over a
/// thermal phonon distribution.
///
/// `base_rabi` is the carrier Rabi frequency including the J_n(β) factor.
/// Each Fock state m contributes sin²(Ω_m·t/2) with
/// Ω_m = Ω·exp(−η²/2)·L_m(η²), weighted by the thermal occupation
/// p_m = N̄ᵐ/(N̄+1)^(m+1). The sum runs until all but a negligible share
/// of the probability mass is captured (see [`thermal_truncation`]).
pub fn thermal_rabi_population(
    base_rabi: f64,
    pulse_time: f64,
    thermal: &ThermalState,
) -> Result<f64> {
    if !(pulse_time >= 0.0) {
        return Err(Error::domain(format!(
            "pulse_time must be >= 0, got {pulse_time}"
        )));
    }
    thermal.validate()?;
    let nbar = thermal.mean_phonons;
    let eta_sq = thermal.lamb_dicke * thermal.lamb_dicke;
    let carrier_scale = (-eta_sq / 2.0).exp();
    let half_angle = 0.5 * base_rabi * carrier_scale * pulse_time;

    if nbar == 0.0 {
        // Single term: p_0 = 1, L_0 = 1.
        let s = half_angle.sin();
        return Ok(s * s);
    }

    let ratio = nbar / (nbar + 1.0);
    let mut occupation = 1.0 / (nbar + 1.0); // p_0
    let mut remaining = ratio; // mass above the current Fock state
    let mut total = 0.0;
    // Laguerre recurrence carried alongside the sum.
    let mut lag_prev = 1.0; // L_0(η²)
    let mut lag_curr = 1.0 - eta_sq; // L_1(η²)
    let mut m: u32 = 0;
    loop {
        let lag = if m == 0 { lag_prev } else { lag_curr };
        let s = (half_angle * lag).sin();
        total += occupation * s * s;
        if remaining <= THERMAL_MASS_DEFICIT {
            return Ok(total.clamp(0.0, 1.0));
        }
        if m >= MAX_PHONON_TRUNCATION {
            return Err(Error::Numeric(format!(
                "thermal sum truncated at m = {m} with probability mass {} below target",
                1.0 - remaining
            )));
        }
        occupation *= ratio;
        remaining *= ratio;
        if m >= 1 {
            let k = m as f64;
            let next = ((2.0 * k + 1.0 - eta_sq) * lag_curr - k * lag_prev) / (k + 1.0);
            lag_prev = lag_curr;
            lag_curr = next;
        }
        m += 1;
    }
}

/// Parameters of the voltage-scan transition-probability curve.
///
/// The modulation depth seen at control voltage ΔV is the quadratic map
/// β(v) = beta_offset + beta_slope·v + beta_curvature·v² with
/// v = ΔV − center_voltage, and the population follows the thermal Rabi
/// profile of strength·J_n(β).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCurve {
    /// Bare Rabi frequency scale in rad/s.
    pub strength: f64,
    /// Intrinsic modulation depth at the null (β units).
    pub beta_offset: f64,
    /// Modulation depth per volt.
    pub beta_slope: f64,
    /// Modulation depth per volt² (trap anharmonicity).
    pub beta_curvature: f64,
    /// Compensation voltage in volts.
    pub center_voltage: f64,
    /// Mean thermal phonon number.
    pub mean_phonons: f64,
}

impl ScanCurve {
    /// Modulation depth at control voltage `delta_v`.
    pub fn beta_at(&self, delta_v: f64) -> f64 {
        let v = delta_v - self.center_voltage;
        self.beta_offset + self.beta_slope * v + self.beta_curvature * v * v
    }
}

/// Transition probability at control voltage `delta_v` for the n-th
/// sideband, thermally averaged.
pub fn scan_model(
    curve: &ScanCurve,
    delta_v: f64,
    order: u32,
    pulse_time: f64,
    lamb_dicke: f64,
) -> Result<f64> {
    let j = bessel_j(order, curve.beta_at(delta_v))?;
    let thermal = ThermalState {
        mean_phonons: curve.mean_phonons.max(0.0),
        lamb_dicke,
    };
    thermal_rabi_population(curve.strength * j, pulse_time, &thermal)
}

/// Expected photon count of the weak-repump sideband-resolved scheme:
/// (J_n(β)·η_coll·Γ·t_det)². Even in β and non-negative.
pub fn fluorescence_model(
    order: u32,
    beta: ModulationDepth,
    fluo: &FluorescenceConfig,
) -> Result<f64> {
    let j = bessel_j(order, beta.beta())?;
    let amplitude = j * fluo.collection_efficiency * fluo.cycling_rate * fluo.detection_time;
    Ok(amplitude * amplitude)
}

/// Instantaneous ion displacement along the micromotion direction:
/// s(t) = [u0 + u1·cos(ω_x·t + φ_x)]·[(q/2)·cos(ω_rf·t) + cos θ].
pub fn micromotion_trajectory(
    t: f64,
    u0: f64,
    u1: f64,
    secular_phase: f64,
    trap: &TrapConfig,
) -> f64 {
    let secular = u0 + u1 * (trap.secular_frequency * t + secular_phase).cos();
    let drive = trap.q_parameter / 2.0 * (trap.rf_frequency * t).cos() + trap.axis_angle.cos();
    secular * drive
}
