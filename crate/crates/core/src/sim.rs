//! Synthetic instrument backend.
//!
//! Generates shot-noise-limited voltage scans (binomial state detection or
//! Poisson photon counting), rf-phase correlation histograms, and repeated
//! scans under a drifting stray field. Every draw comes from a stream
//! derived from (seed, scan index, point index), so outputs are bit-stable
//! for a fixed seed and points could be simulated in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{
    beta_from_voltage, fluorescence_model, thermal_rabi_population, FluorescenceConfig,
    IonSpecies, LaserGeometry, ModulationDepth, ThermalState, TrapConfig,
};
use crate::special::bessel_j;

/// Detection scheme of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Near-π Raman pulses followed by state detection; one success count
    /// out of `shots` per point.
    Raman,
    /// Weak-repump fluorescence; one photon count per point.
    Fluorescence,
}

/// Voltage grid and per-point acquisition settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    /// Control voltages, strictly monotone.
    pub voltages: Vec<f64>,
    pub shots_per_point: u64,
    /// rf sideband order n probed by the scan.
    pub order: u32,
    /// Pulse time in seconds (Raman mode).
    pub pulse_time: f64,
    pub mode: ScanMode,
}

impl ScanPlan {
    /// Evenly spaced grid over [start, stop].
    pub fn linear(
        start: f64,
        stop: f64,
        points: usize,
        shots_per_point: u64,
        order: u32,
        pulse_time: f64,
        mode: ScanMode,
    ) -> Result<Self> {
        if points < 2 {
            return Err(Error::config("scan needs at least 2 points"));
        }
        let step = (stop - start) / (points - 1) as f64;
        let voltages = (0..points).map(|i| start + step * i as f64).collect();
        let plan = ScanPlan {
            voltages,
            shots_per_point,
            order,
            pulse_time,
            mode,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.voltages.is_empty() {
            return Err(Error::config("voltage grid is empty"));
        }
        let increasing = self.voltages.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.voltages.windows(2).all(|w| w[1] < w[0]);
        if self.voltages.len() > 1 && !increasing && !decreasing {
            return Err(Error::config("voltage grid must be strictly monotone"));
        }
        if self.shots_per_point < 1 {
            return Err(Error::config("shots_per_point must be >= 1"));
        }
        if self.mode == ScanMode::Raman && !(self.pulse_time > 0.0) {
            return Err(Error::config("pulse_time must be positive in raman mode"));
        }
        Ok(())
    }
}

/// Stray field versus time:
/// E(t) = constant + linear_drift·t + charging_amplitude·(1 − e^(−t/τ)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrayFieldModel {
    /// Static component in V/m.
    pub constant: f64,
    /// Linear drift in (V/m)/s.
    pub linear_drift: f64,
    /// Saturation amplitude of dielectric charging in V/m.
    pub charging_amplitude: f64,
    /// Charging time constant in seconds.
    pub charging_timescale: f64,
}

impl StrayFieldModel {
    pub fn constant(field: f64) -> Self {
        StrayFieldModel {
            constant: field,
            linear_drift: 0.0,
            charging_amplitude: 0.0,
            charging_timescale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.charging_amplitude != 0.0 && !(self.charging_timescale > 0.0) {
            return Err(Error::config(
                "charging_timescale must be positive when charging_amplitude is set",
            ));
        }
        Ok(())
    }

    /// Field at time `t` seconds from the start of the experiment.
    pub fn field_at(&self, t: f64) -> f64 {
        let mut field = self.constant + self.linear_drift * t;
        if self.charging_amplitude != 0.0 {
            field += self.charging_amplitude * (1.0 - (-t / self.charging_timescale).exp());
        }
        field
    }
}

/// Outcome of one scan point. The variant carries the detection scheme, so
/// Raman records can never hold photon counts and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    Raman { successes: u64 },
    Fluorescence { counts: u64 },
}

/// One voltage point of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    /// Seconds from the start of this scan.
    pub timestamp: f64,
    /// Applied control voltage.
    pub voltage: f64,
    pub shots: u64,
    pub detection: Detection,
}

impl ScanRecord {
    /// Empirical transition probability (Raman records only).
    pub fn success_fraction(&self) -> Option<f64> {
        match self.detection {
            Detection::Raman { successes } => Some(successes as f64 / self.shots as f64),
            Detection::Fluorescence { .. } => None,
        }
    }

    pub fn counts(&self) -> Option<u64> {
        match self.detection {
            Detection::Fluorescence { counts } => Some(counts),
            Detection::Raman { .. } => None,
        }
    }
}

/// Everything the simulator needs besides the voltage grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSetup {
    pub trap: TrapConfig,
    pub ion: IonSpecies,
    pub laser: LaserGeometry,
    pub thermal: ThermalState,
    pub stray: StrayFieldModel,
    pub fluorescence: Option<FluorescenceConfig>,
    /// Bare Rabi frequency in rad/s. Defaults to π/pulse_time (an exact
    /// π pulse at zero modulation).
    pub rabi_frequency: Option<f64>,
    /// Dead time per shot (cooling, state preparation, readout) in
    /// seconds. The default makes a 20-point, 100-shot scan take ≈ 20 s.
    pub overhead_per_shot: f64,
    /// Symmetric state-detection error applied after the binomial draw.
    pub spam_flip_probability: f64,
    /// Detector dark rate in counts/s (fluorescence mode).
    pub dark_rate: f64,
}

impl ScanSetup {
    pub fn new(
        trap: TrapConfig,
        ion: IonSpecies,
        laser: LaserGeometry,
        thermal: ThermalState,
        stray: StrayFieldModel,
    ) -> Self {
        ScanSetup {
            trap,
            ion,
            laser,
            thermal,
            stray,
            fluorescence: None,
            rabi_frequency: None,
            overhead_per_shot: 1e-2,
            spam_flip_probability: 0.0,
            dark_rate: 0.0,
        }
    }

    pub fn from_apparatus(app: &crate::presets::Apparatus, stray: StrayFieldModel) -> Self {
        ScanSetup::new(
            app.trap,
            app.ion.clone(),
            app.laser,
            app.thermal,
            stray,
        )
    }

    pub fn validate(&self, plan: &ScanPlan) -> Result<()> {
        self.trap.validate()?;
        self.ion.validate()?;
        self.laser.validate()?;
        self.thermal.validate()?;
        self.stray.validate()?;
        if let Some(fluo) = &self.fluorescence {
            fluo.validate()?;
        }
        if plan.mode == ScanMode::Fluorescence && self.fluorescence.is_none() {
            return Err(Error::config(
                "fluorescence mode requires a fluorescence config",
            ));
        }
        if let Some(omega) = self.rabi_frequency {
            if !(omega > 0.0) {
                return Err(Error::config("rabi_frequency must be positive"));
            }
        }
        if !(self.overhead_per_shot >= 0.0) {
            return Err(Error::config("overhead_per_shot must be >= 0"));
        }
        if !(0.0..=0.5).contains(&self.spam_flip_probability) {
            return Err(Error::config(
                "spam_flip_probability must lie in [0, 0.5]",
            ));
        }
        if !(self.dark_rate >= 0.0) {
            return Err(Error::config("dark_rate must be >= 0"));
        }
        Ok(())
    }

    /// Wall-clock length of one scan point in seconds.
    pub fn point_duration(&self, plan: &ScanPlan) -> f64 {
        let per_shot = match plan.mode {
            ScanMode::Raman => plan.pulse_time,
            ScanMode::Fluorescence => self
                .fluorescence
                .map(|f| f.detection_time)
                .unwrap_or_default(),
        };
        plan.shots_per_point as f64 * (per_shot + self.overhead_per_shot)
    }

    /// Wall-clock length of one full scan in seconds.
    pub fn scan_duration(&self, plan: &ScanPlan) -> f64 {
        self.point_duration(plan) * plan.voltages.len() as f64
    }
}

const STREAM_SCAN: u64 = 0;
const STREAM_CORRELATION: u64 = 1;

fn point_rng(seed: u64, scan_index: u64, point_index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&scan_index.to_le_bytes());
    key[16..24].copy_from_slice(&point_index.to_le_bytes());
    key[24..32].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn draw_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng) as u64
}

fn draw_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let dist = Binomial::new(n, p).expect("probability in range");
    dist.sample(rng)
}

/// Simulate a single scan starting at `t = 0`.
pub fn simulate_scan(plan: &ScanPlan, setup: &ScanSetup, seed: u64) -> Result<Vec<ScanRecord>> {
    simulate_scan_at(plan, setup, seed, 0, 0.0)
}

/// Simulate scan number `scan_index` starting at absolute time
/// `start_time`; the stray field advances with absolute time while record
/// timestamps stay relative to the scan start.
pub fn simulate_scan_at(
    plan: &ScanPlan,
    setup: &ScanSetup,
    seed: u64,
    scan_index: u64,
    start_time: f64,
) -> Result<Vec<ScanRecord>> {
    plan.validate()?;
    setup.validate(plan)?;
    let point_duration = setup.point_duration(plan);
    let mut records = Vec::with_capacity(plan.voltages.len());
    for (i, &voltage) in plan.voltages.iter().enumerate() {
        let timestamp = i as f64 * point_duration;
        let stray_field = setup.stray.field_at(start_time + timestamp);
        let beta = beta_from_voltage(voltage, stray_field, &setup.trap, &setup.ion, &setup.laser);
        let mut rng = point_rng(seed, scan_index, i as u64, STREAM_SCAN);
        let detection = match plan.mode {
            ScanMode::Raman => {
                let omega0 = setup
                    .rabi_frequency
                    .unwrap_or(std::f64::consts::PI / plan.pulse_time);
                let j = bessel_j(plan.order, beta.beta())?;
                let p = thermal_rabi_population(omega0 * j, plan.pulse_time, &setup.thermal)?;
                let mut successes = draw_binomial(&mut rng, plan.shots_per_point, p);
                if setup.spam_flip_probability > 0.0 {
                    let lost =
                        draw_binomial(&mut rng, successes, setup.spam_flip_probability);
                    let gained = draw_binomial(
                        &mut rng,
                        plan.shots_per_point - successes,
                        setup.spam_flip_probability,
                    );
                    successes = successes - lost + gained;
                }
                Detection::Raman { successes }
            }
            ScanMode::Fluorescence => {
                let fluo = setup.fluorescence.as_ref().expect("validated above");
                let mut mean = fluorescence_model(plan.order, beta, fluo)?;
                mean += setup.dark_rate * fluo.detection_time;
                let total = plan.shots_per_point as f64 * mean;
                Detection::Fluorescence {
                    counts: draw_poisson(&mut rng, total),
                }
            }
        };
        records.push(ScanRecord {
            timestamp,
            voltage,
            shots: plan.shots_per_point,
            detection,
        });
    }
    Ok(records)
}

/// Run `repeat` scans spaced `cadence` seconds apart under the (possibly
/// drifting) stray field of `setup`. Returns (scan start time, records).
pub fn simulate_drift_series(
    plan: &ScanPlan,
    setup: &ScanSetup,
    repeat: usize,
    cadence: f64,
    seed: u64,
) -> Result<Vec<(f64, Vec<ScanRecord>)>> {
    if repeat < 2 {
        return Err(Error::config("drift series needs repeat >= 2"));
    }
    if !(cadence > 0.0) {
        return Err(Error::config("cadence must be positive"));
    }
    let mut series = Vec::with_capacity(repeat);
    for k in 0..repeat {
        let start = k as f64 * cadence;
        let records = simulate_scan_at(plan, setup, seed, k as u64, start)?;
        series.push((start, records));
    }
    Ok(series)
}

/// Configuration of the rf-phase photon-correlation measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Number of rf-phase bins (≥ 8).
    pub phase_bins: usize,
    /// Mean fluorescence rate in counts/s.
    pub mean_rate: f64,
    /// Accumulation time in seconds.
    pub duration: f64,
    /// Modulation visibility per unit of modulation depth.
    pub doppler_gain: f64,
}

impl CorrelationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phase_bins < 8 {
            return Err(Error::config("phase_bins must be >= 8"));
        }
        if !(self.mean_rate > 0.0) {
            return Err(Error::config("mean_rate must be positive"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if !(self.doppler_gain > 0.0) {
            return Err(Error::config("doppler_gain must be positive"));
        }
        Ok(())
    }

    /// Modulation visibility produced by modulation depth β, clamped to
    /// the physical range. The sinusoid phase flips by π across the null.
    pub fn visibility_of(&self, beta: ModulationDepth) -> (f64, f64) {
        let visibility = (self.doppler_gain * beta.beta().abs()).clamp(0.0, 1.0);
        let phase = if beta.beta() >= 0.0 {
            0.0
        } else {
            std::f64::consts::PI
        };
        (visibility, phase)
    }
}

/// Photon counts binned by rf phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    /// Bin-center phases in radians.
    pub phases: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Simulate one phase-binned correlation histogram at modulation depth β.
pub fn simulate_correlation_histogram(
    config: &CorrelationConfig,
    beta: ModulationDepth,
    seed: u64,
) -> Result<CorrelationHistogram> {
    config.validate()?;
    let bins = config.phase_bins;
    let (visibility, phase) = config.visibility_of(beta);
    let mean_per_bin = config.mean_rate * config.duration / bins as f64;
    let mut phases = Vec::with_capacity(bins);
    let mut counts = Vec::with_capacity(bins);
    for b in 0..bins {
        let center = std::f64::consts::TAU * (b as f64 + 0.5) / bins as f64;
        let mean = mean_per_bin * (1.0 + visibility * (center + phase).sin());
        let mut rng = point_rng(seed, 0, b as u64, STREAM_CORRELATION);
        phases.push(center);
        counts.push(draw_poisson(&mut rng, mean));
    }
    Ok(CorrelationHistogram { phases, counts })
}
