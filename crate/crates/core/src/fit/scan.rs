//! Voltage-scan fits: Bessel-profile models for Raman transition
//! probabilities and weak-repump fluorescence, automatic initialization,
//! and compensation-voltage extraction.

use crate::error::{Error, Result};
use crate::fit::lm::{levenberg_marquardt, LmOptions};
use crate::fit::{FitResult, ModelKind, ModelSpec, ParamName, ParamVector};
use crate::physics::{scan_model, thermal_rabi_population, ScanCurve, ThermalState};
use crate::sim::{Detection, ScanRecord};
use crate::special::bessel_j;

/// Variance floor for the binomial weights (on p̂(1−p̂)), so points with
/// 0 or `shots` successes keep a finite weight.
const BINOMIAL_VARIANCE_FLOOR_NUM: f64 = 0.25;

/// A quadratic β(v) map is only identifiable when the scan covers a decent
/// slice of the central Bessel lobe: float β-curvature when
/// |b1|·span exceeds 20% of the full 2×2.405 window.
const CURVATURE_SPAN_THRESHOLD: f64 = 0.2 * 2.0 * 2.404_825_557_695_773;

/// Fit scan records against the model selected by `spec.kind`.
pub fn fit_scan(
    records: &[ScanRecord],
    spec: &ModelSpec,
    hints: Option<&ParamVector>,
) -> Result<FitResult> {
    match spec.kind {
        ModelKind::RamanScan => fit_bessel_scan(records, spec, hints),
        ModelKind::FluorescenceScan => fit_fluorescence_scan(records, spec, hints),
        other => Err(Error::config(format!(
            "fit_scan expects a scan model, got {other:?}"
        ))),
    }
}

pub(crate) struct ScanData {
    pub(crate) voltages: Vec<f64>,
    pub(crate) values: Vec<f64>,
    pub(crate) sqrt_weights: Vec<f64>,
}

impl ScanData {
    fn span(&self) -> f64 {
        let min = self.voltages.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self
            .voltages
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        max - min
    }
}

pub(crate) fn raman_data(records: &[ScanRecord]) -> Result<ScanData> {
    let mut data = ScanData {
        voltages: Vec::with_capacity(records.len()),
        values: Vec::with_capacity(records.len()),
        sqrt_weights: Vec::with_capacity(records.len()),
    };
    for r in records {
        let successes = match r.detection {
            Detection::Raman { successes } => successes,
            Detection::Fluorescence { .. } => {
                return Err(Error::data(
                    "raman fit received fluorescence records",
                ))
            }
        };
        if r.shots == 0 {
            return Err(Error::data("record with zero shots"));
        }
        if successes > r.shots {
            return Err(Error::data(format!(
                "successes {successes} exceed shots {} at {} V",
                r.shots, r.voltage
            )));
        }
        let shots = r.shots as f64;
        let p = successes as f64 / shots;
        let variance = (p * (1.0 - p)).max(BINOMIAL_VARIANCE_FLOOR_NUM / shots) / shots;
        data.voltages.push(r.voltage);
        data.values.push(p);
        data.sqrt_weights.push(variance.sqrt().recip());
    }
    Ok(data)
}

pub(crate) fn fluorescence_data(records: &[ScanRecord]) -> Result<ScanData> {
    let mut data = ScanData {
        voltages: Vec::with_capacity(records.len()),
        values: Vec::with_capacity(records.len()),
        sqrt_weights: Vec::with_capacity(records.len()),
    };
    for r in records {
        let counts = match r.detection {
            Detection::Fluorescence { counts } => counts,
            Detection::Raman { .. } => {
                return Err(Error::data(
                    "fluorescence fit received raman records",
                ))
            }
        };
        let variance = (counts as f64).max(1.0);
        data.voltages.push(r.voltage);
        data.values.push(counts as f64);
        data.sqrt_weights.push(variance.sqrt().recip());
    }
    Ok(data)
}

/// Model value at one voltage for either scan kind.
pub(crate) fn model_value(params: &ParamVector, spec: &ModelSpec, voltage: f64) -> Result<f64> {
    match spec.kind {
        ModelKind::RamanScan => {
            let curve = ScanCurve {
                strength: params.strength,
                beta_offset: params.beta_offset,
                beta_slope: params.beta_slope,
                beta_curvature: params.beta_curvature,
                center_voltage: params.center_voltage,
                // Physical window for the fitted phonon number; the fit
                // treats excursions outside it like any flat direction.
                mean_phonons: params.mean_phonons.clamp(0.0, 2000.0),
            };
            scan_model(
                &curve,
                voltage,
                spec.order,
                params.pulse_time,
                spec.lamb_dicke,
            )
        }
        ModelKind::FluorescenceScan => {
            let u = voltage - params.center_voltage;
            let beta =
                params.beta_offset + params.beta_slope * u + params.beta_curvature * u * u;
            let j = bessel_j(spec.order, beta)?;
            let amplitude = params.strength * j;
            Ok(amplitude * amplitude + params.background)
        }
        _ => Err(Error::config("not a scan model")),
    }
}

/// Predicted curve samples (voltage, model value) for reporting.
pub(crate) fn model_curve(
    params: &ParamVector,
    spec: &ModelSpec,
    v_min: f64,
    v_max: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut curve = Vec::with_capacity(points);
    let step = (v_max - v_min) / (points - 1) as f64;
    for i in 0..points {
        let v = v_min + step * i as f64;
        // Clamp out-of-domain tails to the edge rather than failing.
        let value = model_value(params, spec, v).unwrap_or(f64::NAN);
        curve.push((v, value));
    }
    Ok(curve)
}

/// Three-point moving average with shrinking windows at the ends.
fn moving_average(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Leftmost index of the extremum of the smoothed data.
fn extremum_index(smoothed: &[f64], maximum: bool) -> usize {
    let mut best = 0;
    for (i, &v) in smoothed.iter().enumerate() {
        let better = if maximum {
            v > smoothed[best]
        } else {
            v < smoothed[best]
        };
        if better {
            best = i;
        }
    }
    best
}

/// Distance from the extremum to the half-contrast crossing of the data,
/// averaged over whichever sides cross.
fn data_half_width(voltages: &[f64], smoothed: &[f64], idx: usize, target: f64) -> Option<f64> {
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = idx;
        for i in range {
            let (a, b) = (smoothed[prev], smoothed[i]);
            if (a - target) * (b - target) <= 0.0 && a != b {
                let frac = (target - a) / (b - a);
                let v = voltages[prev] + frac * (voltages[i] - voltages[prev]);
                return Some((v - voltages[idx]).abs());
            }
            prev = i;
        }
        None
    };
    let right = crossing(&mut ((idx + 1)..voltages.len()));
    let left = crossing(&mut (0..idx).rev());
    match (left, right) {
        (Some(l), Some(r)) => Some(0.5 * (l + r)),
        (Some(l), None) => Some(l),
        (None, Some(r)) => Some(r),
        (None, None) => None,
    }
}

/// Half-contrast point of a model profile h(β) sampled on β ∈ [0, 3.2].
fn model_half_width<F>(profile: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    const STEP: f64 = 0.01;
    const POINTS: usize = 321;
    let mut values = Vec::with_capacity(POINTS);
    for i in 0..POINTS {
        values.push(profile(i as f64 * STEP)?);
    }
    let origin = values[0];
    let far = values[1..]
        .iter()
        .cloned()
        .fold(values[1], |acc, v| {
            if (v - origin).abs() > (acc - origin).abs() {
                v
            } else {
                acc
            }
        });
    let target = 0.5 * (origin + far);
    for i in 1..POINTS {
        let (a, b) = (values[i - 1], values[i]);
        if (a - target) * (b - target) <= 0.0 && a != b {
            let frac = (target - a) / (b - a);
            return Ok(((i - 1) as f64 + frac) * STEP);
        }
    }
    Err(Error::Initialization(
        "model profile has no half-contrast crossing".into(),
    ))
}

/// β of the first maximum of |J_n| (where a sideband scan peaks).
fn first_bessel_peak(order: u32) -> f64 {
    match order {
        0 => 0.0,
        1 => 1.8412,
        2 => 3.0542,
        _ => {
            let mut best_beta = 0.0;
            let mut best = 0.0;
            for i in 0..=600 {
                let beta = i as f64 * 0.01;
                let j = bessel_j(order, beta).map(f64::abs).unwrap_or(0.0);
                if j > best {
                    best = j;
                    best_beta = beta;
                }
            }
            best_beta
        }
    }
}

/// Infer the mean phonon number from the observed peak contrast by
/// bisecting the thermal contrast curve.
fn invert_thermal_contrast(
    observed_peak: f64,
    strength: f64,
    pulse_time: f64,
    lamb_dicke: f64,
    order: u32,
) -> Result<f64> {
    if lamb_dicke == 0.0 {
        return Ok(0.0);
    }
    let beta_peak = first_bessel_peak(order);
    let j_peak = bessel_j(order, beta_peak)?;
    let contrast_at = |n: f64| -> Result<f64> {
        let thermal = ThermalState {
            mean_phonons: n,
            lamb_dicke,
        };
        thermal_rabi_population(strength * j_peak, pulse_time, &thermal)
    };
    let c0 = contrast_at(0.0)?;
    let c_hi = contrast_at(200.0)?;
    if observed_peak >= c0 {
        return Ok(0.0);
    }
    if observed_peak <= c_hi {
        return Ok(200.0);
    }
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        // Contrast decreases with temperature.
        if contrast_at(mid)? > observed_peak {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Automatic starting point for the scan fits.
///
/// The compensation voltage starts at the extremum of a 3-point moving
/// average (leftmost on plateaus), the β-per-volt slope from matching the
/// data's half-contrast width to the model profile's, and the phonon
/// number from inverting the contrast deficit at the extremum.
pub fn initial_guess(records: &[ScanRecord], spec: &ModelSpec) -> Result<ParamVector> {
    if records.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "scan fit needs at least 8 points, got {}",
            records.len()
        )));
    }
    let data = match spec.kind {
        ModelKind::RamanScan => raman_data(records)?,
        ModelKind::FluorescenceScan => fluorescence_data(records)?,
        _ => return Err(Error::config("not a scan model")),
    };
    let smoothed = moving_average(&data.values);
    let lo = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Flat-data guard: the smoothed contrast must rise above the noise.
    let mut sigmas: Vec<f64> = data.sqrt_weights.iter().map(|w| w.recip()).collect();
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let noise = sigmas[sigmas.len() / 2];
    if hi - lo < 3.0 * noise {
        return Err(Error::Initialization(format!(
            "flat data: contrast {} below noise scale {noise}",
            hi - lo
        )));
    }

    // Carrier scans peak at the null; sideband scans dip there.
    let maximum = spec.order == 0;
    let idx = extremum_index(&smoothed, maximum);
    if idx == 0 || idx == records.len() - 1 {
        return Err(Error::Initialization(
            "no interior extremum: the scan does not bracket the compensation voltage".into(),
        ));
    }
    let center = data.voltages[idx];
    let extremum_value = smoothed[idx];
    let opposite = if maximum { lo } else { hi };

    let (strength, mean_phonons, background) = match spec.kind {
        ModelKind::RamanScan => {
            let strength = std::f64::consts::PI / spec.pulse_time;
            let peak = if maximum { extremum_value } else { hi };
            let n = invert_thermal_contrast(
                peak,
                strength,
                spec.pulse_time,
                spec.lamb_dicke,
                spec.order,
            )?;
            (strength, n, 0.0)
        }
        ModelKind::FluorescenceScan => {
            let background = lo.max(0.0);
            let amplitude = (hi - background).max(1.0).sqrt();
            (amplitude, 0.0, background)
        }
        _ => unreachable!(),
    };

    let guess = ParamVector {
        strength,
        beta_offset: 0.0,
        beta_slope: 0.0,
        beta_curvature: 0.0,
        center_voltage: center,
        mean_phonons,
        pulse_time: spec.pulse_time,
        background,
    };

    // Match half-contrast widths: data (volts) against model (β units).
    let target = 0.5 * (extremum_value + opposite);
    let width_v = data_half_width(&data.voltages, &smoothed, idx, target)
        .unwrap_or(data.span() / 4.0)
        .max(data.span() * 1e-3);
    let width_beta = match spec.kind {
        ModelKind::RamanScan => model_half_width(|beta| {
            let thermal = ThermalState {
                mean_phonons,
                lamb_dicke: spec.lamb_dicke,
            };
            let j = bessel_j(spec.order, beta)?;
            thermal_rabi_population(strength * j, spec.pulse_time, &thermal)
        })?,
        ModelKind::FluorescenceScan => model_half_width(|beta| {
            let j = bessel_j(spec.order, beta)?;
            Ok(strength * strength * j * j + background)
        })?,
        _ => unreachable!(),
    };
    let mut guess = guess;
    guess.beta_slope = width_beta / width_v;
    Ok(guess)
}

fn floated_set(spec: &ModelSpec, init: &ParamVector, span: f64) -> Vec<ParamName> {
    let mut floated = Vec::new();
    // Strength and pulse time only enter through their product; floating
    // the pulse time therefore pins the strength.
    if spec.float_pulse_time {
        floated.push(ParamName::PulseTime);
    } else {
        floated.push(ParamName::Strength);
    }
    if spec.float_beta_offset {
        floated.push(ParamName::BetaOffset);
    }
    floated.push(ParamName::BetaSlope);
    if init.beta_slope.abs() * span > CURVATURE_SPAN_THRESHOLD {
        floated.push(ParamName::BetaCurvature);
    }
    floated.push(ParamName::CenterVoltage);
    match spec.kind {
        ModelKind::RamanScan => {
            if spec.lamb_dicke > 0.0 {
                floated.push(ParamName::MeanPhonons);
            }
        }
        ModelKind::FluorescenceScan => {
            if spec.float_pulse_time {
                // No pulse in the low-intensity scheme; always fit the scale.
                floated.retain(|&p| p != ParamName::PulseTime);
                floated.insert(0, ParamName::Strength);
            }
            floated.push(ParamName::Background);
        }
        _ => {}
    }
    floated
}

fn step_scale(name: ParamName, init: &ParamVector, span: f64) -> f64 {
    match name {
        ParamName::Strength => init.strength.abs().max(1.0),
        ParamName::BetaOffset => 0.3,
        ParamName::BetaSlope => init.beta_slope.abs().max(1e-6),
        ParamName::BetaCurvature => (init.beta_slope.abs() / span).max(1e-6),
        ParamName::CenterVoltage => (span / 10.0).max(1e-9),
        ParamName::MeanPhonons => init.mean_phonons.max(1.0),
        ParamName::PulseTime => init.pulse_time.abs().max(1e-9),
        ParamName::Background => init.background.abs().max(1.0),
    }
}

fn lm_over_floated(
    data: &ScanData,
    spec: &ModelSpec,
    init: &ParamVector,
    floated: &[ParamName],
    span: f64,
) -> Result<crate::fit::lm::LmResult> {
    let scales: Vec<f64> = floated
        .iter()
        .map(|&name| step_scale(name, init, span))
        .collect();
    let spec_copy = *spec;
    let base = *init;
    let floated_for_closure = floated.to_vec();
    let voltages = data.voltages.clone();
    let values = data.values.clone();
    let sqrt_weights = data.sqrt_weights.clone();
    let residual_fn = move |free: &[f64]| -> Result<Vec<f64>> {
        let mut params = base;
        for (name, &value) in floated_for_closure.iter().zip(free.iter()) {
            params.set(*name, value);
        }
        let mut residuals = Vec::with_capacity(voltages.len());
        for i in 0..voltages.len() {
            let model = model_value(&params, &spec_copy, voltages[i])?;
            residuals.push((model - values[i]) * sqrt_weights[i]);
        }
        Ok(residuals)
    };
    let free_init: Vec<f64> = floated.iter().map(|&name| init.get(name)).collect();
    let options = LmOptions {
        step_scales: Some(scales),
        ..Default::default()
    };
    levenberg_marquardt(residual_fn, &free_init, &options)
}

fn run_scan_fit(
    records: &[ScanRecord],
    spec: &ModelSpec,
    hints: Option<&ParamVector>,
) -> Result<FitResult> {
    let data = match spec.kind {
        ModelKind::RamanScan => raman_data(records)?,
        ModelKind::FluorescenceScan => fluorescence_data(records)?,
        _ => return Err(Error::config("not a scan model")),
    };
    if records.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "scan fit needs at least 8 points, got {}",
            records.len()
        )));
    }
    let mut init = match hints {
        Some(h) => *h,
        None => initial_guess(records, spec)?,
    };
    let span = data.span();
    let mut floated = floated_set(spec, &init, span);

    // Weakly identified parameters can leave the normal matrix singular:
    // the thermal parameter when it collapses to its zero boundary (the
    // model is flat below N = 0) and the β-curvature on data that barely
    // constrains it. Pin such parameters one at a time and refit.
    let mut lm = lm_over_floated(&data, spec, &init, &floated, span);
    for pin in [ParamName::MeanPhonons, ParamName::BetaCurvature] {
        if !matches!(lm, Err(Error::DegenerateFit(_))) {
            break;
        }
        if floated.contains(&pin) {
            floated.retain(|&p| p != pin);
            init.set(pin, 0.0);
            lm = lm_over_floated(&data, spec, &init, &floated, span);
        }
    }
    let lm = lm?;

    let mut params = init;
    for (name, &value) in floated.iter().zip(lm.params.iter()) {
        params.set(*name, value);
    }
    params.mean_phonons = params.mean_phonons.max(0.0);
    let mut covariance = lm.covariance;

    // Canonical orientation: the observable is even under
    // (b0, b1, b2) → (−b0, −b1, −b2), so report b1 > 0.
    if params.beta_slope < 0.0 {
        params.beta_offset = -params.beta_offset;
        params.beta_slope = -params.beta_slope;
        params.beta_curvature = -params.beta_curvature;
        for (i, name) in floated.iter().enumerate() {
            let flipped = matches!(
                name,
                ParamName::BetaOffset | ParamName::BetaSlope | ParamName::BetaCurvature
            );
            if flipped {
                for j in 0..floated.len() {
                    covariance[i][j] = -covariance[i][j];
                    covariance[j][i] = -covariance[j][i];
                }
            }
        }
    }
    if lm.converged && params.beta_slope == 0.0 {
        return Err(Error::DegenerateFit(
            "fitted beta_slope is zero: scan carries no voltage sensitivity".into(),
        ));
    }

    Ok(FitResult {
        params,
        floated,
        covariance,
        ci95: lm.ci95,
        residual_norm: lm.residual_norm,
        reduced_chi_square: lm.reduced_chi_square,
        iterations: lm.iterations,
        converged: lm.converged,
        dof: lm.dof,
    })
}

/// Fit the thermally averaged Bessel profile to a Raman voltage scan and
/// extract the compensation voltage with its 95% confidence half-width.
pub fn fit_bessel_scan(
    records: &[ScanRecord],
    spec: &ModelSpec,
    hints: Option<&ParamVector>,
) -> Result<FitResult> {
    if spec.kind != ModelKind::RamanScan {
        return Err(Error::config("fit_bessel_scan expects kind = raman_scan"));
    }
    run_scan_fit(records, spec, hints)
}

/// Fit the squared-Bessel low-intensity fluorescence profile plus a flat
/// background to a fluorescence voltage scan.
pub fn fit_fluorescence_scan(
    records: &[ScanRecord],
    spec: &ModelSpec,
    hints: Option<&ParamVector>,
) -> Result<FitResult> {
    if spec.kind != ModelKind::FluorescenceScan {
        return Err(Error::config(
            "fit_fluorescence_scan expects kind = fluorescence_scan",
        ));
    }
    run_scan_fit(records, spec, hints)
}
