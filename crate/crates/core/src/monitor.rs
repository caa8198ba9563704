//! Long-term monitoring of the compensation voltage.
//!
//! Repeated scans (simulated or replayed from disk) are fitted one by one;
//! the fitted compensation voltages form a [`DriftSeries`] and the raw
//! per-point probabilities a [`WaterfallFrame`]. The waterfall always
//! carries measured fractions, never model values, so a drifting fit
//! cannot hide in the export.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_bessel_scan, initial_guess, fit_scan, FitResult, ModelSpec, ParamVector};
use crate::fit::ModelKind;
use crate::sim::{simulate_scan_at, ScanPlan, ScanRecord, ScanSetup};

/// One fitted scan of the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    /// Scan start time in seconds from the start of monitoring.
    pub timestamp: f64,
    pub compensation_voltage: f64,
    pub ci95: f64,
    pub converged: bool,
}

/// Time-ordered fitted compensation voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub entries: Vec<DriftEntry>,
    /// Scans per minute, from the observed timestamps.
    pub scan_rate: f64,
}

impl DriftSeries {
    /// Median 95% half-width of the converged entries.
    pub fn median_ci95(&self) -> Option<f64> {
        let mut cis: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.converged)
            .map(|e| e.ci95)
            .collect();
        if cis.is_empty() {
            return None;
        }
        cis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(cis[cis.len() / 2])
    }

    /// Default alerting threshold: 3× the median confidence half-width.
    pub fn alert_threshold(&self) -> Option<f64> {
        self.median_ci95().map(|ci| 3.0 * ci)
    }

    /// True when the latest converged value has moved away from
    /// `reference` by more than `threshold` volts.
    pub fn exceeds_threshold(&self, reference: f64, threshold: f64) -> bool {
        self.entries
            .iter()
            .rev()
            .find(|e| e.converged)
            .map(|e| (e.compensation_voltage - reference).abs() > threshold)
            .unwrap_or(false)
    }
}

/// Raw scan profiles over time: probabilities[scan][voltage index].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallFrame {
    pub voltages: Vec<f64>,
    pub probabilities: Vec<Vec<f64>>,
    pub timestamps: Vec<f64>,
}

/// Provider of successive scans for the monitor.
pub trait ScanSource {
    /// Next scan as (start time, records), or `None` when exhausted.
    fn next_scan(&mut self) -> Option<Result<(f64, Vec<ScanRecord>)>>;
}

/// Simulator-backed source producing scans `cadence` seconds apart.
pub struct SimulatedSource {
    plan: ScanPlan,
    setup: ScanSetup,
    cadence: f64,
    seed: u64,
    next_index: u64,
}

impl SimulatedSource {
    pub fn new(plan: ScanPlan, setup: ScanSetup, cadence: f64, seed: u64) -> Result<Self> {
        if !(cadence > 0.0) {
            return Err(Error::config("cadence must be positive"));
        }
        plan.validate()?;
        setup.validate(&plan)?;
        Ok(SimulatedSource {
            plan,
            setup,
            cadence,
            seed,
            next_index: 0,
        })
    }
}

impl ScanSource for SimulatedSource {
    fn next_scan(&mut self) -> Option<Result<(f64, Vec<ScanRecord>)>> {
        let start = self.next_index as f64 * self.cadence;
        let result = simulate_scan_at(&self.plan, &self.setup, self.seed, self.next_index, start);
        self.next_index += 1;
        Some(result.map(|records| (start, records)))
    }
}

/// Replays scans recorded earlier (or parsed from files).
pub struct RecordedSource {
    scans: std::collections::VecDeque<(f64, Vec<ScanRecord>)>,
}

impl RecordedSource {
    pub fn new(scans: Vec<(f64, Vec<ScanRecord>)>) -> Self {
        RecordedSource {
            scans: scans.into(),
        }
    }
}

impl ScanSource for RecordedSource {
    fn next_scan(&mut self) -> Option<Result<(f64, Vec<ScanRecord>)>> {
        self.scans.pop_front().map(Ok)
    }
}

/// Everything `run_monitor` produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorOutput {
    pub series: DriftSeries,
    pub waterfall: WaterfallFrame,
    /// Scans requested versus scans actually delivered by the source;
    /// unequal values mean the source ran dry early.
    pub requested: usize,
    pub completed: usize,
    /// Fit of the final scan, for warm-starting a follow-up run.
    #[serde(skip)]
    pub last_fit: Option<FitResult>,
}

impl MonitorOutput {
    pub fn truncated(&self) -> bool {
        self.completed < self.requested
    }
}

/// Fit `repeat` scans from `source`, appending every fit to the series.
///
/// Fits warm-start from the previous converged result and fall back to
/// automatic initialization. Non-converged fits are recorded with their
/// flag — never dropped — and do not poison later warm starts.
pub fn run_monitor(
    source: &mut dyn ScanSource,
    spec: &ModelSpec,
    repeat: usize,
) -> Result<MonitorOutput> {
    if repeat < 1 {
        return Err(Error::config("repeat must be >= 1"));
    }
    let mut entries = Vec::with_capacity(repeat);
    let mut probabilities = Vec::with_capacity(repeat);
    let mut timestamps = Vec::with_capacity(repeat);
    let mut grid: Option<Vec<f64>> = None;
    let mut warm: Option<ParamVector> = None;
    let mut last_fit = None;
    let mut completed = 0;

    for _ in 0..repeat {
        let (start, records) = match source.next_scan() {
            Some(scan) => scan?,
            None => break,
        };
        completed += 1;

        let voltages: Vec<f64> = records.iter().map(|r| r.voltage).collect();
        match &grid {
            None => grid = Some(voltages),
            Some(g) => {
                if *g != voltages {
                    return Err(Error::data(
                        "scan voltage grid changed mid-series; waterfall requires a fixed grid",
                    ));
                }
            }
        }
        let row: Vec<f64> = records
            .iter()
            .map(|r| match r.detection {
                crate::sim::Detection::Raman { successes } => {
                    successes as f64 / r.shots as f64
                }
                crate::sim::Detection::Fluorescence { counts } => counts as f64,
            })
            .collect();

        let fit = match fit_with_warm_start(&records, spec, warm.as_ref()) {
            Ok(fit) => fit,
            Err(err) => {
                // Record the failure; the series stays append-only.
                entries.push(DriftEntry {
                    timestamp: start,
                    compensation_voltage: f64::NAN,
                    ci95: f64::NAN,
                    converged: false,
                });
                probabilities.push(row);
                timestamps.push(start);
                // A hard fit error (not mere non-convergence) clears the
                // warm start so the next scan re-initializes from data.
                warm = None;
                let _ = err;
                continue;
            }
        };
        entries.push(DriftEntry {
            timestamp: start,
            compensation_voltage: fit.compensation_voltage(),
            ci95: fit.compensation_ci95(),
            converged: fit.converged,
        });
        probabilities.push(row);
        timestamps.push(start);
        if fit.converged {
            warm = Some(fit.params);
        }
        last_fit = Some(fit);
    }

    let scan_rate = if timestamps.len() >= 2 {
        let span = timestamps[timestamps.len() - 1] - timestamps[0];
        if span > 0.0 {
            (timestamps.len() - 1) as f64 / span * 60.0
        } else {
            0.0
        }
    } else {
        0.0
    };

    Ok(MonitorOutput {
        series: DriftSeries {
            entries,
            scan_rate,
        },
        waterfall: WaterfallFrame {
            voltages: grid.unwrap_or_default(),
            probabilities,
            timestamps,
        },
        requested: repeat,
        completed,
        last_fit,
    })
}

fn fit_with_warm_start(
    records: &[ScanRecord],
    spec: &ModelSpec,
    warm: Option<&ParamVector>,
) -> Result<FitResult> {
    if let Some(prev) = warm {
        if let Ok(fit) = fit_scan(records, spec, Some(prev)) {
            if fit.converged {
                return Ok(fit);
            }
        }
        // Warm start failed; re-derive the initialization from the data.
        let fresh = initial_guess(records, spec)?;
        return fit_scan(records, spec, Some(&fresh));
    }
    match spec.kind {
        ModelKind::RamanScan => fit_bessel_scan(records, spec, None),
        _ => fit_scan(records, spec, None),
    }
}

/// Linear drift rate of the compensation voltage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriftRate {
    /// Slope in V/s.
    pub slope: f64,
    /// 95% half-width of the slope in V/s.
    pub ci95: f64,
}

/// Weighted linear regression of compensation voltage against time over
/// the converged entries.
pub fn drift_rate(series: &DriftSeries) -> Result<DriftRate> {
    let entries: Vec<&DriftEntry> = series.entries.iter().filter(|e| e.converged).collect();
    let n = entries.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "drift rate needs at least 3 converged entries, got {n}"
        )));
    }
    let smallest_ci = entries
        .iter()
        .map(|e| e.ci95)
        .filter(|&c| c > 0.0)
        .fold(f64::INFINITY, f64::min);
    let weight = |e: &DriftEntry| -> f64 {
        if smallest_ci.is_infinite() {
            1.0
        } else {
            let c = e.ci95.max(smallest_ci / 10.0);
            1.0 / (c * c)
        }
    };

    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for e in &entries {
        let w = weight(e);
        sw += w;
        swx += w * e.timestamp;
        swy += w * e.compensation_voltage;
        swxx += w * e.timestamp * e.timestamp;
        swxy += w * e.timestamp * e.compensation_voltage;
    }
    let det = sw * swxx - swx * swx;
    if det <= 0.0 {
        return Err(Error::DegenerateFit("degenerate time axis".into()));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swy - slope * swx) / sw;

    let mut chi2 = 0.0;
    for e in &entries {
        let r = intercept + slope * e.timestamp - e.compensation_voltage;
        chi2 += weight(e) * r * r;
    }
    let dof = n - 2;
    let sigma2 = chi2 / dof as f64;
    let var_slope = sw / det * sigma2;
    let ci95 = crate::fit::t_quantile_975(dof) * var_slope.max(0.0).sqrt();

    Ok(DriftRate { slope, ci95 })
}
