//! File layouts shared with external lab software.
//!
//! Tabular data travels as CSV with a mandatory header row; structured
//! reports and sidecars as JSON. Scan CSV columns are
//! `timestamp_s,voltage_V,shots,successes` (Raman) or
//! `timestamp_s,voltage_V,shots,counts` (fluorescence).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, ModelKind, ModelSpec, ParamName, ParamVector};
use crate::monitor::{DriftSeries, WaterfallFrame};
use crate::physics::TrapConfig;
use crate::sim::{CorrelationHistogram, Detection, ScanRecord};

/// Write scan records; the outcome column name follows the detection mode
/// of the records.
pub fn write_scan_csv<W: Write>(writer: W, records: &[ScanRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let fluorescence = matches!(
        records.first().map(|r| r.detection),
        Some(Detection::Fluorescence { .. })
    );
    let outcome_col = if fluorescence { "counts" } else { "successes" };
    csv.write_record(["timestamp_s", "voltage_V", "shots", outcome_col])?;
    for r in records {
        let outcome = match r.detection {
            Detection::Raman { successes } => {
                if fluorescence {
                    return Err(Error::data("mixed detection modes in one scan"));
                }
                successes
            }
            Detection::Fluorescence { counts } => {
                if !fluorescence {
                    return Err(Error::data("mixed detection modes in one scan"));
                }
                counts
            }
        };
        csv.write_record(&[
            r.timestamp.to_string(),
            r.voltage.to_string(),
            r.shots.to_string(),
            outcome.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Read scan records, detecting the mode from the header.
pub fn read_scan_csv<R: Read>(reader: R) -> Result<Vec<ScanRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let expected = ["timestamp_s", "voltage_V", "shots"];
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(Error::data(format!(
                "scan csv column {i} must be '{name}', got '{}'",
                headers.get(i).unwrap_or("<missing>")
            )));
        }
    }
    let fluorescence = match headers.get(3) {
        Some("successes") => false,
        Some("counts") => true,
        other => {
            return Err(Error::data(format!(
                "scan csv column 3 must be 'successes' or 'counts', got '{}'",
                other.unwrap_or("<missing>")
            )))
        }
    };
    let mut records = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row?;
        let parse_f64 = |i: usize| -> Result<f64> {
            row.get(i)
                .ok_or_else(|| Error::data(format!("row {line}: missing column {i}")))?
                .trim()
                .parse()
                .map_err(|e| Error::data(format!("row {line}: {e}")))
        };
        let parse_u64 = |i: usize| -> Result<u64> {
            row.get(i)
                .ok_or_else(|| Error::data(format!("row {line}: missing column {i}")))?
                .trim()
                .parse()
                .map_err(|e| Error::data(format!("row {line}: {e}")))
        };
        let shots = parse_u64(2)?;
        let outcome = parse_u64(3)?;
        let detection = if fluorescence {
            Detection::Fluorescence { counts: outcome }
        } else {
            if outcome > shots {
                return Err(Error::data(format!(
                    "row {line}: successes {outcome} exceed shots {shots}"
                )));
            }
            Detection::Raman { successes: outcome }
        };
        records.push(ScanRecord {
            timestamp: parse_f64(0)?,
            voltage: parse_f64(1)?,
            shots,
            detection,
        });
    }
    if records.is_empty() {
        return Err(Error::data("scan csv contains no data rows"));
    }
    Ok(records)
}

/// Correlation histogram columns: `phase_rad,counts`.
pub fn write_histogram_csv<W: Write>(writer: W, hist: &CorrelationHistogram) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["phase_rad", "counts"])?;
    for (phase, counts) in hist.phases.iter().zip(hist.counts.iter()) {
        csv.write_record(&[phase.to_string(), counts.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_histogram_csv<R: Read>(reader: R) -> Result<CorrelationHistogram> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.get(0) != Some("phase_rad") || headers.get(1) != Some("counts") {
        return Err(Error::data(
            "histogram csv must have columns phase_rad,counts",
        ));
    }
    let mut phases = Vec::new();
    let mut counts = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row?;
        phases.push(
            row.get(0)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::data(format!("row {line}: {e}")))?,
        );
        counts.push(
            row.get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::data(format!("row {line}: {e}")))?,
        );
    }
    if phases.is_empty() {
        return Err(Error::data("histogram csv contains no data rows"));
    }
    Ok(CorrelationHistogram { phases, counts })
}

/// A voltage-tagged histogram series: `voltage_V,phase_rad,counts`,
/// grouped by voltage in file order.
pub fn write_histogram_series_csv<W: Write>(
    writer: W,
    series: &[(f64, CorrelationHistogram)],
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["voltage_V", "phase_rad", "counts"])?;
    for (voltage, hist) in series {
        for (phase, counts) in hist.phases.iter().zip(hist.counts.iter()) {
            csv.write_record(&[
                voltage.to_string(),
                phase.to_string(),
                counts.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_histogram_series_csv<R: Read>(reader: R) -> Result<Vec<(f64, CorrelationHistogram)>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.get(0) != Some("voltage_V")
        || headers.get(1) != Some("phase_rad")
        || headers.get(2) != Some("counts")
    {
        return Err(Error::data(
            "series csv must have columns voltage_V,phase_rad,counts",
        ));
    }
    let mut series: Vec<(f64, CorrelationHistogram)> = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row?;
        let voltage: f64 = row
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::data(format!("row {line}: {e}")))?;
        let phase: f64 = row
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::data(format!("row {line}: {e}")))?;
        let counts: u64 = row
            .get(2)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::data(format!("row {line}: {e}")))?;
        match series.last_mut() {
            Some((v, hist)) if *v == voltage => {
                hist.phases.push(phase);
                hist.counts.push(counts);
            }
            _ => series.push((
                voltage,
                CorrelationHistogram {
                    phases: vec![phase],
                    counts: vec![counts],
                },
            )),
        }
    }
    if series.is_empty() {
        return Err(Error::data("series csv contains no data rows"));
    }
    Ok(series)
}

/// Drift series columns: `timestamp_s,c_V,ci95_V,converged`.
pub fn write_drift_series_csv<W: Write>(writer: W, series: &DriftSeries) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["timestamp_s", "c_V", "ci95_V", "converged"])?;
    for e in &series.entries {
        csv.write_record(&[
            e.timestamp.to_string(),
            e.compensation_voltage.to_string(),
            e.ci95.to_string(),
            e.converged.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Waterfall matrix: one row per scan, `timestamp_s` then one probability
/// column per grid point (`p0..pN`); the JSON sidecar carries the voltage
/// grid and timestamps.
pub fn write_waterfall_csv<W: Write>(writer: W, frame: &WaterfallFrame) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp_s".to_string()];
    header.extend((0..frame.voltages.len()).map(|i| format!("p{i}")));
    csv.write_record(&header)?;
    for (t, row) in frame.timestamps.iter().zip(frame.probabilities.iter()) {
        let mut record = vec![t.to_string()];
        record.extend(row.iter().map(|p| p.to_string()));
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WaterfallSidecar {
    pub voltages: Vec<f64>,
    pub timestamps_s: Vec<f64>,
}

pub fn write_waterfall_sidecar<W: Write>(writer: W, frame: &WaterfallFrame) -> Result<()> {
    let sidecar = WaterfallSidecar {
        voltages: frame.voltages.clone(),
        timestamps_s: frame.timestamps.clone(),
    };
    serde_json::to_writer_pretty(writer, &sidecar)?;
    Ok(())
}

/// Per-point entry of a fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub voltage: f64,
    pub observed: f64,
    pub model: f64,
    pub weighted_residual: f64,
}

/// Field-equivalent compensation values when a trap gain is known.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldEquivalent {
    pub field_gain: f64,
    pub field_v_per_m: f64,
    pub ci95_v_per_m: f64,
}

/// One confidence-interval entry, labeled by parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiEntry {
    pub name: ParamName,
    pub half_width: f64,
}

/// Full machine-readable fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelSpec,
    pub params: ParamVector,
    pub floated: Vec<ParamName>,
    pub covariance: Vec<Vec<f64>>,
    pub ci95: Vec<CiEntry>,
    pub compensation_voltage: f64,
    pub compensation_ci95: f64,
    pub field_equivalent: Option<FieldEquivalent>,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub reduced_chi_square: f64,
    pub dof: usize,
    pub residuals: Vec<ResidualPoint>,
    /// Plot-ready model samples (200 points over the scanned range).
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub voltage: f64,
    pub value: f64,
}

const CURVE_SAMPLES: usize = 200;

/// Assemble the report for a finished scan fit.
pub fn build_fit_report(
    records: &[ScanRecord],
    spec: &ModelSpec,
    fit: &FitResult,
    trap: Option<&TrapConfig>,
) -> Result<FitReport> {
    let data = match spec.kind {
        ModelKind::RamanScan => crate::fit::raman_data(records)?,
        ModelKind::FluorescenceScan => crate::fit::fluorescence_data(records)?,
        _ => return Err(Error::config("not a scan model")),
    };
    let mut residuals = Vec::with_capacity(records.len());
    for i in 0..data.voltages.len() {
        let model = crate::fit::model_value(&fit.params, spec, data.voltages[i])?;
        residuals.push(ResidualPoint {
            voltage: data.voltages[i],
            observed: data.values[i],
            model,
            weighted_residual: (model - data.values[i]) * data.sqrt_weights[i],
        });
    }
    let v_min = data.voltages.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = data
        .voltages
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let curve = crate::fit::model_curve(&fit.params, spec, v_min, v_max, CURVE_SAMPLES)?
        .into_iter()
        .map(|(voltage, value)| CurvePoint { voltage, value })
        .collect();

    let field_equivalent = match trap {
        Some(trap) => Some(FieldEquivalent {
            field_gain: trap.field_gain,
            field_v_per_m: crate::fit::voltage_to_field(fit.compensation_voltage(), trap)?,
            ci95_v_per_m: crate::fit::voltage_to_field(fit.compensation_ci95(), trap)?,
        }),
        None => None,
    };

    Ok(FitReport {
        model: *spec,
        params: fit.params,
        floated: fit.floated.clone(),
        covariance: fit.covariance.clone(),
        ci95: fit
            .floated
            .iter()
            .zip(fit.ci95.iter())
            .map(|(&name, &half_width)| CiEntry { name, half_width })
            .collect(),
        compensation_voltage: fit.compensation_voltage(),
        compensation_ci95: fit.compensation_ci95(),
        field_equivalent,
        converged: fit.converged,
        iterations: fit.iterations,
        residual_norm: fit.residual_norm,
        reduced_chi_square: fit.reduced_chi_square,
        dof: fit.dof,
        residuals,
        curve,
    })
}

/// Write any serializable document as pretty JSON to a path.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

/// Write scan records to a path.
pub fn save_scan_csv(path: &Path, records: &[ScanRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_scan_csv(std::io::BufWriter::new(file), records)
}

/// Read scan records from a path.
pub fn load_scan_csv(path: &Path) -> Result<Vec<ScanRecord>> {
    let file = std::fs::File::open(path)?;
    read_scan_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raman_records() -> Vec<ScanRecord> {
        (0..10)
            .map(|i| ScanRecord {
                timestamp: i as f64 * 1.001,
                voltage: 0.4 + 0.01 * i as f64,
                shots: 100,
                detection: Detection::Raman {
                    successes: 40 + 3 * i,
                },
            })
            .collect()
    }

    #[test]
    fn scan_csv_roundtrip() {
        let records = raman_records();
        let mut buffer = Vec::new();
        write_scan_csv(&mut buffer, &records).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert!(text.starts_with("timestamp_s,voltage_V,shots,successes"));
        let back = read_scan_csv(buffer.as_slice()).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn fluorescence_csv_uses_counts_column() {
        let records: Vec<ScanRecord> = (0..4)
            .map(|i| ScanRecord {
                timestamp: i as f64,
                voltage: i as f64 * 0.1,
                shots: 1,
                detection: Detection::Fluorescence { counts: 100 + i },
            })
            .collect();
        let mut buffer = Vec::new();
        write_scan_csv(&mut buffer, &records).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert!(text.starts_with("timestamp_s,voltage_V,shots,counts"));
        let back = read_scan_csv(buffer.as_slice()).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn malformed_scan_csv_is_rejected() {
        let bad_header = "time,voltage_V,shots,successes\n0,0.1,100,50\n";
        assert!(read_scan_csv(bad_header.as_bytes()).is_err());
        let bad_value = "timestamp_s,voltage_V,shots,successes\n0,abc,100,50\n";
        assert!(read_scan_csv(bad_value.as_bytes()).is_err());
        let too_many = "timestamp_s,voltage_V,shots,successes\n0,0.1,100,150\n";
        assert!(read_scan_csv(too_many.as_bytes()).is_err());
        let empty = "timestamp_s,voltage_V,shots,successes\n";
        assert!(read_scan_csv(empty.as_bytes()).is_err());
    }

    #[test]
    fn histogram_roundtrip() {
        let hist = CorrelationHistogram {
            phases: vec![0.1, 0.5, 0.9],
            counts: vec![10, 20, 30],
        };
        let mut buffer = Vec::new();
        write_histogram_csv(&mut buffer, &hist).unwrap();
        let back = read_histogram_csv(buffer.as_slice()).unwrap();
        assert_eq!(hist, back);
    }

    #[test]
    fn histogram_series_roundtrip_groups_by_voltage() {
        let series = vec![
            (
                0.1,
                CorrelationHistogram {
                    phases: vec![0.2, 0.4],
                    counts: vec![5, 6],
                },
            ),
            (
                0.2,
                CorrelationHistogram {
                    phases: vec![0.2, 0.4],
                    counts: vec![7, 8],
                },
            ),
        ];
        let mut buffer = Vec::new();
        write_histogram_series_csv(&mut buffer, &series).unwrap();
        let back = read_histogram_series_csv(buffer.as_slice()).unwrap();
        assert_eq!(series, back);
    }
}
