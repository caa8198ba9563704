//! Toolkit for measuring and minimizing excess micromotion of trapped ions
//! by direct dc-voltage scans.
//!
//! The crate covers the full measurement chain:
//!
//! * [`physics`] — closed-form models: Bessel-modulated transition
//!   probabilities of near-π pulses, thermally averaged Rabi profiles, the
//!   low-intensity fluorescence response, and the micromotion trajectory.
//! * [`presets`] — named trap configurations ("surface-trap", "blade-trap")
//!   with calibrated field gains and q-parameters.
//! * [`sim`] — a synthetic instrument backend producing shot-noise-limited
//!   voltage scans, rf-phase correlation histograms, and drifting-stray-field
//!   scan sequences, all seeded and reproducible.
//! * [`fit`] — Levenberg–Marquardt fitting of scan data, sinusoid fits of
//!   correlation histograms, and compensation-voltage extraction with 95%
//!   confidence intervals.
//! * [`monitor`] — repeated-scan orchestration, drift time series, and
//!   waterfall export.
//! * [`io`] — CSV/JSON layouts shared with external lab software.

pub mod constants;
pub mod error;
pub mod fit;
pub mod io;
pub mod monitor;
pub mod physics;
pub mod presets;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
