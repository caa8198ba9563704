//! Physical constants (CODATA 2018).

/// Elementary charge in coulombs (exact by SI definition).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Atomic mass unit in kilograms.
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
