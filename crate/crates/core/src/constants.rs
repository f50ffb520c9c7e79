//! Physical constants (CODATA 2018 exact or recommended values).

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;

/// Coulomb constant e^2 / (4 pi eps0), J m.
pub fn coulomb_constant() -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY)
}

/// Convert a frequency in MHz (cycles) to rad/s.
pub fn mhz_to_angular(nu_mhz: f64) -> f64 {
    2.0 * std::f64::consts::PI * nu_mhz * 1e6
}

/// Raman wave-vector difference for counter-propagating 355 nm beams, 1/m.
pub const DELTA_K_355NM: f64 = 4.0 * std::f64::consts::PI / 355e-9;
