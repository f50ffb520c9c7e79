//! Long-range XY interactions in linear trapped-ion chains.
//!
//! The crate goes from trap parameters to transverse phonon modes
//! ([`chain`]), spin-spin couplings and power-law fits ([`coupling`]),
//! effective XY dynamics ([`xy`]), full spin-phonon simulation
//! ([`spin_phonon`]), analytic leakage and coupling renormalisation
//! ([`leakage`]), marked-site transfer and spatial search ([`protocols`])
//! and static dephasing ensembles ([`noise`]).
//!
//! All frequencies are angular (rad/s) and all times are in seconds unless a
//! function states that it works in dimensionless marker units.

pub mod chain;
pub mod constants;
pub mod coupling;
mod error;
pub mod leakage;
pub mod noise;
pub mod optimize;
pub mod protocols;
pub mod scenario;
pub mod workflows;
pub mod spin_phonon;
pub mod xy;

pub use error::{Error, Result};
pub use num_complex::Complex64;
