use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("linear chain is unstable: lowest transverse eigenvalue {margin:e} rad^2/s^2")]
    UnstableChain { margin: f64 },
    #[error("no stable axial frequency in the scan grid")]
    NoStablePoint,
    #[error("detuning resonant with mode {mode}: |omega_eff - omega_m| = {gap:e} rad/s")]
    ResonantDetuning { mode: usize, gap: f64 },
    #[error("power-law fit needs at least two distinct distances")]
    DegenerateFit,
    #[error("integrator step underflow at t = {t:e} s (step {step:e} s)")]
    StepUnderflow { t: f64, step: f64 },
    #[error("effective-frequency fit failed: residual is {fraction:.3} of trace power")]
    FitFailure { fraction: f64 },
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
