//! Marked-site state transfer and spatial search in the single-excitation
//! sector, with the three-level reduced model and protocol optimisation.
//!
//! A protocol Hamiltonian is `gamma * hop + marker * (|w><w| + |f><f|) + diag(fields)`.
//! With `marker = 1` and dimensionless hopping this is the textbook form
//! `gamma H + |w><w| + |f><f|`; with hopping in rad/s the marker carries the
//! physical field scale and times are in seconds.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::coupling::CouplingModel;
use crate::optimize::{maximize, SearchOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub gamma: f64,
    pub sender: usize,
    pub receiver: usize,
    /// Switch-off time, in the time unit of the hopping matrix.
    pub duration: f64,
    pub marker_amplitude: f64,
}

impl ProtocolConfig {
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if self.sender == self.receiver {
            return Err(Error::InvalidInput("sender and receiver must differ".into()));
        }
        if self.sender >= n_sites || self.receiver >= n_sites {
            return Err(Error::InvalidInput("marked site out of range".into()));
        }
        if !(self.gamma > 0.0 && self.duration > 0.0 && self.marker_amplitude > 0.0) {
            return Err(Error::InvalidInput("gamma, duration and marker amplitude must be positive".into()));
        }
        Ok(())
    }

    /// `gamma * T` measured with the couplings normalised to unit largest
    /// eigenvalue and a unit marker field, which reduces to
    /// `gamma * T * lambda_max`.
    pub fn scaled_time(&self, lambda_max: f64) -> f64 {
        self.gamma * self.duration * lambda_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    /// Receiver population at the switch-off time.
    pub fidelity_at_end: f64,
    pub fidelity_peak: f64,
    pub t_peak: f64,
    pub times: Vec<f64>,
    pub fidelity_trace: Vec<f64>,
    /// See [`ProtocolConfig::scaled_time`].
    pub scaled_time: f64,
    pub gamma_used: f64,
    pub analytic_gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub lambda_max: f64,
    /// Top spectral gap below `1e-12 * lambda_max`.
    pub degenerate_spectrum: bool,
}

/// Whether local fields from the drive stay in protocol runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FieldHandling {
    #[default]
    Compensated,
    Retained,
}

/// Single-excitation diagonal from the drive's local fields, dropping the
/// common offset.
pub fn protocol_fields(model: &CouplingModel, handling: FieldHandling) -> Vec<f64> {
    match handling {
        FieldHandling::Compensated => vec![0.0; model.h.len()],
        FieldHandling::Retained => model.h.iter().map(|h| 2.0 * h).collect(),
    }
}

/// Idealised couplings `1 / |i - j|^alpha`.
pub fn idealized_couplings(n: usize, alpha: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |a, b| if a == b { 0.0 } else { (a.abs_diff(b) as f64).powf(-alpha) })
}

/// `gamma H + sum_k |k><k|` over the marked sites.
pub fn search_hamiltonian(walk: &DMatrix<f64>, gamma: f64, marked: &[usize]) -> Result<DMatrix<f64>> {
    let n = walk.nrows();
    for (k, &m) in marked.iter().enumerate() {
        if m >= n || marked[..k].contains(&m) {
            return Err(Error::InvalidInput(format!("invalid marked site {m}")));
        }
    }
    let mut h = walk * gamma;
    for &m in marked {
        h[(m, m)] += 1.0;
    }
    Ok(h)
}

pub fn analytic_gamma(walk: &DMatrix<f64>) -> Result<GammaEstimate> {
    let n = walk.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two sites".into()));
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(walk.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let lambda_max = ev[n - 1];
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidInput("largest eigenvalue must be positive".into()));
    }
    Ok(GammaEstimate {
        gamma: 1.0 / lambda_max,
        lambda_max,
        degenerate_spectrum: ev[n - 1] - ev[n - 2] < 1e-12 * lambda_max,
    })
}

/// `pi sqrt(n / 2)` in units of the inverse marker amplitude.
pub fn transfer_time(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least two sites".into()));
    }
    Ok(PI * (n as f64 / 2.0).sqrt())
}

/// Receiver population of the three-level reduced model.
pub fn analytic_transfer_fidelity(n: usize, t: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidInput("reduced model needs at least three sites".into()));
    }
    let beta = 1.0 / (n as f64).sqrt();
    let s2 = 2f64.sqrt();
    Ok(0.5 * beta * beta * (s2 * beta * t).sin().powi(2) + (beta * t / s2).sin().powi(2))
}

/// Reduced Hamiltonian on (|w>, |f>, |p>) with the identity removed.
pub fn reduced_hamiltonian(n: usize) -> Result<Matrix3<f64>> {
    if n < 3 {
        return Err(Error::InvalidInput("reduced model needs at least three sites".into()));
    }
    let b = 1.0 / (n as f64).sqrt();
    let b2 = b * b;
    let c = b * (1.0 - 2.0 * b2).sqrt();
    Ok(Matrix3::new(b2, b2, c, b2, b2, c, c, c, -2.0 * b2))
}

/// `exp(-i H t)` of the reduced model via the rotation expansion in the
/// normalised generator `H / (sqrt(2) beta)`.
pub fn reduced_propagator(n: usize, t: f64) -> Result<Matrix3<Complex64>> {
    let h = reduced_hamiltonian(n)?;
    let norm = 2f64.sqrt() / (n as f64).sqrt();
    let g = h / norm;
    let (s, c) = (norm * t).sin_cos();
    let id = Matrix3::<f64>::identity();
    let re = id + (g * g) * (c - 1.0);
    let im = g * (-s);
    Ok(Matrix3::from_fn(|r, k| Complex64::new(re[(r, k)], im[(r, k)])))
}

/// Full protocol Hamiltonian with markers scaled by the marker amplitude.
pub fn protocol_hamiltonian(hop: &DMatrix<f64>, fields: &[f64], config: &ProtocolConfig) -> Result<DMatrix<f64>> {
    let n = hop.nrows();
    if fields.len() != n {
        return Err(Error::InvalidInput("field vector length differs from hopping matrix".into()));
    }
    config.validate(n)?;
    let mut h = hop * config.gamma;
    h[(config.sender, config.sender)] += config.marker_amplitude;
    h[(config.receiver, config.receiver)] += config.marker_amplitude;
    for (i, f) in fields.iter().enumerate() {
        h[(i, i)] += f;
    }
    Ok(h)
}

/// Cached eigendecomposition for repeated single-excitation amplitudes.
pub struct SpectralEvolution {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl SpectralEvolution {
    pub fn new(h: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    /// `<to| exp(-i H t) |from>`.
    pub fn amplitude(&self, from: usize, to: usize, t: f64) -> Complex64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &l)| Complex64::from_polar(self.vectors[(to, k)] * self.vectors[(from, k)], -l * t))
            .sum()
    }

    /// `<to| exp(-i H t) |psi>` for a real initial vector.
    pub fn amplitude_from(&self, psi: &[f64], to: usize, t: f64) -> Complex64 {
        let n = psi.len();
        (0..n)
            .map(|k| {
                let proj: f64 = (0..n).map(|i| self.vectors[(i, k)] * psi[i]).sum();
                Complex64::from_polar(self.vectors[(to, k)] * proj, -self.values[k] * t)
            })
            .sum()
    }
}

pub fn sample_times(duration: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    (0..samples).map(|k| duration * k as f64 / (samples - 1) as f64).collect()
}

/// Evolve the sender excitation and record the receiver population on
/// `samples` evenly spaced times in `[0, duration]`.
pub fn run_transfer(hop: &DMatrix<f64>, fields: &[f64], config: &ProtocolConfig, samples: usize) -> Result<ProtocolReport> {
    let h = protocol_hamiltonian(hop, fields, config)?;
    let evo = SpectralEvolution::new(&h);
    let times = sample_times(config.duration, samples);
    let trace: Vec<f64> = times
        .iter()
        .map(|&t| evo.amplitude(config.sender, config.receiver, t).norm_sqr())
        .collect();
    let (k_peak, peak) = trace
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (k, &f)| if f > acc.1 { (k, f) } else { acc });
    // NaN when the hopping matrix has no positive eigenvalue
    let (lambda_max, gamma0) = analytic_gamma(hop).map_or((f64::NAN, f64::NAN), |g| (g.lambda_max, g.gamma));
    Ok(ProtocolReport {
        fidelity_at_end: *trace.last().unwrap(),
        fidelity_peak: peak,
        t_peak: times[k_peak],
        times,
        fidelity_trace: trace,
        scaled_time: config.scaled_time(lambda_max),
        gamma_used: config.gamma,
        analytic_gamma: config.marker_amplitude * gamma0,
    })
}

/// Population on `marked` starting from the uniform superposition under
/// `gamma * hop + marker |w><w| + diag(fields)`.
pub fn run_search(
    hop: &DMatrix<f64>,
    fields: &[f64],
    gamma: f64,
    marker_amplitude: f64,
    marked: usize,
    times: &[f64],
) -> Result<Vec<f64>> {
    let n = hop.nrows();
    if marked >= n || fields.len() != n {
        return Err(Error::InvalidInput("invalid search setup".into()));
    }
    let mut h = hop * gamma;
    h[(marked, marked)] += marker_amplitude;
    for (i, f) in fields.iter().enumerate() {
        h[(i, i)] += f;
    }
    let evo = SpectralEvolution::new(&h);
    let s = vec![1.0 / (n as f64).sqrt(); n];
    Ok(times.iter().map(|&t| evo.amplitude_from(&s, marked, t).norm_sqr()).collect())
}

/// Analytic seed: `gamma = marker / lambda_max`, `T = pi sqrt(n/2) / marker`.
pub fn seed_config(hop: &DMatrix<f64>, sender: usize, receiver: usize, marker_amplitude: f64) -> Result<ProtocolConfig> {
    let g = analytic_gamma(&(hop / marker_amplitude))?;
    let config = ProtocolConfig {
        gamma: g.gamma,
        sender,
        receiver,
        duration: transfer_time(hop.nrows())? / marker_amplitude,
        marker_amplitude,
    };
    config.validate(hop.nrows())?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedProtocol {
    pub config: ProtocolConfig,
    pub report: ProtocolReport,
    pub seed_config: ProtocolConfig,
    pub seed_report: ProtocolReport,
    pub evaluations: usize,
}

/// Fraction of the seed defining the search box.
pub const SEARCH_BOX: f64 = 0.3;

/// Maximise the switch-off fidelity over `(gamma, T)` within +-30% of the
/// seed values.
pub fn optimize_protocol(
    hop: &DMatrix<f64>,
    fields: &[f64],
    seed: &ProtocolConfig,
    options: &SearchOptions,
    samples: usize,
) -> Result<OptimizedProtocol> {
    protocol_hamiltonian(hop, fields, seed)?;
    let objective = |x: &[f64]| -> f64 {
        let cfg = ProtocolConfig { gamma: x[0], duration: x[1], ..*seed };
        match protocol_hamiltonian(hop, fields, &cfg) {
            Ok(h) => SpectralEvolution::new(&h).amplitude(cfg.sender, cfg.receiver, cfg.duration).norm_sqr(),
            Err(_) => f64::MIN,
        }
    };
    let x0 = [seed.gamma, seed.duration];
    let lower = [seed.gamma * (1.0 - SEARCH_BOX), seed.duration * (1.0 - SEARCH_BOX)];
    let upper = [seed.gamma * (1.0 + SEARCH_BOX), seed.duration * (1.0 + SEARCH_BOX)];
    let result = maximize(objective, &x0, &lower, &upper, options);
    let config = ProtocolConfig { gamma: result.x[0], duration: result.x[1], ..*seed };
    Ok(OptimizedProtocol {
        report: run_transfer(hop, fields, &config, samples)?,
        seed_report: run_transfer(hop, fields, seed, samples)?,
        config,
        seed_config: *seed,
        evaluations: result.evaluations,
    })
}
