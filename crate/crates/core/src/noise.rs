//! Quasi-static dephasing: Gaussian longitudinal fields drawn once per run.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::protocols::{protocol_hamiltonian, sample_times, ProtocolConfig, SpectralEvolution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Dephasing time, seconds.
    pub t2: f64,
    pub n_samples: usize,
    pub rng_seed: u64,
    /// Field variance in rad^2/s^2; `None` means `1 / t2`.
    pub field_variance: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { t2: 10e-3, n_samples: 500, rng_seed: 0, field_variance: None }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t2 > 0.0) {
            return Err(Error::InvalidInput("t2 must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be at least 1".into()));
        }
        if self.field_variance.is_some_and(|v| !(v >= 0.0)) {
            return Err(Error::InvalidInput("field variance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.field_variance.unwrap_or(1.0 / self.t2)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Fields for one sample. Each sample index owns an independent ChaCha
/// stream, so results do not depend on evaluation order.
pub fn sample_static_fields(n_sites: usize, config: &NoiseConfig, sample_index: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let sigma = config.std_dev();
    if sigma == 0.0 {
        return Ok(vec![0.0; n_sites]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(sample_index);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((0..n_sites).map(|_| normal.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnsemble {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Receiver population at the switch-off time, per sample.
    pub final_fidelities: Vec<f64>,
    pub n_samples: usize,
}

/// Transfer fidelity traces averaged over static field samples.
pub fn noisy_transfer_ensemble(
    hop: &DMatrix<f64>,
    fields: &[f64],
    protocol: &ProtocolConfig,
    noise: &NoiseConfig,
    samples: usize,
) -> Result<NoiseEnsemble> {
    noise.validate()?;
    let n = hop.nrows();
    protocol_hamiltonian(hop, fields, protocol)?;
    let times = sample_times(protocol.duration, samples);
    let traces: Vec<Vec<f64>> = (0..noise.n_samples as u64)
        .into_par_iter()
        .map(|idx| -> Result<Vec<f64>> {
            let extra = sample_static_fields(n, noise, idx)?;
            let total: Vec<f64> = fields.iter().zip(&extra).map(|(a, b)| a + b).collect();
            let evo = SpectralEvolution::new(&protocol_hamiltonian(hop, &total, protocol)?);
            Ok(times
                .iter()
                .map(|&t| evo.amplitude(protocol.sender, protocol.receiver, t).norm_sqr())
                .collect())
        })
        .collect::<Result<_>>()?;
    let count = traces.len() as f64;
    let mut mean = vec![0.0; times.len()];
    for tr in &traces {
        for (m, v) in mean.iter_mut().zip(tr) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; times.len()];
    for tr in &traces {
        for ((s, v), m) in var.iter_mut().zip(tr).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let std = var.into_iter().map(|s| (s / count).sqrt()).collect();
    let final_fidelities = traces.iter().map(|t| *t.last().unwrap()).collect();
    Ok(NoiseEnsemble { times, mean, std, final_fidelities, n_samples: noise.n_samples })
}

/// Standard error of the mean.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{idealized_couplings, run_transfer, seed_config};

    #[test]
    fn deterministic_and_independent_streams() {
        let cfg = NoiseConfig { rng_seed: 9, ..Default::default() };
        let a = sample_static_fields(6, &cfg, 3).unwrap();
        assert_eq!(a, sample_static_fields(6, &cfg, 3).unwrap());
        assert_ne!(a, sample_static_fields(6, &cfg, 4).unwrap());
        assert_ne!(a, sample_static_fields(6, &NoiseConfig { rng_seed: 10, ..cfg }, 3).unwrap());
    }

    #[test]
    fn infinite_t2_is_noiseless() {
        let cfg = NoiseConfig { t2: f64::INFINITY, ..Default::default() };
        assert_eq!(sample_static_fields(4, &cfg, 0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn default_std_is_ten_rad_per_second() {
        assert!((NoiseConfig::default().std_dev() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_variance() {
        let cfg = NoiseConfig { rng_seed: 1, ..Default::default() };
        let draws: Vec<f64> = (0..10_000u64).flat_map(|k| sample_static_fields(10, &cfg, k).unwrap()).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.1);
        assert!((var / cfg.variance() - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_variance_matches_noiseless() {
        let j = idealized_couplings(8, 0.4);
        let seed = seed_config(&j, 0, 7, 1.0).unwrap();
        let noise = NoiseConfig { n_samples: 1, field_variance: Some(0.0), ..Default::default() };
        let ens = noisy_transfer_ensemble(&j, &[0.0; 8], &seed, &noise, 64).unwrap();
        let clean = run_transfer(&j, &[0.0; 8], &seed, 64).unwrap();
        for (a, b) in ens.mean.iter().zip(&clean.fidelity_trace) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(ens.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(NoiseConfig { t2: 0.0, ..Default::default() }.validate().is_err());
        assert!(NoiseConfig { n_samples: 0, ..Default::default() }.validate().is_err());
    }
}
