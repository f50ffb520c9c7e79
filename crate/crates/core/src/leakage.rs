//! Dyson-series coefficients, analytic leakage norms, effective-frequency
//! fits and renormalised couplings.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingModel;
use crate::{Error, Result};

/// Below this `|a| t` the second-order coefficient switches to a Taylor
/// expansion in `a`.
const BETA_SERIES_THRESHOLD: f64 = 1e-3;
const SINC_SERIES_THRESHOLD: f64 = 1e-4;

/// Sign function `f_k = (-1)^(k+1)`, so `f_0 = -1` and `f_1 = +1`.
pub fn sign_f(k: u8) -> f64 {
    if k % 2 == 1 { 1.0 } else { -1.0 }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_THRESHOLD {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `int_0^t exp(i c tau) d tau`, stable for every `c` including zero.
pub fn phase_integral(c: f64, t: f64) -> Complex64 {
    let half = 0.5 * c * t;
    let s = sinc(half);
    Complex64::new(t * sinc(c * t), t * half * s * s)
}

/// `int_0^t tau^k exp(i b tau) d tau` for k = 0..=kmax.
fn phase_moments(b: f64, t: f64, kmax: usize) -> Vec<Complex64> {
    let bt = (b * t).abs();
    let mut out = vec![Complex64::new(0.0, 0.0); kmax + 1];
    if bt < 8.0 {
        for (k, slot) in out.iter_mut().enumerate() {
            // sum_j (i b)^j t^(k+j+1) / (j! (k+j+1))
            let mut term = Complex64::new(t.powi(k as i32 + 1), 0.0);
            let mut acc = term / (k as f64 + 1.0);
            for j in 1..200 {
                term *= Complex64::new(0.0, b * t) / j as f64;
                let add = term / (k + j + 1) as f64;
                acc += add;
                if add.norm() < 1e-18 * acc.norm() {
                    break;
                }
            }
            *slot = acc;
        }
    } else {
        let ib = Complex64::new(0.0, b);
        let e = Complex64::from_polar(1.0, b * t);
        out[0] = phase_integral(b, t);
        for k in 1..=kmax {
            out[k] = (e * t.powi(k as i32) - out[k - 1] * k as f64) / ib;
        }
    }
    out
}

/// First- and second-order Dyson coefficients for a drive at `omega_eff`
/// coupling to modes at `mode_freqs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DysonCoefficients {
    pub omega_eff: f64,
    pub mode_freqs: Vec<f64>,
}

impl DysonCoefficients {
    pub fn new(omega_eff: f64, mode_freqs: Vec<f64>) -> Self {
        Self { omega_eff, mode_freqs }
    }

    fn phase(&self, mode: usize, p: u8, q: u8) -> f64 {
        sign_f(q) * self.omega_eff + sign_f(p) * self.mode_freqs[mode]
    }

    /// `alpha_m(p, q; t) = int_0^t exp(i (f_q omega_eff + f_p omega_m) tau) d tau`.
    pub fn alpha(&self, m: usize, p: u8, q: u8, t: f64) -> Complex64 {
        phase_integral(self.phase(m, p, q), t)
    }

    /// `beta_lm(r, s, p, q; t) = int_0^t alpha_m(p, q; tau) exp(i (f_s omega_eff + f_r omega_l) tau) d tau`.
    #[allow(clippy::too_many_arguments)]
    pub fn beta(&self, l: usize, m: usize, r: u8, s: u8, p: u8, q: u8, t: f64) -> Complex64 {
        let a = self.phase(m, p, q);
        let b = self.phase(l, r, s);
        nested_phase_integral(a, b, t)
    }
}

/// `int_0^t exp(i b tau) int_0^tau exp(i a sigma) d sigma d tau`.
pub fn nested_phase_integral(a: f64, b: f64, t: f64) -> Complex64 {
    if (a * t).abs() >= BETA_SERIES_THRESHOLD {
        nested_direct(a, b, t)
    } else {
        nested_series(a, b, t)
    }
}

fn nested_direct(a: f64, b: f64, t: f64) -> Complex64 {
    let diff = phase_integral(a + b, t) - phase_integral(b, t);
    Complex64::new(0.0, -1.0) * diff / a
}

/// Inner integral expanded in powers of `a`.
fn nested_series(a: f64, b: f64, t: f64) -> Complex64 {
    const ORDER: usize = 8;
    let moments = phase_moments(b, t, ORDER + 1);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut coeff = Complex64::new(1.0, 0.0);
    for k in 0..=ORDER {
        if k > 0 {
            coeff *= Complex64::new(0.0, a) / (k as f64 + 1.0);
        }
        acc += coeff * moments[k + 1];
    }
    acc
}

/// Analytic leakage norm for one dominant mode.
pub fn leakage_norm_single(eta: f64, rabi: f64, detuning: f64, t: f64) -> f64 {
    rabi * rabi * eta * eta * (1.0 - (detuning * t).cos()) / (2.0 * detuning * detuning)
}

/// Ion-averaged leakage norm for two modes. `eta1`, `eta2` hold the
/// Lamb-Dicke parameters of every ion for the two modes.
pub fn leakage_norm_two_modes(
    eta1: &[f64],
    eta2: &[f64],
    rabi: f64,
    omega_eff: f64,
    freqs: (f64, f64),
    t: f64,
) -> f64 {
    let (w1, w2) = freqs;
    let (d1, d2) = (omega_eff - w1, omega_eff - w2);
    let (c1, c2, c12) = ((d1 * t).cos(), (d2 * t).cos(), ((w1 - w2) * t).cos());
    let n = eta1.len() as f64;
    let sum: f64 = eta1
        .iter()
        .zip(eta2)
        .map(|(&e1, &e2)| {
            e1 * e1 / (d1 * d1) * (1.0 - c1)
                + e1 * e2 / (d1 * d2) * (1.0 - c1 - c2 + c12)
                + e2 * e2 / (d2 * d2) * (1.0 - c2)
        })
        .sum();
    rabi * rabi / (2.0 * n) * sum
}

/// Norm-preserving weight `1 - Tr E(t)` of the XY component.
pub fn normalization(leakage: &[f64]) -> Vec<f64> {
    leakage.iter().map(|e| 1.0 - e).collect()
}

/// Predicted phonon occupation for `s` initial excitations.
pub fn higher_subspace_scaling(s: usize, envelope: &[f64]) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::InvalidInput("at least one excitation required".into()));
    }
    Ok(envelope.iter().map(|e| s as f64 * e).collect())
}

/// Mode (other than the COM mode 0) with the largest summed `|eta Omega / Delta|`.
pub fn second_mode_index(eta: &DMatrix<f64>, rabi: f64, omega_eff: f64, freqs: &[f64]) -> Option<usize> {
    (1..freqs.len())
        .map(|m| {
            let d = omega_eff - freqs[m];
            let w: f64 = (0..eta.nrows()).map(|i| (eta[(i, m)] * rabi / d).abs()).sum();
            (m, w)
        })
        .fold(None, |best: Option<(usize, f64)>, (m, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((m, w)),
        })
        .map(|(m, _)| m)
}

/// Analytic leakage trace parametrised by the frequency scale `r`
/// (`omega_eff -> r omega_eff` in every detuning and amplitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LeakageModel {
    Single { eta: f64, rabi: f64, omega_eff: f64, omega_mode: f64 },
    TwoMode { eta1: Vec<f64>, eta2: Vec<f64>, rabi: f64, omega_eff: f64, omega_modes: (f64, f64) },
}

impl LeakageModel {
    pub fn eval(&self, r: f64, t: f64) -> f64 {
        match self {
            LeakageModel::Single { eta, rabi, omega_eff, omega_mode } => {
                leakage_norm_single(*eta, *rabi, r * omega_eff - omega_mode, t)
            }
            LeakageModel::TwoMode { eta1, eta2, rabi, omega_eff, omega_modes } => {
                leakage_norm_two_modes(eta1, eta2, *rabi, r * omega_eff, *omega_modes, t)
            }
        }
    }

    pub fn trace(&self, r: f64, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.eval(r, t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFitOptions {
    pub r_min: f64,
    pub r_max: f64,
    pub grid_points: usize,
    /// Failure threshold on residual power over trace power.
    pub max_residual_fraction: f64,
}

impl Default for FrequencyFitOptions {
    fn default() -> Self {
        Self { r_min: 0.999, r_max: 1.002, grid_points: 30001, max_residual_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFit {
    pub r: f64,
    pub residual_fraction: f64,
}

/// Least-squares fit of the frequency scale `r` to a simulated leakage trace:
/// dense grid scan over the bounds followed by golden-section refinement.
pub fn fit_effective_frequency(
    times: &[f64],
    e_sim: &[f64],
    model: &LeakageModel,
    options: &FrequencyFitOptions,
) -> Result<FrequencyFit> {
    if times.len() != e_sim.len() || times.is_empty() {
        return Err(Error::InvalidInput("trace and time grid differ in length".into()));
    }
    if !(options.r_max > options.r_min) || options.grid_points < 3 {
        return Err(Error::InvalidInput("invalid fit bounds".into()));
    }
    let cost = |r: f64| -> f64 {
        times.iter().zip(e_sim).map(|(&t, &e)| (e - model.eval(r, t)).powi(2)).sum()
    };
    let n = options.grid_points;
    let step = (options.r_max - options.r_min) / (n - 1) as f64;
    let (best_k, _) = (0..n)
        .map(|k| (k, cost(options.r_min + step * k as f64)))
        .fold((0, f64::INFINITY), |acc, (k, c)| if c < acc.1 { (k, c) } else { acc });
    let mut lo = options.r_min + step * best_k.saturating_sub(1) as f64;
    let mut hi = (options.r_min + step * (best_k + 1) as f64).min(options.r_max);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..100 {
        if hi - lo <= 1e-15 * hi.abs() {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
    }
    let r = 0.5 * (lo + hi);
    let power: f64 = e_sim.iter().map(|e| e * e).sum();
    let residual_fraction = if power > 0.0 { cost(r) / power } else { 0.0 };
    if residual_fraction > options.max_residual_fraction {
        return Err(Error::FitFailure { fraction: residual_fraction });
    }
    Ok(FrequencyFit { r, residual_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizationResult {
    pub r: f64,
    pub j_prime: DMatrix<f64>,
    /// Mean of `J'_ij / J_ij` over pairs i < j.
    pub factor_summary: f64,
    pub per_pair_factors: Vec<f64>,
    /// Set when the fitted scale is below one.
    pub below_unity: bool,
}

/// Couplings with the drive frequency replaced by the time-averaged
/// `(1 + r) omega_eff / 2` on `shifted_modes`; other modes keep `omega_eff`.
pub fn renormalized_couplings(
    model: &CouplingModel,
    mode_freqs: &[f64],
    r: f64,
    shifted_modes: &[usize],
) -> RenormalizationResult {
    let n = model.j.nrows();
    let rabi2 = model.rabi * model.rabi;
    let averaged = 0.5 * (1.0 + r) * model.omega_eff;
    let mut jp = DMatrix::zeros(n, n);
    for &m in &model.modes {
        let wm = mode_freqs[m];
        let we = if shifted_modes.contains(&m) { averaged } else { model.omega_eff };
        let w = rabi2 * wm / (8.0 * (we * we - wm * wm));
        for a in 0..n {
            for b in (a + 1)..n {
                let v = w * model.eta[(a, m)] * model.eta[(b, m)];
                jp[(a, b)] += v;
                jp[(b, a)] += v;
            }
        }
    }
    let mut factors = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if model.j[(a, b)] != 0.0 {
                factors.push(jp[(a, b)] / model.j[(a, b)]);
            }
        }
    }
    let factor_summary = if factors.is_empty() {
        1.0
    } else {
        factors.iter().sum::<f64>() / factors.len() as f64
    };
    RenormalizationResult { r, j_prime: jp, factor_summary, per_pair_factors: factors, below_unity: r < 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{solve_chain, TrapConfig};
    use crate::constants::mhz_to_angular;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn alpha_limits() {
        let d = DysonCoefficients::new(3.0, vec![3.0, 2.5]);
        assert_eq!(d.alpha(0, 0, 1, 0.0), Complex64::new(0.0, 0.0));
        // f_0 * omega_eff ... zero phase when omega_m = omega_eff
        let secular = d.alpha(0, 0, 1, 2.5);
        assert_relative_eq!(secular.re, 2.5, epsilon = 1e-15);
        assert_relative_eq!(secular.im, 0.0, epsilon = 1e-15);
        let c = d.phase(1, 1, 1);
        let closed = Complex64::new(0.0, 1.0) * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, c * 0.7)) / c;
        assert!((d.alpha(1, 1, 1, 0.7) - closed).norm() < 1e-14);
    }

    #[test]
    fn secular_beta_closed_form() {
        let (we, wm) = (5.0, 4.2);
        let d = DysonCoefficients::new(we, vec![wm]);
        let delta = we - wm;
        for t in [0.0, 0.3, 2.0, 11.0] {
            let expected = Complex64::new(0.0, -t / delta)
                + (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -delta * t)) / (delta * delta);
            assert!((d.beta(0, 0, 1, 0, 0, 1, t) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        for b in [0.0, 0.5, 3.0, 20.0] {
            let t = 1.3;
            let a = BETA_SERIES_THRESHOLD / t;
            let series = nested_series(a, b, t);
            let direct = nested_direct(a, b, t);
            assert!((series - direct).norm() < 1e-12, "b={b}");
        }
        let t = 2.0;
        assert!((nested_phase_integral(0.0, 0.0, t) - Complex64::new(t * t / 2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_mode_leakage_extremes() {
        let (eta, rabi, delta) = (0.03, 6.0e4, 9.0e4);
        let peak = rabi * rabi * eta * eta / (delta * delta);
        for k in 0..5 {
            let zero = leakage_norm_single(eta, rabi, delta, 2.0 * PI * k as f64 / delta);
            assert!(zero.abs() <= 1e-12 * peak);
            let top = leakage_norm_single(eta, rabi, delta, (1.0 + 2.0 * k as f64) * PI / delta);
            assert_relative_eq!(top, peak, max_relative = 1e-12);
        }
        let t = 1.234e-5;
        let ratio = leakage_norm_single(eta, rabi, 2.0 * delta, 0.5 * t) / leakage_norm_single(eta, rabi, delta, t);
        assert_relative_eq!(ratio, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn two_mode_reduces_to_single() {
        let eta1 = [0.02, 0.02, 0.02];
        let eta2 = [0.0; 3];
        let (rabi, we, w1) = (5e4, 3.0e7, 2.99e7);
        for t in [0.0, 1e-6, 3e-5] {
            let two = leakage_norm_two_modes(&eta1, &eta2, rabi, we, (w1, 2.9e7), t);
            assert_relative_eq!(two, leakage_norm_single(0.02, rabi, we - w1, t), max_relative = 1e-12, epsilon = 1e-300);
        }
        assert_eq!(leakage_norm_two_modes(&[0.1, 0.2], &[0.3, -0.1], rabi, we, (w1, 2.9e7), 0.0), 0.0);
    }

    #[test]
    fn planted_r_is_recovered() {
        let model = LeakageModel::Single { eta: 0.025, rabi: 6.28e4, omega_eff: 3.78e7, omega_mode: 3.7699e7 };
        let delta = 3.78e7 - 3.7699e7;
        let times: Vec<f64> = (0..1200).map(|k| k as f64 * 8.0 * PI / delta / 1199.0).collect();
        let planted = 1.0005;
        let trace = model.trace(planted, &times);
        let fit = fit_effective_frequency(&times, &trace, &model, &FrequencyFitOptions::default()).unwrap();
        assert!((fit.r - planted).abs() < 1e-6);
        let refit = fit_effective_frequency(&times, &model.trace(fit.r, &times), &model, &FrequencyFitOptions::default()).unwrap();
        assert!((refit.r - fit.r).abs() < 1e-6);
    }

    #[test]
    fn noise_trace_fails_fit() {
        let model = LeakageModel::Single { eta: 0.025, rabi: 6.28e4, omega_eff: 3.78e7, omega_mode: 3.7699e7 };
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 1e-6).collect();
        let junk: Vec<f64> = (0..200).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(
            fit_effective_frequency(&times, &junk, &model, &FrequencyFitOptions::default()),
            Err(Error::FitFailure { .. })
        ));
    }

    #[test]
    fn renormalisation_identity_and_monotonicity() {
        let t = TrapConfig::reference(10).with_axial(mhz_to_angular(1.0));
        let c = solve_chain(&t).unwrap();
        let t = t.with_detuning(c.com_frequency() * 1.003);
        let model = CouplingModel::compute(&t, &c, Some(&[0]), 0).unwrap();
        let same = renormalized_couplings(&model, &c.mode_freqs, 1.0, &[0]);
        assert_eq!(same.j_prime, model.j);
        assert_eq!(same.factor_summary, 1.0);
        let mut last = 1.0;
        for r in [1.0001, 1.0002, 1.0005, 1.001] {
            let f = renormalized_couplings(&model, &c.mode_freqs, r, &[0]).factor_summary;
            assert!(f < last);
            last = f;
        }
        assert!(renormalized_couplings(&model, &c.mode_freqs, 0.9999, &[0]).below_unity);
    }

    #[test]
    fn scaling_by_excitations() {
        assert_eq!(higher_subspace_scaling(1, &[0.1, 0.2]).unwrap(), vec![0.1, 0.2]);
        assert_eq!(higher_subspace_scaling(3, &[0.1]).unwrap(), vec![0.1 * 3.0]);
        assert!(higher_subspace_scaling(0, &[0.1]).is_err());
    }

    proptest! {
        #[test]
        fn conjugation_symmetry(we in 0.1f64..10.0, w1 in 0.1f64..10.0, w2 in 0.1f64..10.0,
                                p in 0u8..2, q in 0u8..2, r in 0u8..2, s in 0u8..2, t in 0.0f64..5.0) {
            let d = DysonCoefficients::new(we, vec![w1, w2]);
            let a = d.alpha(1, p, q, t).conj() - d.alpha(1, p + 1, q + 1, t);
            prop_assert!(a.norm() < 1e-12);
            let b = d.beta(0, 1, r, s, p, q, t).conj() - d.beta(0, 1, r + 1, s + 1, p + 1, q + 1, t);
            prop_assert!(b.norm() < 1e-12);
        }

        #[test]
        fn leakage_period(delta in 1e3f64..1e6, t in 0.0f64..1e-3) {
            let period = 2.0 * PI / delta;
            let a = leakage_norm_single(0.02, 5e4, delta, t);
            let b = leakage_norm_single(0.02, 5e4, delta, t + period);
            let peak = 0.02f64.powi(2) * 2.5e9 / (delta * delta);
            prop_assert!((a - b).abs() <= 1e-10 * peak);
        }
    }
}
