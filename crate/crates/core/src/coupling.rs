//! Lamb-Dicke parameters, spin-spin couplings, local fields, power-law fits
//! and detuning selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSolution, TrapConfig};
use crate::constants::HBAR;
use crate::{Error, Result};

/// Default relative resonance guard: reject `|omega_eff - omega_m| < guard * omega_m`.
pub const DEFAULT_RESONANCE_GUARD: f64 = 1e-6;

/// Pair set and distance variable used by [`fit_alpha_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FitConvention {
    /// Pairs (1, j), distance j - 1.
    #[default]
    EndIonChainIndex,
    /// All pairs i < j, distance j - i.
    AllPairsChainIndex,
    /// Pairs (1, j), distance is the dimensionless axial separation.
    EndIonAxial,
    /// Pairs (c, j) with c the centre ion, distance |j - c|.
    CentreIonChainIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    /// Exponential decay per unit distance (per site, or per axial length unit).
    pub beta: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub convention: FitConvention,
    /// Number of fitted pairs whose coupling was negative (fitted via |J|).
    pub negative_entries: usize,
}

/// Couplings and fields for one trap configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingModel {
    /// Lamb-Dicke matrix, ions by modes.
    pub eta: DMatrix<f64>,
    /// Coefficients of the pairwise XY term, rad/s.
    pub j: DMatrix<f64>,
    /// Local z fields, rad/s.
    pub h: Vec<f64>,
    pub omega_eff: f64,
    pub rabi: f64,
    pub modes: Vec<usize>,
    pub n_init: u32,
}

impl CouplingModel {
    /// Evaluate couplings and fields over `modes` (all modes when `None`).
    pub fn compute(
        trap: &TrapConfig,
        chain: &ChainSolution,
        modes: Option<&[usize]>,
        n_init: u32,
    ) -> Result<Self> {
        let eta = lamb_dicke(trap, chain);
        let all: Vec<usize> = (0..chain.n_ions()).collect();
        let modes = modes.map(|m| m.to_vec()).unwrap_or(all);
        let drive = Drive::from_trap(trap);
        let j = coupling_matrix(&drive, &eta, &chain.mode_freqs, &modes, DEFAULT_RESONANCE_GUARD)?;
        let h = local_fields(&drive, &eta, &chain.mode_freqs, &modes, n_init, DEFAULT_RESONANCE_GUARD)?;
        Ok(Self { eta, j, h, omega_eff: drive.omega_eff, rabi: drive.rabi, modes, n_init })
    }

    /// Single-excitation hopping matrix: each unordered pair appears twice in
    /// the ordered sum and `XX + YY = 2 (s+ s- + s- s+)`, so the hop is `4 J`.
    pub fn hopping(&self) -> DMatrix<f64> {
        &self.j * 4.0
    }
}

/// Per-ion Rabi frequency and effective drive frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub rabi: f64,
    pub omega_eff: f64,
}

impl Drive {
    pub fn from_trap(trap: &TrapConfig) -> Self {
        Self { rabi: trap.rabi(), omega_eff: trap.omega_eff() }
    }
}

pub fn lamb_dicke(trap: &TrapConfig, chain: &ChainSolution) -> DMatrix<f64> {
    let n = chain.n_ions();
    DMatrix::from_fn(n, n, |i, m| {
        trap.delta_k
            * chain.mode_matrix[(i, m)]
            * (HBAR / (2.0 * trap.ion_mass * chain.mode_freqs[m])).sqrt()
    })
}

fn check_resonance(drive: &Drive, freqs: &[f64], modes: &[usize], guard: f64) -> Result<()> {
    for &m in modes {
        if m >= freqs.len() {
            return Err(Error::InvalidInput(format!("mode index {m} out of range")));
        }
        let gap = (drive.omega_eff - freqs[m]).abs();
        if gap < guard * freqs[m] {
            return Err(Error::ResonantDetuning { mode: m, gap });
        }
    }
    Ok(())
}

/// Pairwise XY coefficients summed over `modes`. Diagonal is zero.
pub fn coupling_matrix(
    drive: &Drive,
    eta: &DMatrix<f64>,
    freqs: &[f64],
    modes: &[usize],
    guard: f64,
) -> Result<DMatrix<f64>> {
    check_resonance(drive, freqs, modes, guard)?;
    let n = eta.nrows();
    let we2 = drive.omega_eff * drive.omega_eff;
    let omega2 = drive.rabi * drive.rabi;
    let mut j = DMatrix::zeros(n, n);
    for &m in modes {
        let wm = freqs[m];
        let w = omega2 * wm / (8.0 * (we2 - wm * wm));
        for a in 0..n {
            for b in (a + 1)..n {
                j[(a, b)] += w * eta[(a, m)] * eta[(b, m)];
            }
        }
    }
    for a in 0..n {
        for b in (a + 1)..n {
            j[(b, a)] = j[(a, b)];
        }
    }
    Ok(j)
}

/// Local fields for initial phonon number `n_init` in every included mode.
pub fn local_fields(
    drive: &Drive,
    eta: &DMatrix<f64>,
    freqs: &[f64],
    modes: &[usize],
    n_init: u32,
    guard: f64,
) -> Result<Vec<f64>> {
    check_resonance(drive, freqs, modes, guard)?;
    let we = drive.omega_eff;
    let occupation = 2.0 * n_init as f64 + 1.0;
    let omega2 = drive.rabi * drive.rabi;
    Ok((0..eta.nrows())
        .map(|i| {
            modes
                .iter()
                .map(|&m| {
                    let wm = freqs[m];
                    omega2 * eta[(i, m)].powi(2) * we * occupation / (4.0 * (we * we - wm * wm))
                })
                .sum()
        })
        .collect())
}

/// (distance, coupling) pairs selected by a fit convention.
pub fn pair_distances(
    j: &DMatrix<f64>,
    convention: FitConvention,
    positions: Option<&[f64]>,
) -> Result<Vec<(f64, f64)>> {
    let n = j.nrows();
    let pairs = match convention {
        FitConvention::EndIonChainIndex => (1..n).map(|b| (b as f64, j[(0, b)])).collect(),
        FitConvention::AllPairsChainIndex => {
            let mut v = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    v.push(((b - a) as f64, j[(a, b)]));
                }
            }
            v
        }
        FitConvention::EndIonAxial => {
            let u = positions.ok_or_else(|| {
                Error::InvalidInput("axial fit convention needs positions".into())
            })?;
            if u.len() != n {
                return Err(Error::InvalidInput("positions length differs from J".into()));
            }
            (1..n).map(|b| (u[b] - u[0], j[(0, b)])).collect()
        }
        FitConvention::CentreIonChainIndex => {
            let c = (n.max(1) - 1) / 2;
            (0..n).filter(|&b| b != c).map(|b| (b.abs_diff(c) as f64, j[(c, b)])).collect()
        }
    };
    Ok(pairs)
}

/// Least-squares fit of `ln|J| = c - alpha ln r - beta r`. With
/// `with_beta = false` the exponential factor is fixed at zero.
pub fn fit_alpha_beta(
    j: &DMatrix<f64>,
    convention: FitConvention,
    positions: Option<&[f64]>,
    with_beta: bool,
) -> Result<PowerLawFit> {
    let pairs: Vec<(f64, f64)> = pair_distances(j, convention, positions)?
        .into_iter()
        .filter(|&(r, v)| r > 0.0 && v != 0.0 && v.is_finite())
        .collect();
    let mut distinct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let needed = if with_beta { 3 } else { 2 };
    if distinct.len() < needed {
        return Err(Error::DegenerateFit);
    }
    let negative_entries = pairs.iter().filter(|p| p.1 < 0.0).count();
    let cols = if with_beta { 3 } else { 2 };
    let a = DMatrix::from_fn(pairs.len(), cols, |row, col| match col {
        0 => 1.0,
        1 => -pairs[row].0.ln(),
        _ => -pairs[row].0,
    });
    let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1.abs().ln()));
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|_| Error::DegenerateFit)?;
    let resid = &a * &coef - &y;
    Ok(PowerLawFit {
        alpha: coef[1],
        beta: if with_beta { coef[2] } else { 0.0 },
        residual: (resid.norm_squared() / pairs.len() as f64).sqrt(),
        convention,
        negative_entries,
    })
}

/// Detuning at which `omega_eff` sits three COM sideband Rabi frequencies
/// above the COM mode.
pub fn min_detuning(trap: &TrapConfig, chain: &ChainSolution) -> f64 {
    let eta = lamb_dicke(trap, chain);
    let rabi = trap.rabi();
    let target = 3.0 * rabi * eta[(0, 0)].abs() + chain.com_frequency();
    (target * target - rabi * rabi).max(0.0).sqrt()
}

/// Pure power-law exponent of the couplings at detuning `mu`.
pub fn alpha_at(
    trap: &TrapConfig,
    chain: &ChainSolution,
    mu: f64,
    convention: FitConvention,
) -> Result<f64> {
    let t = trap.with_detuning(mu);
    let model = CouplingModel::compute(&t, chain, None, 0)?;
    let positions = chain.equilibrium.positions.clone();
    Ok(fit_alpha_beta(&model.j, convention, Some(&positions), false)?.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearch {
    pub tolerance: f64,
    /// Upper end of the search window in units of the COM frequency.
    pub window_factor: f64,
    pub convention: FitConvention,
    pub max_iterations: usize,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            window_factor: 20.0,
            convention: FitConvention::EndIonChainIndex,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningChoice {
    pub mu: f64,
    pub achieved_alpha: f64,
    pub mu_min: f64,
    /// True when the target could not be reached inside the window.
    pub target_unreachable: bool,
}

/// Bisect the detuning for a target power-law exponent on
/// `[mu_min, window_factor * omega_com]`.
pub fn detuning_for_alpha(
    trap: &TrapConfig,
    chain: &ChainSolution,
    alpha_target: f64,
    search: &AlphaSearch,
) -> Result<DetuningChoice> {
    if !(alpha_target > 0.0) {
        return Err(Error::InvalidInput("alpha_target must be positive".into()));
    }
    let mu_min = min_detuning(trap, chain);
    let mu_max = search.window_factor * chain.com_frequency();
    let eval = |mu: f64| alpha_at(trap, chain, mu, search.convention);
    let alpha_lo = eval(mu_min)?;
    if alpha_lo >= alpha_target - search.tolerance {
        return Ok(DetuningChoice {
            mu: mu_min,
            achieved_alpha: alpha_lo,
            mu_min,
            target_unreachable: alpha_lo > alpha_target + search.tolerance,
        });
    }
    let alpha_hi = eval(mu_max)?;
    if alpha_hi < alpha_target - search.tolerance {
        return Ok(DetuningChoice { mu: mu_max, achieved_alpha: alpha_hi, mu_min, target_unreachable: true });
    }
    let (mut lo, mut hi) = (mu_min, mu_max);
    let mut best = (mu_max, alpha_hi);
    for _ in 0..search.max_iterations {
        let mid = 0.5 * (lo + hi);
        let a = eval(mid)?;
        if (a - alpha_target).abs() < (best.1 - alpha_target).abs() {
            best = (mid, a);
        }
        if (a - alpha_target).abs() <= search.tolerance || hi - lo <= 1e-13 * hi {
            best = (mid, a);
            break;
        }
        if a < alpha_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DetuningChoice { mu: best.0, achieved_alpha: best.1, mu_min, target_unreachable: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::solve_chain;
    use crate::constants::mhz_to_angular;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain10() -> (TrapConfig, ChainSolution) {
        let t = TrapConfig::reference(10).with_axial(mhz_to_angular(0.8));
        let c = solve_chain(&t).unwrap();
        (t, c)
    }

    #[test]
    fn com_column_is_uniform() {
        let (t, c) = chain10();
        let eta = lamb_dicke(&t, &c);
        let expected = t.delta_k * (HBAR / (2.0 * t.ion_mass * t.omega_x)).sqrt() / 10f64.sqrt();
        for i in 0..10 {
            assert_relative_eq!(eta[(i, 0)], expected, max_relative = 1e-9);
        }
        let doubled = TrapConfig { delta_k: 2.0 * t.delta_k, ..t };
        let eta2 = lamb_dicke(&doubled, &c);
        assert_relative_eq!(eta2, eta * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn single_com_mode_gives_uniform_couplings() {
        let (t, c) = chain10();
        let m = CouplingModel::compute(&t, &c, Some(&[0]), 0).unwrap();
        let j01 = m.j[(0, 1)];
        for a in 0..10 {
            assert_eq!(m.j[(a, a)], 0.0);
            for b in 0..10 {
                if a != b {
                    assert_relative_eq!(m.j[(a, b)], j01, max_relative = 1e-9);
                }
            }
            assert_relative_eq!(m.h[a], m.h[0], max_relative = 1e-9);
        }
        let fit = fit_alpha_beta(&m.j, FitConvention::EndIonChainIndex, None, false).unwrap();
        assert!(fit.alpha.abs() < 1e-9);
    }

    #[test]
    fn fields_scale_with_occupation() {
        let (t, c) = chain10();
        let t = t.with_detuning(t.omega_x * 1.01);
        let m0 = CouplingModel::compute(&t, &c, None, 0).unwrap();
        let m1 = CouplingModel::compute(&t, &c, None, 1).unwrap();
        for i in 0..10 {
            assert_relative_eq!(m1.h[i], 3.0 * m0.h[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn large_detuning_suppresses_couplings() {
        let (t, c) = chain10();
        let m1 = CouplingModel::compute(&t.with_detuning(1e10), &c, None, 0).unwrap();
        let m2 = CouplingModel::compute(&t.with_detuning(2e10), &c, None, 0).unwrap();
        // mode orthogonality cancels the 1/mu^2 term, leaving 1/mu^4
        assert_relative_eq!(m2.j[(0, 3)] / m1.j[(0, 3)], 0.0625, max_relative = 1e-4);
        assert_relative_eq!(m2.h[0] / m1.h[0], 0.5, max_relative = 1e-4);
    }

    #[test]
    fn resonance_is_rejected() {
        let (t, c) = chain10();
        let rabi = t.rabi();
        let mu = (c.mode_freqs[2].powi(2) - rabi * rabi).sqrt();
        let err = CouplingModel::compute(&t.with_detuning(mu), &c, None, 0).unwrap_err();
        assert!(matches!(err, Error::ResonantDetuning { mode: 2, .. }));
    }

    #[test]
    fn exact_power_law_fit() {
        let n = 12;
        let j = DMatrix::from_fn(n, n, |a, b| {
            if a == b { 0.0 } else { (a.abs_diff(b) as f64).powf(-0.5) }
        });
        let fit = fit_alpha_beta(&j, FitConvention::EndIonChainIndex, None, true).unwrap();
        assert!((fit.alpha - 0.5).abs() < 1e-12);
        assert!(fit.beta.abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        let uniform = DMatrix::from_element(n, n, 2.0);
        let fit = fit_alpha_beta(&uniform, FitConvention::AllPairsChainIndex, None, false).unwrap();
        assert!(fit.alpha.abs() < 1e-12);
    }

    #[test]
    fn degenerate_fit_rejected() {
        let j = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(
            fit_alpha_beta(&j, FitConvention::EndIonChainIndex, None, false),
            Err(Error::DegenerateFit)
        );
    }

    #[test]
    fn negative_entries_are_counted() {
        let n = 6;
        let j = DMatrix::from_fn(n, n, |a, b| {
            let r = a.abs_diff(b) as f64;
            if a == b { 0.0 } else if r == 3.0 { -r.powf(-1.0) } else { r.powf(-1.0) }
        });
        let fit = fit_alpha_beta(&j, FitConvention::EndIonChainIndex, None, false).unwrap();
        assert_eq!(fit.negative_entries, 1);
        assert!((fit.alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rabi_limit_of_min_detuning() {
        let (t, c) = chain10();
        let tiny = TrapConfig { rabi_total: 1e-9, ..t };
        assert_relative_eq!(min_detuning(&tiny, &c), c.com_frequency(), max_relative = 1e-12);
    }

    #[test]
    fn detuning_fixed_point() {
        let (t, c) = chain10();
        let mu = c.com_frequency() * 1.003;
        let a = alpha_at(&t, &c, mu, FitConvention::EndIonChainIndex).unwrap();
        let search = AlphaSearch { tolerance: 1e-10, ..Default::default() };
        let choice = detuning_for_alpha(&t, &c, a, &search).unwrap();
        assert!(!choice.target_unreachable);
        assert_relative_eq!(choice.mu, mu, max_relative = 1e-7);
    }

    proptest! {
        #[test]
        fn planted_power_law_recovered(alpha in 0.0f64..3.0, beta in 0.0f64..0.5, n in 4usize..30) {
            let j = DMatrix::from_fn(n, n, |a, b| {
                let r = a.abs_diff(b) as f64;
                if a == b { 0.0 } else { (-beta * r).exp() / r.powf(alpha) }
            });
            for conv in [FitConvention::EndIonChainIndex, FitConvention::AllPairsChainIndex] {
                let fit = fit_alpha_beta(&j, conv, None, true).unwrap();
                prop_assert!((fit.alpha - alpha).abs() < 1e-9);
                prop_assert!((fit.beta - beta).abs() < 1e-9);
            }
        }

        #[test]
        fn mode_sum_is_linear(split in 1usize..9, mu_rel in 1.0005f64..1.2) {
            let (t, c) = chain10();
            let t = t.with_detuning(c.com_frequency() * mu_rel);
            let drive = Drive::from_trap(&t);
            let eta = lamb_dicke(&t, &c);
            let all: Vec<usize> = (0..10).collect();
            let (s1, s2) = all.split_at(split);
            let j = coupling_matrix(&drive, &eta, &c.mode_freqs, &all, 0.0).unwrap();
            let j1 = coupling_matrix(&drive, &eta, &c.mode_freqs, s1, 0.0).unwrap();
            let j2 = coupling_matrix(&drive, &eta, &c.mode_freqs, s2, 0.0).unwrap();
            let scale = j.amax();
            prop_assert!(((j1 + j2) - &j).amax() <= 1e-12 * scale);
            prop_assert_eq!(j.transpose(), j);
        }
    }
}
