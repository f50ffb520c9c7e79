//! Ready-to-run chains: axial frequency, detuning for a target range and the
//! resulting couplings.

use serde::{Deserialize, Serialize};

use crate::chain::{
    choose_axial_frequency, critical_ratio, solve_chain, solve_equilibrium_dimensionless, AxialScan, ChainSolution,
    TrapConfig,
};
use crate::coupling::{alpha_at, detuning_for_alpha, min_detuning, AlphaSearch, CouplingModel, DetuningChoice};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AxialChoice {
    /// `fraction` times the largest linear-stable omega_z.
    NearCritical { fraction: f64 },
    Scan(AxialScan),
    Fixed(f64),
}

impl Default for AxialChoice {
    fn default() -> Self {
        AxialChoice::NearCritical { fraction: 0.9999 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub alpha_target: f64,
    pub axial: AxialChoice,
    pub search: AlphaSearch,
    /// Overrides the COM frequency after the modes are solved.
    pub pinned_com: Option<f64>,
    /// Use this detuning instead of solving for `alpha_target`.
    pub fixed_detuning: Option<f64>,
}

impl ScenarioOptions {
    pub fn new(alpha_target: f64) -> Self {
        Self { alpha_target, axial: AxialChoice::default(), search: AlphaSearch::default(), pinned_com: None, fixed_detuning: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trap: TrapConfig,
    pub chain: ChainSolution,
    pub detuning: DetuningChoice,
    pub couplings: CouplingModel,
}

/// Largest omega_z keeping the chain linear, rad/s.
pub fn critical_axial_frequency(trap: &TrapConfig) -> Result<f64> {
    let eq = solve_equilibrium_dimensionless(trap.n_ions)?;
    Ok(trap.omega_x.min(trap.omega_y) / critical_ratio(&eq).max(f64::MIN_POSITIVE))
}

pub fn build_scenario(base: &TrapConfig, options: &ScenarioOptions) -> Result<Scenario> {
    base.validate()?;
    let omega_z = match &options.axial {
        AxialChoice::NearCritical { fraction } => {
            if base.n_ions == 1 {
                base.omega_z
            } else {
                fraction * critical_axial_frequency(base)?
            }
        }
        AxialChoice::Scan(scan) => choose_axial_frequency(base, base.n_ions, scan)?,
        AxialChoice::Fixed(w) => *w,
    };
    let trap = base.with_axial(omega_z);
    let mut chain = solve_chain(&trap)?;
    if let Some(w) = options.pinned_com {
        chain = chain.with_mode_frequency(0, w);
    }
    let detuning = match options.fixed_detuning {
        Some(mu) => DetuningChoice {
            mu,
            achieved_alpha: alpha_at(&trap, &chain, mu, options.search.convention)?,
            mu_min: min_detuning(&trap, &chain),
            target_unreachable: false,
        },
        None => detuning_for_alpha(&trap, &chain, options.alpha_target, &options.search)?,
    };
    let trap = trap.with_detuning(detuning.mu);
    let couplings = CouplingModel::compute(&trap, &chain, None, 0)?;
    Ok(Scenario { trap, chain, detuning, couplings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::is_linear_stable;

    #[test]
    fn near_critical_chain_is_stable_and_hits_target() {
        let s = build_scenario(&TrapConfig::reference(10), &ScenarioOptions::new(0.4)).unwrap();
        assert!(is_linear_stable(&s.trap).unwrap().stable);
        assert!(!s.detuning.target_unreachable);
        assert!((s.detuning.achieved_alpha - 0.4).abs() <= 1e-3);
        let over = s.trap.with_axial(s.trap.omega_z / 0.9999 * 1.0001);
        assert!(!is_linear_stable(&over).unwrap().stable);
    }
}
