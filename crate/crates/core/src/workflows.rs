//! End-to-end studies built from the lower-level modules: leakage traces with
//! frequency fits, model fidelity against the renormalised XY model, transfer
//! sweeps and dephasing sweeps.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::chain::TrapConfig;
use crate::coupling::CouplingModel;
use crate::leakage::{
    fit_effective_frequency, renormalized_couplings, second_mode_index, FrequencyFit, FrequencyFitOptions,
    LeakageModel, RenormalizationResult,
};
use crate::noise::{noisy_transfer_ensemble, standard_error, NoiseConfig, NoiseEnsemble};
use crate::optimize::SearchOptions;
use crate::protocols::{
    analytic_gamma, idealized_couplings, optimize_protocol, protocol_fields, run_search, seed_config, FieldHandling,
    OptimizedProtocol,
};
use crate::scenario::{build_scenario, AxialChoice, Scenario, ScenarioOptions};
use crate::spin_phonon::{
    model_fidelity_state, phonon_occupation_state, propagate, vacuum_overlap_state, PropagationOptions,
    PropagationStats, ProductBasis, SpinPhononSystem, TruncationPolicy,
};
use crate::xy::{build_sector, Propagator, StateVector, XYSector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModeSet {
    /// COM mode only.
    #[default]
    Single,
    /// COM plus the next most significant mode.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageStudyOptions {
    pub alpha_target: f64,
    pub excitations: usize,
    pub modes: ModeSet,
    /// Trace length in periods of the bare COM detuning.
    pub periods: f64,
    pub samples: usize,
    pub propagation: PropagationOptions,
    pub pinned_com: Option<f64>,
    pub axial: AxialChoice,
    pub fit: FrequencyFitOptions,
}

impl Default for LeakageStudyOptions {
    fn default() -> Self {
        Self {
            alpha_target: 0.2,
            excitations: 1,
            modes: ModeSet::Single,
            periods: 10.0,
            samples: 401,
            propagation: PropagationOptions::default(),
            pinned_com: None,
            axial: AxialChoice::default(),
            fit: FrequencyFitOptions::default(),
        }
    }
}

/// Simulated leakage of one chain with its analytic description.
#[derive(Debug, Clone)]
pub struct LeakageStudy {
    pub scenario: Scenario,
    pub system: SpinPhononSystem,
    pub basis: ProductBasis,
    pub included_modes: Vec<usize>,
    pub model: LeakageModel,
    /// Couplings restricted to the simulated modes.
    pub restricted: CouplingModel,
    pub times: Vec<f64>,
    /// Population with every spin down.
    pub e_sim: Vec<f64>,
    pub n_bar: Vec<f64>,
    /// Analytic norm at `r = 1`.
    pub e_bare: Vec<f64>,
    /// Analytic norm at the fitted `r`.
    pub e_fitted: Vec<f64>,
    pub fit: FrequencyFit,
    pub renormalization: RenormalizationResult,
    pub stats: PropagationStats,
}

impl LeakageStudy {
    /// Bare COM detuning `omega_eff - omega_c`.
    pub fn com_detuning(&self) -> f64 {
        self.system.omega_eff - self.system.mode_freqs[0]
    }

    /// Shifted COM detuning `r omega_eff - omega_c`.
    pub fn shifted_detuning(&self) -> f64 {
        self.fit.r * self.system.omega_eff - self.system.mode_freqs[0]
    }

    pub fn initial_sites(&self) -> Vec<usize> {
        (0..self.basis.excitations).collect()
    }
}

/// Simulate a chain at the target range, fit the effective frequency and
/// renormalise the couplings of the simulated modes.
///
/// For one excitation the fit uses the all-spins-down population; for more
/// it uses the phonon number divided by the excitation count.
pub fn leakage_study(base: &TrapConfig, options: &LeakageStudyOptions) -> Result<LeakageStudy> {
    if options.excitations == 0 || options.samples < 2 || !(options.periods > 0.0) {
        return Err(Error::InvalidInput("need excitations >= 1, samples >= 2 and positive periods".into()));
    }
    let scenario = build_scenario(
        base,
        &ScenarioOptions {
            axial: options.axial.clone(),
            pinned_com: options.pinned_com,
            ..ScenarioOptions::new(options.alpha_target)
        },
    )?;
    let system = SpinPhononSystem::from_chain(&scenario.trap, &scenario.chain);
    let n = scenario.trap.n_ions;
    let s = options.excitations;
    let (policy, included_modes) = match options.modes {
        ModeSet::Single => (TruncationPolicy::single_mode(s), vec![0]),
        ModeSet::Two => {
            let second = second_mode_index(&system.eta, system.rabi, system.omega_eff, &system.mode_freqs)
                .ok_or_else(|| Error::InvalidInput("two-mode study needs at least two ions".into()))?;
            (TruncationPolicy::two_modes(second, s), vec![0, second])
        }
    };
    let basis = ProductBasis::new(n, &policy, s)?;
    let model = match options.modes {
        ModeSet::Single => LeakageModel::Single {
            eta: system.eta[(0, 0)],
            rabi: system.rabi,
            omega_eff: system.omega_eff,
            omega_mode: system.mode_freqs[0],
        },
        ModeSet::Two => {
            let m2 = included_modes[1];
            LeakageModel::TwoMode {
                eta1: (0..n).map(|i| system.eta[(i, 0)]).collect(),
                eta2: (0..n).map(|i| system.eta[(i, m2)]).collect(),
                rabi: system.rabi,
                omega_eff: system.omega_eff,
                omega_modes: (system.mode_freqs[0], system.mode_freqs[m2]),
            }
        }
    };
    let detuning = system.omega_eff - system.mode_freqs[0];
    let t_end = options.periods * 2.0 * PI / detuning.abs();
    let times: Vec<f64> =
        (0..options.samples).map(|k| t_end * k as f64 / (options.samples - 1) as f64).collect();
    let sites: Vec<usize> = (0..s).collect();
    let psi0 = basis.initial_state(&sites)?;
    let mut e_sim = Vec::with_capacity(times.len());
    let mut n_bar = Vec::with_capacity(times.len());
    let (_, stats) = propagate(&system, &basis, &psi0, &times, &options.propagation, |_, psi| {
        e_sim.push(vacuum_overlap_state(&basis, psi));
        n_bar.push(phonon_occupation_state(&basis, psi));
    })?;
    let target: Vec<f64> = if s == 1 { e_sim.clone() } else { n_bar.iter().map(|x| x / s as f64).collect() };
    let fit = fit_effective_frequency(&times, &target, &model, &options.fit)?;
    let restricted = CouplingModel::compute(&scenario.trap, &scenario.chain, Some(&included_modes), 0)?;
    let renormalization = renormalized_couplings(&restricted, &system.mode_freqs, fit.r, &[0]);
    Ok(LeakageStudy {
        e_bare: model.trace(1.0, &times),
        e_fitted: model.trace(fit.r, &times),
        scenario,
        system,
        basis,
        included_modes,
        model,
        restricted,
        times,
        e_sim,
        n_bar,
        fit,
        renormalization,
        stats,
    })
}

/// Model fidelity of the full dynamics against XY references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityTraces {
    pub times: Vec<f64>,
    /// Reference with the bare couplings.
    pub bare: Vec<f64>,
    /// Reference with the renormalised couplings.
    pub renormalized: Vec<f64>,
}

/// Stroboscopic times `2 pi k / Delta'_c` for `k = 0..=k_max`.
pub fn stroboscopic_times(study: &LeakageStudy, k_max: usize) -> Vec<f64> {
    let d = study.shifted_detuning().abs();
    (0..=k_max).map(|k| 2.0 * PI * k as f64 / d).collect()
}

/// Propagate the study's system over `times` and compare the spin state with
/// XY evolution under `J` and `J'`, both with the simulated-mode fields.
pub fn model_fidelity_traces(study: &LeakageStudy, times: &[f64], options: &PropagationOptions) -> Result<FidelityTraces> {
    let s = study.basis.excitations;
    let fields = &study.restricted.h;
    let sectors = [
        build_sector(&study.restricted.j, fields, s)?,
        build_sector(&study.renormalization.j_prime, fields, s)?,
    ];
    let props: Vec<Propagator> = sectors.iter().map(Propagator::new).collect();
    let sites = study.initial_sites();
    let starts: Vec<StateVector> = sectors.iter().map(|x| x.basis_state(&sites)).collect::<Result<_>>()?;
    let psi0 = study.basis.initial_state(&sites)?;
    let mut out = [Vec::with_capacity(times.len()), Vec::with_capacity(times.len())];
    let mut failure = None;
    propagate(&study.system, &study.basis, &psi0, times, options, |t, psi| {
        for k in 0..2 {
            match xy_overlap(&study.basis, psi, &sectors[k], &props[k], &starts[k], t) {
                Ok(f) => out[k].push(f),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let [bare, renormalized] = out;
    Ok(FidelityTraces { times: times.to_vec(), bare, renormalized })
}

fn xy_overlap(
    basis: &ProductBasis,
    psi: &StateVector,
    sector: &XYSector,
    prop: &Propagator,
    start: &StateVector,
    t: f64,
) -> Result<f64> {
    let xy = StateVector { amplitudes: prop.apply(&start.amplitudes, t), basis_id: sector.basis_id() };
    model_fidelity_state(basis, psi, &sector.basis, &xy, sector.n_sites)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub axial: AxialChoice,
    pub search: SearchOptions,
    pub fields: FieldHandling,
    /// Trace samples per protocol run.
    pub samples: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { axial: AxialChoice::default(), search: SearchOptions::default(), fields: FieldHandling::default(), samples: 200 }
    }
}

/// One chain prepared for the marked-site protocols with physical couplings.
#[derive(Debug, Clone)]
pub struct ProtocolChain {
    pub scenario: Scenario,
    /// Single-excitation hopping, rad/s.
    pub hop: DMatrix<f64>,
    pub fields: Vec<f64>,
    pub lambda_max: f64,
}

pub fn protocol_chain(n: usize, base: &TrapConfig, alpha_target: f64, options: &SweepOptions) -> Result<ProtocolChain> {
    let trap = TrapConfig { n_ions: n, ..*base };
    let scenario = build_scenario(
        &trap,
        &ScenarioOptions { axial: options.axial.clone(), ..ScenarioOptions::new(alpha_target) },
    )?;
    let hop = scenario.couplings.hopping();
    let fields = protocol_fields(&scenario.couplings, options.fields);
    let lambda_max = analytic_gamma(&hop)?.lambda_max;
    Ok(ProtocolChain { scenario, hop, fields, lambda_max })
}

/// Optimised transfer between the end ions with the marker set to the
/// largest hopping eigenvalue, so the analytic seed has `gamma = 1`.
pub fn optimized_end_to_end(chain: &ProtocolChain, options: &SweepOptions) -> Result<OptimizedProtocol> {
    let n = chain.hop.nrows();
    let seed = seed_config(&chain.hop, 0, n - 1, chain.lambda_max)?;
    optimize_protocol(&chain.hop, &chain.fields, &seed, &options.search, options.samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub n: usize,
    pub alpha_target: f64,
    pub alpha_achieved: f64,
    pub target_unreachable: bool,
    pub mu: f64,
    pub mu_min: f64,
    pub experimental: OptimizedProtocol,
    pub idealized: OptimizedProtocol,
}

impl TransferRow {
    pub fn f_exp(&self) -> f64 {
        self.experimental.report.fidelity_peak
    }

    pub fn f_ideal(&self) -> f64 {
        self.idealized.report.fidelity_peak
    }
}

/// Optimised end-to-end transfer for experimental and idealised couplings.
pub fn transfer_sweep(ns: &[usize], base: &TrapConfig, alpha_target: f64, options: &SweepOptions) -> Result<Vec<TransferRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidInput("empty list of chain lengths".into()));
    }
    ns.par_iter()
        .map(|&n| {
            let chain = protocol_chain(n, base, alpha_target, options)?;
            let experimental = optimized_end_to_end(&chain, options)?;
            let ideal = idealized_couplings(n, alpha_target);
            let seed = seed_config(&ideal, 0, n - 1, 1.0)?;
            let idealized = optimize_protocol(&ideal, &vec![0.0; n], &seed, &options.search, options.samples)?;
            let d = chain.scenario.detuning;
            Ok(TransferRow {
                n,
                alpha_target,
                alpha_achieved: d.achieved_alpha,
                target_unreachable: d.target_unreachable,
                mu: d.mu,
                mu_min: d.mu_min,
                experimental,
                idealized,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub n: usize,
    pub alpha_target: f64,
    pub alpha_achieved: f64,
    pub noiseless: f64,
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
    pub ensemble: NoiseEnsemble,
}

/// Dephasing ensembles of the optimised experimental protocol, evaluated at
/// the switch-off time.
pub fn noise_sweep(
    ns: &[usize],
    base: &TrapConfig,
    alpha_target: f64,
    noise: &NoiseConfig,
    options: &SweepOptions,
) -> Result<Vec<NoiseRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidInput("empty list of chain lengths".into()));
    }
    ns.iter()
        .map(|&n| {
            let chain = protocol_chain(n, base, alpha_target, options)?;
            let opt = optimized_end_to_end(&chain, options)?;
            let ensemble = noisy_transfer_ensemble(&chain.hop, &chain.fields, &opt.config, noise, options.samples)?;
            let k = ensemble.times.len() - 1;
            Ok(NoiseRow {
                n,
                alpha_target,
                alpha_achieved: chain.scenario.detuning.achieved_alpha,
                noiseless: opt.report.fidelity_at_end,
                mean: ensemble.mean[k],
                std: ensemble.std[k],
                standard_error: standard_error(&ensemble.final_fidelities),
                ensemble,
            })
        })
        .collect()
}

/// Marked-site population from the uniform superposition, with the marker
/// equal to the largest hopping eigenvalue and `gamma = 1`.
pub fn search_trace(chain: &ProtocolChain, marked: usize, samples: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = chain.hop.nrows();
    let t_end = PI * (n as f64).sqrt() / chain.lambda_max;
    let times = crate::protocols::sample_times(t_end, samples);
    let trace = run_search(&chain.hop, &chain.fields, 1.0, chain.lambda_max, marked, &times)?;
    Ok((times, trace))
}
