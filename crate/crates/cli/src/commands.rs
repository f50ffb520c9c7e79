//! Subcommand drivers: read the configuration, run the library, write tables.

use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;

use ionxy::chain::{is_linear_stable, solve_chain, ChainRecord, TrapConfig};
use ionxy::coupling::{alpha_at, fit_alpha_beta, min_detuning, AlphaSearch, FitConvention};
use ionxy::noise::NoiseConfig;
use ionxy::optimize::SearchOptions;
use ionxy::protocols::FieldHandling;
use ionxy::scenario::{build_scenario, critical_axial_frequency, AxialChoice, ScenarioOptions};
use ionxy::spin_phonon::PropagationOptions;
use ionxy::workflows::{
    leakage_study, model_fidelity_traces, noise_sweep, protocol_chain, search_trace, stroboscopic_times,
    transfer_sweep, LeakageStudyOptions, ModeSet, SweepOptions,
};

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::output::{Table, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandKind {
    Chain,
    Couplings,
    AlphaScan,
    Leakage,
    Transfer,
    Search,
    Noise,
}

impl CommandKind {
    pub fn label(self) -> &'static str {
        match self {
            CommandKind::Chain => "chain",
            CommandKind::Couplings => "couplings",
            CommandKind::AlphaScan => "alpha-scan",
            CommandKind::Leakage => "leakage",
            CommandKind::Transfer => "transfer",
            CommandKind::Search => "search",
            CommandKind::Noise => "noise",
        }
    }

    /// Keys accepted on top of the trap keys.
    pub fn extra_keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::Chain => &[],
            CommandKind::Couplings => &["alpha_target", "fit_convention"],
            CommandKind::AlphaScan => &["mu_max_mhz", "mu_points", "fit_convention"],
            CommandKind::Leakage => &[
                "alpha_target",
                "excitations",
                "modes",
                "periods",
                "samples",
                "tolerance",
                "omega_c_mhz",
                "fidelity",
            ],
            CommandKind::Transfer => &["alpha_target", "n_list", "budget", "samples", "fields"],
            CommandKind::Search => &["alpha_target", "marked", "samples"],
            CommandKind::Noise => {
                &["alpha_target", "n_list", "t2_ms", "n_samples", "field_variance", "samples", "budget", "fields"]
            }
        }
    }

    fn default_ions(self) -> usize {
        match self {
            CommandKind::Chain => 3,
            _ => 10,
        }
    }
}

/// Preset parameter sets for the reproduced figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PaperFig {
    #[value(name = "2a")]
    Fig2a,
    #[value(name = "2b")]
    Fig2b,
    #[value(name = "2c")]
    Fig2c,
    #[value(name = "2d")]
    Fig2d,
    #[value(name = "3a")]
    Fig3a,
    #[value(name = "3b")]
    Fig3b,
    #[value(name = "3c")]
    Fig3c,
    #[value(name = "4")]
    Fig4,
    #[value(name = "5")]
    Fig5,
}

impl PaperFig {
    pub fn command(self) -> CommandKind {
        match self {
            PaperFig::Fig4 => CommandKind::Transfer,
            PaperFig::Fig5 => CommandKind::Noise,
            _ => CommandKind::Leakage,
        }
    }

    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            PaperFig::Fig2a => &[("n_ions", "10"), ("alpha_target", "0.8"), ("modes", "1")],
            PaperFig::Fig2b => &[("n_ions", "10"), ("alpha_target", "0.4"), ("modes", "1")],
            PaperFig::Fig2c => &[("n_ions", "10"), ("alpha_target", "0.2"), ("modes", "1")],
            PaperFig::Fig2d => &[("n_ions", "10"), ("alpha_target", "0.2"), ("modes", "2")],
            PaperFig::Fig3a => &[("n_ions", "10"), ("alpha_target", "0.2"), ("modes", "1"), ("fidelity", "true")],
            PaperFig::Fig3b => &[("n_ions", "10"), ("alpha_target", "0.2"), ("modes", "2"), ("fidelity", "true")],
            PaperFig::Fig3c => &[
                ("n_ions", "10"),
                ("alpha_target", "0.2"),
                ("modes", "1"),
                ("excitations", "2"),
                ("fidelity", "true"),
            ],
            PaperFig::Fig4 => &[("alpha_target", "0.2,0.4"), ("n_list", "8..52:4")],
            PaperFig::Fig5 => &[
                ("alpha_target", "0.2,0.4,0.6"),
                ("n_list", "8..52:4"),
                ("t2_ms", "10"),
                ("n_samples", "500"),
            ],
        }
    }
}

pub struct Context<'a> {
    pub config: &'a ConfigFile,
    pub seed: u64,
    pub writer: &'a mut Writer,
}

pub fn run(kind: CommandKind, ctx: &mut Context) -> Result<(), CliError> {
    ctx.config.check_keys(kind.extra_keys())?;
    let trap = ctx.config.trap(kind.default_ions())?;
    match kind {
        CommandKind::Chain => cmd_chain(ctx, &trap),
        CommandKind::Couplings => cmd_couplings(ctx, &trap),
        CommandKind::AlphaScan => cmd_alpha_scan(ctx, &trap),
        CommandKind::Leakage => cmd_leakage(ctx, &trap),
        CommandKind::Transfer => cmd_transfer(ctx, &trap),
        CommandKind::Search => cmd_search(ctx, &trap),
        CommandKind::Noise => cmd_noise(ctx, &trap),
    }
}

fn axial_choice(cfg: &ConfigFile, trap: &TrapConfig) -> AxialChoice {
    if cfg.get("omega_z_mhz").is_some() {
        AxialChoice::Fixed(trap.omega_z)
    } else {
        AxialChoice::default()
    }
}

fn fit_convention(cfg: &ConfigFile) -> Result<FitConvention, CliError> {
    match cfg.get("fit_convention").unwrap_or("end_ion") {
        "end_ion" => Ok(FitConvention::EndIonChainIndex),
        "all_pairs" => Ok(FitConvention::AllPairsChainIndex),
        "end_ion_axial" => Ok(FitConvention::EndIonAxial),
        "centre_ion" => Ok(FitConvention::CentreIonChainIndex),
        other => Err(CliError::Config(format!(
            "invalid fit_convention `{other}`; expected end_ion, all_pairs, end_ion_axial or centre_ion"
        ))),
    }
}

fn field_handling(cfg: &ConfigFile) -> Result<FieldHandling, CliError> {
    match cfg.get("fields").unwrap_or("compensated") {
        "compensated" => Ok(FieldHandling::Compensated),
        "retained" => Ok(FieldHandling::Retained),
        other => Err(CliError::Config(format!("invalid fields `{other}`; expected compensated or retained"))),
    }
}

fn sweep_options(ctx: &Context, trap: &TrapConfig) -> Result<SweepOptions, CliError> {
    let cfg = ctx.config;
    Ok(SweepOptions {
        axial: axial_choice(cfg, trap),
        search: SearchOptions {
            budget: cfg.usize_or("budget", SearchOptions::default().budget)?,
            rng_seed: ctx.seed,
            ..SearchOptions::default()
        },
        fields: field_handling(cfg)?,
        samples: cfg.usize_or("samples", SweepOptions::default().samples)?,
    })
}

/// Trap with the axial frequency fixed the way scenarios pick it.
fn resolved_trap(cfg: &ConfigFile, trap: &TrapConfig) -> Result<TrapConfig, CliError> {
    if cfg.get("omega_z_mhz").is_some() || trap.n_ions == 1 {
        return Ok(*trap);
    }
    let AxialChoice::NearCritical { fraction } = AxialChoice::default() else {
        unreachable!("default axial choice is near-critical")
    };
    Ok(trap.with_axial(fraction * critical_axial_frequency(trap)?))
}

#[derive(Serialize)]
struct ChainDocument {
    trap: TrapConfig,
    stable: bool,
    chain: ChainRecord,
}

fn cmd_chain(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let trap = resolved_trap(ctx.config, trap)?;
    let chain = solve_chain(&trap)?;
    let stable = is_linear_stable(&trap)?.stable;
    let record = chain.to_record();
    let mut positions = Table::new(&["ion", "position", "position_m"]);
    for (i, (u, x)) in record.positions_dimensionless.iter().zip(&record.positions_m).enumerate() {
        positions.push(vec![i.into(), (*u).into(), (*x).into()]);
    }
    let mut modes = Table::new(&["mode", "omega"]);
    for (m, w) in record.mode_freqs_rad_s.iter().enumerate() {
        modes.push(vec![m.into(), (*w).into()]);
    }
    ctx.writer.document("chain", &ChainDocument { trap, stable, chain: record })?;
    ctx.writer.table("positions", &positions)?;
    ctx.writer.table("modes", &modes)
}

fn scenario_options(cfg: &ConfigFile, trap: &TrapConfig) -> Result<ScenarioOptions, CliError> {
    let fixed = cfg.get("alpha_target").is_none() && cfg.get("mu_mhz").is_some();
    Ok(ScenarioOptions {
        axial: axial_choice(cfg, trap),
        search: AlphaSearch { convention: fit_convention(cfg)?, ..AlphaSearch::default() },
        fixed_detuning: fixed.then_some(trap.detuning_mu),
        ..ScenarioOptions::new(cfg.f64_or("alpha_target", 0.2)?)
    })
}

#[derive(Serialize)]
struct CouplingSummary {
    n_ions: usize,
    omega_z: f64,
    omega_com: f64,
    mu: f64,
    mu_min: f64,
    omega_eff: f64,
    alpha_target: f64,
    alpha_achieved: f64,
    target_unreachable: bool,
    alpha_with_beta: f64,
    beta: f64,
    fit_residual: f64,
}

fn cmd_couplings(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let opts = scenario_options(ctx.config, trap)?;
    let s = build_scenario(trap, &opts)?;
    let n = s.trap.n_ions;
    let mut j = Table::new(&["i", "j", "J"]);
    for a in 0..n {
        for b in 0..n {
            j.push(vec![a.into(), b.into(), s.couplings.j[(a, b)].into()]);
        }
    }
    let mut h = Table::new(&["i", "h"]);
    for (i, v) in s.couplings.h.iter().enumerate() {
        h.push(vec![i.into(), (*v).into()]);
    }
    let positions = s.chain.equilibrium.positions.clone();
    let (alpha_with_beta, beta, fit_residual) = if n >= 4 {
        let fit = fit_alpha_beta(&s.couplings.j, opts.search.convention, Some(&positions), true)?;
        (fit.alpha, fit.beta, fit.residual)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let summary = CouplingSummary {
        n_ions: n,
        omega_z: s.trap.omega_z,
        omega_com: s.chain.com_frequency(),
        mu: s.detuning.mu,
        mu_min: s.detuning.mu_min,
        omega_eff: s.couplings.omega_eff,
        alpha_target: opts.alpha_target,
        alpha_achieved: s.detuning.achieved_alpha,
        target_unreachable: s.detuning.target_unreachable,
        alpha_with_beta,
        beta,
        fit_residual,
    };
    ctx.writer.document("couplings_summary", &summary)?;
    ctx.writer.table("couplings", &j)?;
    ctx.writer.table("fields", &h)
}

#[derive(Serialize)]
struct AlphaScanSummary {
    n_ions: usize,
    omega_z: f64,
    omega_com: f64,
    mu_min: f64,
    mu_max: f64,
    points: usize,
}

fn cmd_alpha_scan(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let cfg = ctx.config;
    let convention = fit_convention(cfg)?;
    let trap = resolved_trap(cfg, trap)?;
    let chain = solve_chain(&trap)?;
    let mu_min = min_detuning(&trap, &chain);
    let mu_max = cfg.frequency_opt("mu_max_mhz")?.unwrap_or(AlphaSearch::default().window_factor * chain.com_frequency());
    let points = cfg.usize_or("mu_points", 41)?;
    if points == 0 {
        return Err(CliError::Config("mu_points must be at least 1".into()));
    }
    if points > 1 && !(mu_max > mu_min) {
        return Err(CliError::Config(format!("mu_max ({mu_max:e} rad/s) must exceed mu_min ({mu_min:e} rad/s)")));
    }
    let grid: Vec<f64> = if points == 1 {
        vec![mu_min]
    } else {
        (0..points).map(|k| mu_min + (mu_max - mu_min) * k as f64 / (points - 1) as f64).collect()
    };
    let alphas: Vec<f64> =
        grid.par_iter().map(|&mu| alpha_at(&trap, &chain, mu, convention)).collect::<Result<_, _>>()?;
    let mut table = Table::new(&["mu", "alpha"]);
    for (mu, a) in grid.iter().zip(&alphas) {
        table.push(vec![(*mu).into(), (*a).into()]);
    }
    let summary = AlphaScanSummary {
        n_ions: trap.n_ions,
        omega_z: trap.omega_z,
        omega_com: chain.com_frequency(),
        mu_min,
        mu_max: *grid.last().unwrap(),
        points,
    };
    ctx.writer.document("alpha_scan_summary", &summary)?;
    ctx.writer.table("alpha_scan", &table)
}

#[derive(Serialize)]
struct LeakageSummary {
    n_ions: usize,
    excitations: usize,
    included_modes: Vec<usize>,
    basis_dim: usize,
    omega_z: f64,
    omega_com: f64,
    mu: f64,
    omega_eff: f64,
    alpha_target: f64,
    alpha_achieved: f64,
    com_detuning: f64,
    r: f64,
    r_minus_1: f64,
    fit_residual_fraction: f64,
    renormalization_factor: f64,
    final_norm: f64,
    stroboscopic_min_fidelity_bare: Option<f64>,
    stroboscopic_min_fidelity_renormalized: Option<f64>,
}

fn cmd_leakage(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let cfg = ctx.config;
    let defaults = LeakageStudyOptions::default();
    let modes = match cfg.usize_or("modes", 1)? {
        1 => ModeSet::Single,
        2 => ModeSet::Two,
        m => return Err(CliError::Config(format!("modes must be 1 or 2, got {m}"))),
    };
    let propagation = PropagationOptions {
        tolerance: cfg.f64_or("tolerance", defaults.propagation.tolerance)?,
        ..defaults.propagation
    };
    let opts = LeakageStudyOptions {
        alpha_target: cfg.f64_or("alpha_target", defaults.alpha_target)?,
        excitations: cfg.usize_or("excitations", defaults.excitations)?,
        modes,
        periods: cfg.f64_or("periods", defaults.periods)?,
        samples: cfg.usize_or("samples", defaults.samples)?,
        propagation,
        pinned_com: cfg.frequency_opt("omega_c_mhz")?,
        axial: axial_choice(cfg, trap),
        ..defaults
    };
    let with_fidelity = cfg.bool_or("fidelity", false)?;
    let study = leakage_study(trap, &opts)?;

    let mut trace = Table::new(&["t", "E_sim", "E_norm", "E_norm_shifted", "n_bar"]);
    for k in 0..study.times.len() {
        trace.push(vec![
            study.times[k].into(),
            study.e_sim[k].into(),
            study.e_bare[k].into(),
            study.e_fitted[k].into(),
            study.n_bar[k].into(),
        ]);
    }

    let mut strobe_min = (None, None);
    let mut fidelity_table = None;
    if with_fidelity {
        let t_end = *study.times.last().unwrap();
        let k_max = (t_end * study.shifted_detuning().abs() / (2.0 * std::f64::consts::PI)).floor() as usize;
        let strobe = stroboscopic_times(&study, k_max);
        let mut times: Vec<(f64, bool)> =
            study.times.iter().map(|&t| (t, false)).chain(strobe.iter().map(|&t| (t, true))).collect();
        times.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let grid: Vec<f64> = times.iter().map(|p| p.0).collect();
        let f = model_fidelity_traces(&study, &grid, &opts.propagation)?;
        let mut table = Table::new(&["t", "F_J", "F_J_prime", "stroboscopic"]);
        let (mut min_bare, mut min_renorm) = (f64::INFINITY, f64::INFINITY);
        for (k, &(t, is_strobe)) in times.iter().enumerate() {
            table.push(vec![t.into(), f.bare[k].into(), f.renormalized[k].into(), usize::from(is_strobe).into()]);
            if is_strobe {
                min_bare = min_bare.min(f.bare[k]);
                min_renorm = min_renorm.min(f.renormalized[k]);
            }
        }
        strobe_min = (Some(min_bare), Some(min_renorm));
        fidelity_table = Some(table);
    }

    let s = &study.scenario;
    let summary = LeakageSummary {
        n_ions: s.trap.n_ions,
        excitations: opts.excitations,
        included_modes: study.included_modes.clone(),
        basis_dim: study.basis.dim(),
        omega_z: s.trap.omega_z,
        omega_com: s.chain.com_frequency(),
        mu: s.detuning.mu,
        omega_eff: study.system.omega_eff,
        alpha_target: opts.alpha_target,
        alpha_achieved: s.detuning.achieved_alpha,
        com_detuning: study.com_detuning(),
        r: study.fit.r,
        r_minus_1: study.fit.r - 1.0,
        fit_residual_fraction: study.fit.residual_fraction,
        renormalization_factor: study.renormalization.factor_summary,
        final_norm: study.stats.final_norm,
        stroboscopic_min_fidelity_bare: strobe_min.0,
        stroboscopic_min_fidelity_renormalized: strobe_min.1,
    };
    ctx.writer.document("leakage_summary", &summary)?;
    ctx.writer.table("leakage", &trace)?;
    if let Some(table) = fidelity_table {
        ctx.writer.table("fidelity", &table)?;
    }
    Ok(())
}

fn cmd_transfer(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let cfg = ctx.config;
    let ns = cfg.usize_list_or("n_list", &[trap.n_ions])?;
    let alphas = cfg.f64_list_or("alpha_target", &[0.2])?;
    let opts = sweep_options(ctx, trap)?;
    let mut table = Table::new(&[
        "N",
        "alpha_target",
        "alpha_achieved",
        "F_exp",
        "F_ideal",
        "T_tilde",
        "T_tilde_ideal",
        "gamma",
        "T",
        "F_exp_end",
        "F_ideal_end",
    ]);
    for &alpha in &alphas {
        for row in transfer_sweep(&ns, trap, alpha, &opts)? {
            let (e, i) = (&row.experimental, &row.idealized);
            table.push(vec![
                row.n.into(),
                alpha.into(),
                row.alpha_achieved.into(),
                row.f_exp().into(),
                row.f_ideal().into(),
                e.report.scaled_time.into(),
                i.report.scaled_time.into(),
                e.config.gamma.into(),
                e.config.duration.into(),
                e.report.fidelity_at_end.into(),
                i.report.fidelity_at_end.into(),
            ]);
        }
    }
    ctx.writer.table("transfer", &table)
}

fn cmd_search(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let cfg = ctx.config;
    let n = trap.n_ions;
    let marked = cfg.usize_or("marked", n / 2)?;
    if marked >= n {
        return Err(CliError::Config(format!("marked = {marked} is outside the chain of {n} ions")));
    }
    let opts = SweepOptions { samples: cfg.usize_or("samples", 200)?, ..sweep_options(ctx, trap)? };
    let chain = protocol_chain(n, trap, cfg.f64_or("alpha_target", 0.2)?, &opts)?;
    let (times, trace) = search_trace(&chain, marked, opts.samples)?;
    let mut table = Table::new(&["t", "P_marked"]);
    for (t, p) in times.iter().zip(&trace) {
        table.push(vec![(*t).into(), (*p).into()]);
    }
    ctx.writer.table("search", &table)
}

fn cmd_noise(ctx: &mut Context, trap: &TrapConfig) -> Result<(), CliError> {
    let cfg = ctx.config;
    let ns = cfg.usize_list_or("n_list", &[trap.n_ions])?;
    let alphas = cfg.f64_list_or("alpha_target", &[0.2])?;
    let defaults = NoiseConfig::default();
    let noise = NoiseConfig {
        t2: cfg.f64_or("t2_ms", defaults.t2 * 1e3)? * 1e-3,
        n_samples: cfg.usize_or("n_samples", defaults.n_samples)?,
        rng_seed: ctx.seed,
        field_variance: cfg.f64_opt("field_variance")?,
    };
    noise.validate()?;
    let opts = sweep_options(ctx, trap)?;
    let mut table =
        Table::new(&["N", "alpha_target", "mean_F", "std_F", "n_samples", "t2", "noiseless_F", "standard_error"]);
    for &alpha in &alphas {
        for row in noise_sweep(&ns, trap, alpha, &noise, &opts)? {
            table.push(vec![
                row.n.into(),
                alpha.into(),
                row.mean.into(),
                row.std.into(),
                noise.n_samples.into(),
                noise.t2.into(),
                row.noiseless.into(),
                row.standard_error.into(),
            ]);
        }
    }
    ctx.writer.table("noise", &table)
}

