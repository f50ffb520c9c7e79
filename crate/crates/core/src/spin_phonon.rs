//! Full spin-phonon dynamics under the time-dependent single-sideband
//! interaction Hamiltonian on a truncated product basis.
//!
//! Every term either conserves spin excitations plus phonons or changes
//! them by two, so the basis keeps one parity class of total quanta and,
//! optionally, a bound on the total.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSolution, TrapConfig};
use crate::coupling::lamb_dicke;
use crate::xy::{sector_masks, BasisId, CsrMatrix, StateVector};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "ionxy-spin-phonon-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Smallest step the integrator accepts before giving up, seconds.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Mode indices (0 is the COM mode).
    pub modes: Vec<usize>,
    /// Maximum phonons per mode.
    pub fock_cutoff: usize,
    /// Bound on spin excitations plus phonons above the initial excitation
    /// count; `None` keeps every state of the right parity.
    pub extra_quanta: Option<usize>,
}

impl TruncationPolicy {
    /// COM mode only with the default cutoffs for `s` initial excitations.
    pub fn single_mode(s: usize) -> Self {
        Self { modes: vec![0], fock_cutoff: default_fock_cutoff(s), extra_quanta: Some(2) }
    }

    pub fn two_modes(second: usize, s: usize) -> Self {
        Self { modes: vec![0, second], fock_cutoff: default_fock_cutoff(s), extra_quanta: Some(2) }
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.fock_cutoff < 1 {
            return Err(Error::InvalidInput("fock_cutoff must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidInput("at least one phonon mode required".into()));
        }
        for (k, m) in self.modes.iter().enumerate() {
            if *m >= n_modes {
                return Err(Error::InvalidInput(format!("mode {m} out of range")));
            }
            if self.modes[..k].contains(m) {
                return Err(Error::InvalidInput(format!("mode {m} listed twice")));
            }
        }
        Ok(())
    }
}

pub fn default_fock_cutoff(s: usize) -> usize {
    s.max(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductState {
    pub spins: u64,
    pub phonons: Vec<u8>,
}

/// Ordered list of admitted (spin mask, phonon occupations) states.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBasis {
    pub n_sites: usize,
    pub policy: TruncationPolicy,
    pub excitations: usize,
    pub states: Vec<ProductState>,
    index: HashMap<ProductState, usize>,
}

impl ProductBasis {
    /// Basis reachable from `excitations` spin flips and no phonons.
    pub fn new(n_sites: usize, policy: &TruncationPolicy, excitations: usize) -> Result<Self> {
        policy.validate(n_sites)?;
        if n_sites > 63 || excitations > n_sites {
            return Err(Error::InvalidInput(format!("{excitations} excitations on {n_sites} sites")));
        }
        let n_modes = policy.modes.len();
        let max_total = policy.extra_quanta.map(|e| excitations + e);
        let mut phonon_configs: Vec<Vec<u8>> = vec![vec![]];
        for _ in 0..n_modes {
            let mut next = Vec::new();
            for cfg in &phonon_configs {
                for n in 0..=policy.fock_cutoff {
                    let mut c = cfg.clone();
                    c.push(n as u8);
                    next.push(c);
                }
            }
            phonon_configs = next;
        }
        let mut states = Vec::new();
        for k in 0..=n_sites {
            let masks = sector_masks(n_sites, k);
            for cfg in &phonon_configs {
                let quanta = k + cfg.iter().map(|&n| n as usize).sum::<usize>();
                if quanta % 2 != excitations % 2 || max_total.is_some_and(|m| quanta > m) {
                    continue;
                }
                for &mask in &masks {
                    states.push(ProductState { spins: mask, phonons: cfg.clone() });
                }
            }
        }
        states.sort_by(|a, b| {
            let qa = a.spins.count_ones() as usize + a.phonons.iter().map(|&n| n as usize).sum::<usize>();
            let qb = b.spins.count_ones() as usize + b.phonons.iter().map(|&n| n as usize).sum::<usize>();
            (qa, a.spins.count_ones(), &a.phonons, a.spins).cmp(&(qb, b.spins.count_ones(), &b.phonons, b.spins))
        });
        let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Ok(Self { n_sites, policy: policy.clone(), excitations, states, index })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &ProductState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// FNV-1a hash of the ordered state list.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for s in &self.states {
            s.spins.to_le_bytes().into_iter().for_each(&mut feed);
            s.phonons.iter().copied().for_each(&mut feed);
        }
        h
    }

    pub fn basis_id(&self) -> BasisId {
        BasisId::Product { n_sites: self.n_sites, dimension: self.dim(), fingerprint: self.fingerprint() }
    }

    /// Spins on `sites` excited, no phonons.
    pub fn initial_state(&self, sites: &[usize]) -> Result<StateVector> {
        let spins = sites.iter().fold(0u64, |m, &s| m | (1 << s));
        let state = ProductState { spins, phonons: vec![0; self.policy.modes.len()] };
        let idx = self
            .index_of(&state)
            .ok_or_else(|| Error::InvalidInput(format!("sites {sites:?} not in basis")))?;
        let mut amps = DVector::zeros(self.dim());
        amps[idx] = Complex64::new(1.0, 0.0);
        Ok(StateVector { amplitudes: amps, basis_id: self.basis_id() })
    }

    /// Initial excitations on the first `s` sites.
    pub fn end_state(&self) -> Result<StateVector> {
        let sites: Vec<usize> = (0..self.excitations).collect();
        self.initial_state(&sites)
    }
}

/// Drive and mode data for the interaction Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinPhononSystem {
    pub rabi: f64,
    pub omega_eff: f64,
    /// Lamb-Dicke matrix, ions by modes.
    pub eta: DMatrix<f64>,
    pub mode_freqs: Vec<f64>,
}

impl SpinPhononSystem {
    pub fn from_chain(trap: &TrapConfig, chain: &ChainSolution) -> Self {
        Self {
            rabi: trap.rabi(),
            omega_eff: trap.omega_eff(),
            eta: lamb_dicke(trap, chain),
            mode_freqs: chain.mode_freqs.clone(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.eta.nrows()
    }

    fn max_frequency(&self, modes: &[usize]) -> f64 {
        modes.iter().map(|&m| self.mode_freqs[m]).fold(0.0, f64::max)
    }
}

/// One operator family `coefficient(t) * matrix` with
/// `coefficient(t) = -(Omega / 2) exp(i frequency t)`.
#[derive(Debug, Clone)]
struct Term {
    frequency: f64,
    matrix: CsrMatrix,
}

/// Sparse interaction Hamiltonian on a product basis.
#[derive(Debug, Clone)]
pub struct InteractionHamiltonian {
    rabi: f64,
    terms: Vec<Term>,
    dim: usize,
}

#[derive(Clone, Copy)]
enum Ladder {
    Lower,
    Raise,
}

impl InteractionHamiltonian {
    pub fn new(system: &SpinPhononSystem, basis: &ProductBasis) -> Result<Self> {
        if system.n_sites() != basis.n_sites {
            return Err(Error::BasisMismatch(format!(
                "system has {} sites, basis {}",
                system.n_sites(),
                basis.n_sites
            )));
        }
        let we = system.omega_eff;
        let mut terms = Vec::new();
        for (slot, &m) in basis.policy.modes.iter().enumerate() {
            let wm = system.mode_freqs[m];
            // (phonon op, spin op, phase frequency)
            let families = [
                (Ladder::Lower, Ladder::Lower, -(we + wm)),
                (Ladder::Lower, Ladder::Raise, we - wm),
                (Ladder::Raise, Ladder::Raise, we + wm),
                (Ladder::Raise, Ladder::Lower, -(we - wm)),
            ];
            for (phonon, spin, frequency) in families {
                let mut triplets = Vec::new();
                for (col, st) in basis.states.iter().enumerate() {
                    let n = st.phonons[slot] as f64;
                    let (new_n, boson) = match phonon {
                        Ladder::Lower if n > 0.0 => (n - 1.0, n.sqrt()),
                        Ladder::Raise => (n + 1.0, (n + 1.0).sqrt()),
                        _ => continue,
                    };
                    for i in 0..basis.n_sites {
                        let up = st.spins >> i & 1 == 1;
                        let spins = match (spin, up) {
                            (Ladder::Lower, true) | (Ladder::Raise, false) => st.spins ^ (1 << i),
                            _ => continue,
                        };
                        let mut phonons = st.phonons.clone();
                        phonons[slot] = new_n as u8;
                        if let Some(row) = basis.index_of(&ProductState { spins, phonons }) {
                            triplets.push((row, col, system.eta[(i, m)] * boson));
                        }
                    }
                }
                terms.push(Term { frequency, matrix: CsrMatrix::from_triplets(basis.dim(), triplets) });
            }
        }
        Ok(Self { rabi: system.rabi, terms, dim: basis.dim() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn coefficients(&self, t: f64) -> Vec<Complex64> {
        self.terms
            .iter()
            .map(|term| Complex64::from_polar(-0.5 * self.rabi, term.frequency * t))
            .collect()
    }

    /// Dense `H_I(t)`.
    pub fn dense(&self, t: f64) -> DMatrix<Complex64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (term, c) in self.terms.iter().zip(self.coefficients(t)) {
            let m = &term.matrix;
            for r in 0..m.dim {
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    h[(r, m.cols[k])] += c * m.values[k];
                }
            }
        }
        h
    }

    /// `out = -i H_I(t) psi`.
    fn derivative(&self, t: f64, psi: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        out.fill(Complex64::new(0.0, 0.0));
        let minus_i = Complex64::new(0.0, -1.0);
        for (term, c) in self.terms.iter().zip(self.coefficients(t)) {
            let c = c * minus_i;
            let m = &term.matrix;
            for r in 0..m.dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    acc += psi[m.cols[k]] * m.values[k];
                }
                out[r] += c * acc;
            }
        }
    }
}

/// Dense `H_I(t)` on the basis generated by `policy` and `excitations`.
pub fn build_interaction_hamiltonian(
    system: &SpinPhononSystem,
    basis: &ProductBasis,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    Ok(InteractionHamiltonian::new(system, basis)?.dense(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    /// Local error tolerance per step (max-norm of the embedded estimate).
    pub tolerance: f64,
    /// Step ceiling; `None` uses `2 pi / (40 (omega_eff + omega_max))`.
    pub max_step: Option<f64>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_step: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub final_norm: f64,
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `i d psi / dt = H_I(t) psi` from 0 and call `observer` at each
/// requested time (ascending, non-negative). Returns the final state.
pub fn propagate<F>(
    system: &SpinPhononSystem,
    basis: &ProductBasis,
    psi0: &StateVector,
    output_times: &[f64],
    options: &PropagationOptions,
    mut observer: F,
) -> Result<(StateVector, PropagationStats)>
where
    F: FnMut(f64, &StateVector),
{
    let id = basis.basis_id();
    if psi0.basis_id != id || psi0.amplitudes.len() != basis.dim() {
        return Err(Error::BasisMismatch("initial state not in product basis".into()));
    }
    if output_times.iter().any(|t| !(*t >= 0.0)) || output_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("output times must be ascending and non-negative".into()));
    }
    let ham = InteractionHamiltonian::new(system, basis)?;
    let h_max = options.max_step.unwrap_or_else(|| {
        2.0 * std::f64::consts::PI / (40.0 * (system.omega_eff + system.max_frequency(&basis.policy.modes)))
    });
    let dim = basis.dim();
    let mut psi = psi0.amplitudes.clone();
    let mut t = 0.0;
    let mut h = h_max;
    let mut k: Vec<DVector<Complex64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut stage = DVector::zeros(dim);
    let mut stats = PropagationStats { accepted_steps: 0, rejected_steps: 0, final_norm: 0.0 };
    let mut have_k0 = false;
    for &target in output_times {
        while t < target {
            let mut step = h.min(h_max);
            let last = target - t <= step * (1.0 + 1e-12);
            if last {
                step = target - t;
            }
            if step < MIN_STEP {
                if last {
                    t = target;
                    break;
                }
                return Err(Error::StepUnderflow { t, step });
            }
            if !have_k0 {
                ham.derivative(t, &psi, &mut k[0]);
                have_k0 = true;
            }
            for s in 1..7 {
                stage.copy_from(&psi);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        stage.axpy(Complex64::new(a * step, 0.0), kj, Complex64::new(1.0, 0.0));
                    }
                }
                let (_, tail) = k.split_at_mut(s);
                ham.derivative(t + C[s] * step, &stage, &mut tail[0]);
            }
            // stage holds the fifth-order solution (FSAL row equals B5)
            let mut err = 0.0_f64;
            for r in 0..dim {
                let mut e = Complex64::new(0.0, 0.0);
                for s in 0..7 {
                    e += k[s][r] * (B5[s] - B4[s]);
                }
                err = err.max((e * step).norm());
            }
            if err <= options.tolerance {
                psi.copy_from(&stage);
                t = if last { target } else { t + step };
                k.swap(0, 6);
                stats.accepted_steps += 1;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * (options.tolerance / err).powf(0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = (step * grow).min(h_max);
                }
            } else {
                stats.rejected_steps += 1;
                h = step * (0.9 * (options.tolerance / err).powf(0.2)).clamp(0.1, 0.9);
                if h < MIN_STEP {
                    return Err(Error::StepUnderflow { t, step: h });
                }
            }
        }
        observer(target, &StateVector { amplitudes: psi.clone(), basis_id: id });
    }
    stats.final_norm = psi.norm();
    Ok((StateVector { amplitudes: psi, basis_id: id }, stats))
}

/// Propagate and keep every sampled state.
pub fn propagate_trajectory(
    system: &SpinPhononSystem,
    basis: &ProductBasis,
    psi0: &StateVector,
    output_times: &[f64],
    options: &PropagationOptions,
) -> Result<Vec<(f64, StateVector)>> {
    let mut out = Vec::with_capacity(output_times.len());
    propagate(system, basis, psi0, output_times, options, |t, psi| out.push((t, psi.clone())))?;
    Ok(out)
}

/// Population with every spin in the ground state.
pub fn vacuum_overlap_state(basis: &ProductBasis, psi: &StateVector) -> f64 {
    basis
        .states
        .iter()
        .zip(psi.amplitudes.iter())
        .filter(|(s, _)| s.spins == 0)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Mean total phonon number.
pub fn phonon_occupation_state(basis: &ProductBasis, psi: &StateVector) -> f64 {
    basis
        .states
        .iter()
        .zip(psi.amplitudes.iter())
        .map(|(s, a)| a.norm_sqr() * s.phonons.iter().map(|&n| n as f64).sum::<f64>())
        .sum()
}

pub fn vacuum_overlap(basis: &ProductBasis, trajectory: &[(f64, StateVector)]) -> Vec<f64> {
    trajectory.iter().map(|(_, psi)| vacuum_overlap_state(basis, psi)).collect()
}

pub fn phonon_occupation(basis: &ProductBasis, trajectory: &[(f64, StateVector)]) -> Vec<f64> {
    trajectory.iter().map(|(_, psi)| phonon_occupation_state(basis, psi)).collect()
}

/// `Tr[rho (1 (x) |xy><xy|)]`: overlap of the reduced spin state with a pure
/// XY state given over spin masks.
pub fn model_fidelity_state(
    basis: &ProductBasis,
    psi: &StateVector,
    xy_masks: &[u64],
    xy_state: &StateVector,
    xy_sites: usize,
) -> Result<f64> {
    if xy_sites != basis.n_sites {
        return Err(Error::BasisMismatch(format!(
            "XY reference has {xy_sites} sites, product basis {}",
            basis.n_sites
        )));
    }
    let lookup: HashMap<u64, usize> = xy_masks.iter().enumerate().map(|(k, &m)| (m, k)).collect();
    let mut by_phonons: BTreeMap<&[u8], Complex64> = BTreeMap::new();
    for (s, a) in basis.states.iter().zip(psi.amplitudes.iter()) {
        if let Some(&k) = lookup.get(&s.spins) {
            *by_phonons.entry(&s.phonons).or_default() += xy_state.amplitudes[k].conj() * a;
        }
    }
    Ok(by_phonons.values().map(|c| c.norm_sqr()).sum::<f64>().min(1.0))
}

/// Model fidelity along a trajectory against an XY sector reference
/// evaluated at the same times.
pub fn model_fidelity(
    basis: &ProductBasis,
    trajectory: &[(f64, StateVector)],
    sector: &crate::xy::XYSector,
    xy_reference: &[StateVector],
) -> Result<Vec<f64>> {
    if trajectory.len() != xy_reference.len() {
        return Err(Error::InvalidInput("trajectory and reference lengths differ".into()));
    }
    trajectory
        .iter()
        .zip(xy_reference)
        .map(|((_, psi), xy)| model_fidelity_state(basis, psi, &sector.basis, xy, sector.n_sites))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub n_sites: usize,
    pub dimension: usize,
    pub fingerprint: u64,
    pub time: f64,
}

/// JSON header line followed by little-endian (re, im) f64 pairs.
pub fn write_checkpoint<W: Write>(mut w: W, basis: &ProductBasis, t: f64, psi: &StateVector) -> std::io::Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        n_sites: basis.n_sites,
        dimension: basis.dim(),
        fingerprint: basis.fingerprint(),
        time: t,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for a in psi.amplitudes.iter() {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R, basis: &ProductBasis) -> Result<(f64, StateVector)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::InvalidInput("checkpoint header missing".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| Error::InvalidInput(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint {} v{}", header.format, header.version)));
    }
    if header.dimension != basis.dim() || header.fingerprint != basis.fingerprint() {
        return Err(Error::BasisMismatch("checkpoint was written for another basis".into()));
    }
    let body = &bytes[split + 1..];
    if body.len() != 16 * header.dimension {
        return Err(Error::InvalidInput("checkpoint body has the wrong length".into()));
    }
    let amps = DVector::from_iterator(
        header.dimension,
        body.chunks_exact(16).map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        }),
    );
    Ok((header.time, StateVector { amplitudes: amps, basis_id: basis.basis_id() }))
}
