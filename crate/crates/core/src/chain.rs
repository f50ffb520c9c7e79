//! Equilibrium geometry and transverse normal modes of a linear ion chain.
//!
//! Positions are solved in the dimensionless units of the Coulomb length
//! scale `l = (e^2 / (4 pi eps0 M omega_z^2))^(1/3)`, where the axial
//! potential reads `1/2 sum u_i^2 + sum_{i<j} 1/|u_i - u_j|` in units of
//! `M omega_z^2 l^2`. Transverse mode frequencies come back in rad/s.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{coulomb_constant, mhz_to_angular, AMU, DELTA_K_355NM};
use crate::coupling::{self, FitConvention};
use crate::{Error, Result};

const NEWTON_MAX_ITER: usize = 200;
const GRADIENT_TOL: f64 = 1e-12;

/// Physical trap and laser parameters. Frequencies are angular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub n_ions: usize,
    /// Ion mass in kg.
    pub ion_mass: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    /// Raman wave-vector difference, 1/m.
    pub delta_k: f64,
    /// Total Rabi frequency shared by the chain; each ion sees `rabi_total / n_ions`.
    pub rabi_total: f64,
    pub detuning_mu: f64,
}

impl TrapConfig {
    /// The 171Yb+ parameter set used throughout the reproduction experiments.
    ///
    /// `omega_z` and `detuning_mu` are placeholders; callers normally pick them
    /// with [`choose_axial_frequency`] and
    /// [`crate::coupling::detuning_for_alpha`].
    pub fn reference(n_ions: usize) -> Self {
        Self {
            n_ions,
            ion_mass: 171.0 * AMU,
            omega_x: mhz_to_angular(6.0),
            omega_y: mhz_to_angular(5.0),
            omega_z: mhz_to_angular(0.5),
            delta_k: DELTA_K_355NM,
            rabi_total: mhz_to_angular(1.0),
            detuning_mu: mhz_to_angular(6.02),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidInput("n_ions must be at least 1".into()));
        }
        let positive = [
            ("ion_mass", self.ion_mass),
            ("omega_x", self.omega_x),
            ("omega_y", self.omega_y),
            ("omega_z", self.omega_z),
            ("delta_k", self.delta_k),
            ("rabi_total", self.rabi_total),
            ("detuning_mu", self.detuning_mu),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.omega_z >= self.omega_x.min(self.omega_y) {
            return Err(Error::InvalidInput(
                "omega_z must be below both transverse frequencies".into(),
            ));
        }
        Ok(())
    }

    /// Per-ion Rabi frequency.
    pub fn rabi(&self) -> f64 {
        self.rabi_total / self.n_ions as f64
    }

    pub fn omega_eff(&self) -> f64 {
        self.rabi().hypot(self.detuning_mu)
    }

    pub fn transverse(&self, axis: TransverseAxis) -> f64 {
        match axis {
            TransverseAxis::X => self.omega_x,
            TransverseAxis::Y => self.omega_y,
        }
    }

    pub fn with_axial(mut self, omega_z: f64) -> Self {
        self.omega_z = omega_z;
        self
    }

    pub fn with_detuning(mut self, mu: f64) -> Self {
        self.detuning_mu = mu;
        self
    }

    /// Detuning that places `omega_eff` at `omega_eff`.
    pub fn detuning_for_omega_eff(&self, omega_eff: f64) -> f64 {
        let rabi = self.rabi();
        (omega_eff * omega_eff - rabi * rabi).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransverseAxis {
    X,
    Y,
}

/// Dimensionless equilibrium positions (sorted ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub positions: Vec<f64>,
    /// Length scale in meters (zero when solved without a trap).
    pub length_scale: f64,
    pub residual: f64,
}

impl Equilibrium {
    pub fn positions_m(&self) -> Vec<f64> {
        self.positions.iter().map(|u| u * self.length_scale).collect()
    }
}

/// Equilibrium plus the transverse mode matrix `b_im` (column m is mode m)
/// and frequencies sorted descending, so mode 0 is the centre-of-mass mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSolution {
    pub equilibrium: Equilibrium,
    pub axis: TransverseAxis,
    pub mode_matrix: DMatrix<f64>,
    pub mode_freqs: Vec<f64>,
}

impl ChainSolution {
    pub fn n_ions(&self) -> usize {
        self.mode_freqs.len()
    }

    pub fn com_frequency(&self) -> f64 {
        self.mode_freqs[0]
    }

    /// Replace one mode frequency, keeping the mode vector. Used to pin the
    /// COM frequency to an externally quoted value.
    pub fn with_mode_frequency(mut self, mode: usize, omega: f64) -> Self {
        self.mode_freqs[mode] = omega;
        self
    }

    pub fn to_record(&self) -> ChainRecord {
        let n = self.n_ions();
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for m in 0..n {
                rows.push(self.mode_matrix[(i, m)]);
            }
        }
        ChainRecord {
            n_ions: n,
            axis: self.axis,
            length_scale_m: self.equilibrium.length_scale,
            positions_dimensionless: self.equilibrium.positions.clone(),
            positions_m: self.equilibrium.positions_m(),
            mode_matrix_row_major: rows,
            mode_freqs_rad_s: self.mode_freqs.clone(),
        }
    }
}

/// Serialised form of a [`ChainSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub n_ions: usize,
    pub axis: TransverseAxis,
    pub length_scale_m: f64,
    pub positions_dimensionless: Vec<f64>,
    pub positions_m: Vec<f64>,
    pub mode_matrix_row_major: Vec<f64>,
    pub mode_freqs_rad_s: Vec<f64>,
}

pub fn length_scale(trap: &TrapConfig) -> f64 {
    (coulomb_constant() / (trap.ion_mass * trap.omega_z * trap.omega_z)).cbrt()
}

/// Dimensionless axial potential.
pub fn axial_energy(u: &[f64]) -> f64 {
    let mut e = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            e += 1.0 / (u[j] - u[i]).abs();
        }
    }
    e
}

/// Gradient of [`axial_energy`].
pub fn axial_gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut g: Vec<f64> = u.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = u[i] - u[j];
                g[i] -= d.signum() / (d * d);
            }
        }
    }
    g
}

fn axial_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                h[(i, j)] -= c;
                h[(i, i)] += c;
            }
        }
    }
    h
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn strictly_increasing(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[1] > w[0])
}

/// Solve the dimensionless axial equilibrium for `n` ions by damped Newton.
pub fn solve_equilibrium_dimensionless(n: usize) -> Result<Equilibrium> {
    if n == 0 {
        return Err(Error::InvalidInput("n_ions must be at least 1".into()));
    }
    if n == 1 {
        return Ok(Equilibrium { positions: vec![0.0], length_scale: 0.0, residual: 0.0 });
    }
    let half_extent = 0.6 * (n as f64).powf(0.56);
    let mut u: Vec<f64> = (0..n)
        .map(|i| -half_extent + 2.0 * half_extent * i as f64 / (n - 1) as f64)
        .collect();
    let mut grad = axial_gradient(&u);
    let mut residual = max_abs(&grad);
    let mut iterations = 0;
    while residual > GRADIENT_TOL && iterations < NEWTON_MAX_ITER {
        iterations += 1;
        let h = axial_hessian(&u);
        let step = match h.cholesky() {
            Some(ch) => ch.solve(&DVector::from_column_slice(&grad)),
            None => DVector::from_column_slice(&grad),
        };
        let e0 = axial_energy(&u);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
            if strictly_increasing(&trial) && axial_energy(&trial) <= e0 + 1e-14 * e0.abs() {
                u = trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        grad = axial_gradient(&u);
        residual = max_abs(&grad);
    }
    // the exact minimiser is reflection symmetric
    let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
    let sym_residual = max_abs(&axial_gradient(&sym));
    if sym_residual <= residual {
        u = sym;
        residual = sym_residual;
    }
    if residual > GRADIENT_TOL {
        return Err(Error::NonConvergence { iterations, residual });
    }
    Ok(Equilibrium { positions: u, length_scale: 0.0, residual })
}

pub fn solve_equilibrium(trap: &TrapConfig) -> Result<Equilibrium> {
    trap.validate()?;
    let mut eq = solve_equilibrium_dimensionless(trap.n_ions)?;
    eq.length_scale = length_scale(trap);
    Ok(eq)
}

/// Coulomb part of the dimensionless transverse Hessian, `A` in
/// `K = (omega_t/omega_z)^2 I - A`.
fn coulomb_transverse(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let c = 1.0 / (u[i] - u[j]).abs().powi(3);
                a[(i, j)] -= c;
                a[(i, i)] += c;
            }
        }
    }
    a
}

/// Largest eigenvalue of the Coulomb transverse matrix. The chain is linear
/// along a transverse axis iff `(omega_t / omega_z)^2` exceeds it.
pub fn critical_ratio(eq: &Equilibrium) -> f64 {
    let n = eq.positions.len();
    if n < 2 {
        return 0.0;
    }
    let a = coulomb_transverse(&eq.positions);
    SymmetricEigen::new(a).eigenvalues.iter().cloned().fold(f64::MIN, f64::max).max(0.0).sqrt()
}

fn sort_modes(values: &[f64], vectors: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = values.len();
    let dominant = |m: usize| {
        let col = vectors.column(m);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() + 1e-12 {
                best = i;
            }
        }
        best
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(dominant(a).cmp(&dominant(b)))
    });
    let mut out = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (k, &m) in order.iter().enumerate() {
        let mut col = vectors.column(m).into_owned();
        let scale = max_abs(col.as_slice());
        let first = col.iter().position(|x| x.abs() > 1e-8 * scale).unwrap_or(0);
        if col[first] < 0.0 {
            col.neg_mut();
        }
        out.set_column(k, &col);
        vals.push(values[m]);
    }
    (vals, out)
}

/// Transverse modes along `axis`.
pub fn transverse_modes_along(
    trap: &TrapConfig,
    eq: &Equilibrium,
    axis: TransverseAxis,
) -> Result<ChainSolution> {
    trap.validate()?;
    let n = eq.positions.len();
    if n != trap.n_ions {
        return Err(Error::InvalidInput(format!(
            "equilibrium has {n} ions, trap has {}",
            trap.n_ions
        )));
    }
    let ratio = trap.transverse(axis) / trap.omega_z;
    let mut k = -coulomb_transverse(&eq.positions);
    for i in 0..n {
        k[(i, i)] += ratio * ratio;
    }
    let eig = SymmetricEigen::new(k);
    let (vals, vectors) = sort_modes(eig.eigenvalues.as_slice(), &eig.eigenvectors);
    let lowest = vals[n - 1];
    if lowest <= 0.0 {
        return Err(Error::UnstableChain { margin: lowest * trap.omega_z * trap.omega_z });
    }
    let freqs = vals.iter().map(|l| trap.omega_z * l.sqrt()).collect();
    Ok(ChainSolution { equilibrium: eq.clone(), axis, mode_matrix: vectors, mode_freqs: freqs })
}

/// Transverse modes along the laser coupling axis (x).
pub fn transverse_phonon_modes(trap: &TrapConfig, eq: &Equilibrium) -> Result<ChainSolution> {
    transverse_modes_along(trap, eq, TransverseAxis::X)
}

/// Equilibrium and x-axis modes in one call.
pub fn solve_chain(trap: &TrapConfig) -> Result<ChainSolution> {
    let eq = solve_equilibrium(trap)?;
    transverse_phonon_modes(trap, &eq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    /// Lowest transverse omega^2 over both transverse axes, rad^2/s^2.
    pub margin: f64,
    pub limiting_axis: TransverseAxis,
}

/// Linear-chain stability against the zig-zag transition on either
/// transverse axis.
pub fn is_linear_stable(trap: &TrapConfig) -> Result<Stability> {
    trap.validate()?;
    let eq = solve_equilibrium(trap)?;
    let crit = critical_ratio(&eq);
    let (axis, omega_t) = if trap.omega_y < trap.omega_x {
        (TransverseAxis::Y, trap.omega_y)
    } else {
        (TransverseAxis::X, trap.omega_x)
    };
    let margin = omega_t * omega_t - crit * crit * trap.omega_z * trap.omega_z;
    Ok(Stability { stable: margin > 0.0, margin, limiting_axis: axis })
}

/// Axial-frequency scan settings for [`choose_axial_frequency`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxialScan {
    /// Candidate omega_z values, rad/s.
    pub grid: Vec<f64>,
    /// Required factor on the critical transverse/axial ratio.
    pub safety_factor: f64,
}

impl AxialScan {
    pub fn logarithmic(min: f64, max: f64, points: usize, safety_factor: f64) -> Self {
        let grid = if points <= 1 {
            vec![min]
        } else {
            let (a, b) = (min.ln(), max.ln());
            let mut g: Vec<f64> =
                (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect();
            g[0] = min;
            g[points - 1] = max;
            g
        };
        Self { grid, safety_factor }
    }
}

impl Default for AxialScan {
    fn default() -> Self {
        Self::logarithmic(mhz_to_angular(0.05), mhz_to_angular(5.0), 400, 1.05)
    }
}

/// Pick omega_z minimising the exponential decay factor of the end-ion
/// coupling profile at the template detuning, among linear-stable values.
///
/// For fewer than three ions the fit is undefined and the largest stable
/// grid value is returned.
pub fn choose_axial_frequency(template: &TrapConfig, n_ions: usize, scan: &AxialScan) -> Result<f64> {
    let eq = solve_equilibrium_dimensionless(n_ions)?;
    let crit = critical_ratio(&eq);
    let omega_t = template.omega_x.min(template.omega_y);
    let stable: Vec<f64> = scan
        .grid
        .iter()
        .copied()
        .filter(|&wz| wz > 0.0 && omega_t / wz > scan.safety_factor * crit)
        .collect();
    if stable.is_empty() {
        return Err(Error::NoStablePoint);
    }
    let largest = stable.iter().cloned().fold(f64::MIN, f64::max);
    if n_ions < 3 || stable.len() == 1 {
        return Ok(largest);
    }
    let betas: Vec<Option<f64>> = stable
        .par_iter()
        .map(|&wz| {
            let trap = TrapConfig { n_ions, omega_z: wz, ..*template };
            let mut e = eq.clone();
            e.length_scale = length_scale(&trap);
            let chain = transverse_phonon_modes(&trap, &e).ok()?;
            let model = coupling::CouplingModel::compute(&trap, &chain, None, 0).ok()?;
            coupling::fit_alpha_beta(&model.j, FitConvention::EndIonChainIndex, None, true)
                .ok()
                .map(|f| f.beta)
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (&wz, beta) in stable.iter().zip(betas) {
        if let Some(b) = beta {
            if best.is_none_or(|(bb, _)| b < bb) {
                best = Some((b, wz));
            }
        }
    }
    best.map(|(_, wz)| wz).ok_or(Error::NoStablePoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_ion_sits_at_centre() {
        let eq = solve_equilibrium_dimensionless(1).unwrap();
        assert_eq!(eq.positions, vec![0.0]);
    }

    #[test]
    fn two_ions_match_analytic_minimum() {
        let eq = solve_equilibrium_dimensionless(2).unwrap();
        let a = 0.25_f64.cbrt();
        assert_relative_eq!(eq.positions[0], -a, epsilon = 1e-12);
        assert_relative_eq!(eq.positions[1], a, epsilon = 1e-12);
    }

    #[test]
    fn residual_and_symmetry_up_to_64_ions() {
        for n in [3, 5, 10, 24, 33, 52, 64] {
            let eq = solve_equilibrium_dimensionless(n).unwrap();
            assert!(max_abs(&axial_gradient(&eq.positions)) <= 1e-12, "n={n}");
            for i in 0..n {
                assert!((eq.positions[i] + eq.positions[n - 1 - i]).abs() < 1e-10);
            }
            assert!(strictly_increasing(&eq.positions));
        }
    }

    #[test]
    fn length_scale_power_laws() {
        let t = TrapConfig::reference(5);
        let l = length_scale(&t);
        let l2 = length_scale(&t.with_axial(2.0 * t.omega_z));
        assert_relative_eq!(l2 / l, 2f64.powf(-2.0 / 3.0), max_relative = 1e-14);
        let heavy = TrapConfig { ion_mass: 8.0 * t.ion_mass, ..t };
        assert_relative_eq!(length_scale(&heavy) / l, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn two_ion_modes_are_com_and_tilt() {
        let t = TrapConfig::reference(2);
        let chain = solve_chain(&t).unwrap();
        assert_relative_eq!(chain.mode_freqs[0], t.omega_x, max_relative = 1e-12);
        let tilt = (t.omega_x.powi(2) - t.omega_z.powi(2)).sqrt();
        assert_relative_eq!(chain.mode_freqs[1], tilt, max_relative = 1e-12);
    }

    #[test]
    fn unstable_when_axial_close_to_transverse() {
        let t = TrapConfig::reference(10).with_axial(mhz_to_angular(4.0));
        let s = is_linear_stable(&t).unwrap();
        assert!(!s.stable);
        assert!(s.margin < 0.0);
        let eq = solve_equilibrium(&t).unwrap();
        assert!(matches!(transverse_phonon_modes(&t, &eq), Err(Error::UnstableChain { .. })));
        let ok = TrapConfig::reference(10).with_axial(mhz_to_angular(0.3));
        assert!(is_linear_stable(&ok).unwrap().stable);
        assert!(is_linear_stable(&TrapConfig::reference(1)).unwrap().stable);
    }

    #[test]
    fn invalid_trap_rejected() {
        let mut t = TrapConfig::reference(3);
        t.omega_z = t.omega_y * 1.1;
        assert!(t.validate().is_err());
        t = TrapConfig::reference(0);
        assert!(t.validate().is_err());
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let t = TrapConfig::reference(10);
        let scan = AxialScan { grid: vec![mhz_to_angular(0.4)], safety_factor: 1.05 };
        assert_eq!(choose_axial_frequency(&t, 10, &scan).unwrap(), mhz_to_angular(0.4));
        let single_ion = AxialScan::logarithmic(1e5, 1e7, 5, 1.05);
        assert_eq!(choose_axial_frequency(&t, 1, &single_ion).unwrap(), 1e7);
        let bad = AxialScan { grid: vec![mhz_to_angular(4.5)], safety_factor: 1.05 };
        assert_eq!(choose_axial_frequency(&t, 10, &bad), Err(Error::NoStablePoint));
    }
}
