//! Effective XY Hamiltonian restricted to fixed-excitation sectors.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sectors up to this dimension are stored and propagated densely.
pub const DENSE_LIMIT: usize = 4096;
const KRYLOV_DIM: usize = 40;

/// Identifies the basis a [`StateVector`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisId {
    Sector { n_sites: usize, excitations: usize },
    Product { n_sites: usize, dimension: usize, fingerprint: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: DVector<Complex64>,
    pub basis_id: BasisId,
}

impl StateVector {
    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    pub fn overlap(&self, other: &StateVector) -> Result<Complex64> {
        if self.basis_id != other.basis_id {
            return Err(Error::BasisMismatch(format!("{:?} vs {:?}", self.basis_id, other.basis_id)));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }
}

/// Compressed sparse row matrix with real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim, row_ptr, cols, values }
    }

    pub fn mul_vec(&self, x: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[k]] * self.values[k];
            }
            out[r] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += self.values[k];
            }
        }
        m
    }

    /// Maximum absolute row sum, an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.values[k].abs()).sum())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectorMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl SectorMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SectorMatrix::Dense(m) => m.nrows(),
            SectorMatrix::Sparse(m) => m.dim,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SectorMatrix::Dense(m) => m.clone(),
            SectorMatrix::Sparse(m) => m.to_dense(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        match self {
            SectorMatrix::Dense(m) => m.map(|v| Complex64::new(v, 0.0)) * x,
            SectorMatrix::Sparse(m) => {
                let mut out = DVector::zeros(m.dim);
                m.mul_vec(x, &mut out);
                out
            }
        }
    }
}

/// Fixed-excitation block of the XY Hamiltonian. Basis states are occupation
/// bitmasks (bit i set means site i is excited) in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct XYSector {
    pub n_sites: usize,
    pub excitations: usize,
    pub basis: Vec<u64>,
    pub hamiltonian: SectorMatrix,
}

impl XYSector {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis_id(&self) -> BasisId {
        BasisId::Sector { n_sites: self.n_sites, excitations: self.excitations }
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.basis.binary_search(&mask).ok()
    }

    /// Basis state with the given sites excited.
    pub fn basis_state(&self, sites: &[usize]) -> Result<StateVector> {
        let mask = sites.iter().fold(0u64, |m, &s| m | (1 << s));
        if mask.count_ones() as usize != self.excitations || sites.iter().any(|&s| s >= self.n_sites) {
            return Err(Error::InvalidInput(format!("sites {sites:?} not in sector")));
        }
        let idx = self.index_of(mask).expect("mask in sector");
        let mut amps = DVector::zeros(self.dim());
        amps[idx] = Complex64::new(1.0, 0.0);
        Ok(StateVector { amplitudes: amps, basis_id: self.basis_id() })
    }

    /// Mean occupation of every site.
    pub fn site_populations(&self, psi: &StateVector) -> Vec<f64> {
        let mut pops = vec![0.0; self.n_sites];
        for (k, &mask) in self.basis.iter().enumerate() {
            let p = psi.amplitudes[k].norm_sqr();
            for (i, pop) in pops.iter_mut().enumerate() {
                if mask >> i & 1 == 1 {
                    *pop += p;
                }
            }
        }
        pops
    }

    pub fn energy(&self, psi: &StateVector) -> f64 {
        psi.amplitudes.dotc(&self.hamiltonian.mul_vec(&psi.amplitudes)).re
    }
}

/// Occupation masks over `n` sites with popcount `s`, ascending.
pub fn sector_masks(n: usize, s: usize) -> Vec<u64> {
    if s > n {
        return Vec::new();
    }
    if s == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut mask: u64 = (1u64 << s) - 1;
    let limit = 1u64 << n;
    while mask < limit {
        out.push(mask);
        // next integer with the same popcount
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    out
}

/// Single-excitation sector from a hopping matrix given directly as
/// single-excitation matrix elements, plus per-site diagonal terms.
pub fn build_single_excitation(hop: &DMatrix<f64>, diagonal: &[f64]) -> Result<XYSector> {
    let n = hop.nrows();
    if hop.ncols() != n || diagonal.len() != n {
        return Err(Error::InvalidInput("hopping matrix and diagonal sizes differ".into()));
    }
    let mut h = DMatrix::from_fn(n, n, |a, b| if a == b { 0.0 } else { 0.5 * (hop[(a, b)] + hop[(b, a)]) });
    for (i, d) in diagonal.iter().enumerate() {
        h[(i, i)] = *d;
    }
    Ok(XYSector {
        n_sites: n,
        excitations: 1,
        basis: (0..n).map(|i| 1u64 << i).collect(),
        hamiltonian: SectorMatrix::Dense(h),
    })
}

/// Block of `sum_{i != j} J_ij (X_i X_j + Y_i Y_j) + sum_j h_j Z_j` with `s`
/// excitations. Each excitation hop i -> j has amplitude `4 J_ij`.
pub fn build_sector(j: &DMatrix<f64>, h: &[f64], s: usize) -> Result<XYSector> {
    let n = j.nrows();
    if j.ncols() != n || h.len() != n {
        return Err(Error::InvalidInput("coupling matrix and field sizes differ".into()));
    }
    if n > 63 {
        return Err(Error::InvalidInput("at most 63 sites supported".into()));
    }
    if s > n {
        return Err(Error::InvalidInput(format!("{s} excitations on {n} sites")));
    }
    let basis = sector_masks(n, s);
    let dim = basis.len();
    let index: HashMap<u64, usize> = basis.iter().enumerate().map(|(k, &m)| (m, k)).collect();
    let mut triplets = Vec::new();
    for (k, &mask) in basis.iter().enumerate() {
        let diag: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { h[i] } else { -h[i] }).sum();
        triplets.push((k, k, diag));
        for a in 0..n {
            if mask >> a & 1 == 0 {
                continue;
            }
            for b in 0..n {
                if mask >> b & 1 == 1 {
                    continue;
                }
                let amp = 2.0 * (j[(a, b)] + j[(b, a)]);
                if amp != 0.0 {
                    let target = index[&(mask ^ (1 << a) ^ (1 << b))];
                    triplets.push((target, k, amp));
                }
            }
        }
    }
    let csr = CsrMatrix::from_triplets(dim, triplets);
    let hamiltonian = if dim <= DENSE_LIMIT {
        SectorMatrix::Dense(csr.to_dense())
    } else {
        SectorMatrix::Sparse(csr)
    };
    Ok(XYSector { n_sites: n, excitations: s, basis, hamiltonian })
}

/// Reusable propagator for a fixed sector.
#[derive(Debug, Clone)]
pub enum Propagator {
    Spectral { values: DVector<f64>, vectors: DMatrix<f64> },
    Krylov { matrix: SectorMatrix, norm: f64 },
}

impl Propagator {
    pub fn new(sector: &XYSector) -> Self {
        match &sector.hamiltonian {
            SectorMatrix::Dense(m) => {
                let eig = SymmetricEigen::new(m.clone());
                Propagator::Spectral { values: eig.eigenvalues, vectors: eig.eigenvectors }
            }
            SectorMatrix::Sparse(m) => {
                Propagator::Krylov { matrix: SectorMatrix::Sparse(m.clone()), norm: m.inf_norm() }
            }
        }
    }

    /// Krylov propagation regardless of dimension.
    pub fn krylov(sector: &XYSector) -> Self {
        let norm = match &sector.hamiltonian {
            SectorMatrix::Dense(m) => m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).fold(0.0, f64::max),
            SectorMatrix::Sparse(m) => m.inf_norm(),
        };
        Propagator::Krylov { matrix: sector.hamiltonian.clone(), norm }
    }

    /// `exp(-i H t) psi`.
    pub fn apply(&self, psi: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        match self {
            Propagator::Spectral { values, vectors } => {
                let vc = vectors.map(|v| Complex64::new(v, 0.0));
                let mut coeff = vc.tr_mul(psi);
                for (k, c) in coeff.iter_mut().enumerate() {
                    *c *= Complex64::from_polar(1.0, -values[k] * t);
                }
                vc * coeff
            }
            Propagator::Krylov { matrix, norm } => krylov_expm(matrix, *norm, psi, t),
        }
    }
}

fn krylov_expm(matrix: &SectorMatrix, norm: f64, psi: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
    if t == 0.0 || norm == 0.0 {
        return psi.clone();
    }
    let max_step = 10.0 / norm;
    let steps = (t.abs() / max_step).ceil().max(1.0) as usize;
    let tau = t / steps as f64;
    let mut v = psi.clone();
    for _ in 0..steps {
        v = lanczos_step(matrix, &v, tau);
    }
    v
}

fn lanczos_step(matrix: &SectorMatrix, psi: &DVector<Complex64>, tau: f64) -> DVector<Complex64> {
    let beta0 = psi.norm();
    if beta0 == 0.0 {
        return psi.clone();
    }
    let m_max = KRYLOV_DIM.min(matrix.dim());
    let mut basis: Vec<DVector<Complex64>> = vec![psi / Complex64::new(beta0, 0.0)];
    let mut alphas = Vec::with_capacity(m_max);
    let mut betas: Vec<f64> = Vec::with_capacity(m_max);
    for k in 0..m_max {
        let mut w = matrix.mul_vec(&basis[k]);
        let a = basis[k].dotc(&w).re;
        alphas.push(a);
        w -= &basis[k] * Complex64::new(a, 0.0);
        if k > 0 {
            w -= &basis[k - 1] * Complex64::new(betas[k - 1], 0.0);
        }
        // full reorthogonalisation keeps the small basis numerically orthonormal
        for q in &basis {
            let c = q.dotc(&w);
            w -= q * c;
        }
        let b = w.norm();
        if k + 1 == m_max || b < 1e-14 * (a.abs() + 1.0) {
            break;
        }
        betas.push(b);
        basis.push(w / Complex64::new(b, 0.0));
    }
    let m = alphas.len();
    let tri = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alphas[r]
        } else if r + 1 == c {
            betas[r]
        } else if c + 1 == r {
            betas[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(tri);
    // first column of exp(-i T tau)
    let mut e1 = vec![Complex64::new(0.0, 0.0); m];
    for (r, slot) in e1.iter_mut().enumerate() {
        for k in 0..m {
            *slot += eig.eigenvectors[(r, k)]
                * eig.eigenvectors[(0, k)]
                * Complex64::from_polar(1.0, -eig.eigenvalues[k] * tau);
        }
    }
    let mut out = DVector::zeros(psi.len());
    for (r, c) in e1.iter().enumerate() {
        out += &basis[r] * (*c * beta0);
    }
    out
}

/// `exp(-i H t) psi0` for one time point.
pub fn evolve(sector: &XYSector, psi0: &StateVector, t: f64) -> Result<StateVector> {
    if psi0.basis_id != sector.basis_id() || psi0.amplitudes.len() != sector.dim() {
        return Err(Error::BasisMismatch("state not in sector basis".into()));
    }
    let prop = Propagator::new(sector);
    Ok(StateVector { amplitudes: prop.apply(&psi0.amplitudes, t), basis_id: psi0.basis_id })
}

/// Population on `target_site` for a single-excitation state.
pub fn transfer_fidelity(psi: &StateVector, target_site: usize) -> f64 {
    psi.amplitudes[target_site].norm_sqr().min(1.0)
}

/// One row of a single-excitation trace export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub site_probabilities: Vec<f64>,
    pub fidelity: f64,
}

/// Evolve a single-excitation state over `times`, recording site populations
/// and the population on `target_site`.
pub fn single_excitation_trace(
    sector: &XYSector,
    psi0: &StateVector,
    times: &[f64],
    target_site: usize,
) -> Result<Vec<TraceRow>> {
    if sector.excitations != 1 {
        return Err(Error::InvalidInput("trace export needs the single-excitation sector".into()));
    }
    if psi0.basis_id != sector.basis_id() {
        return Err(Error::BasisMismatch("state not in sector basis".into()));
    }
    let prop = Propagator::new(sector);
    Ok(times
        .iter()
        .map(|&t| {
            let psi = prop.apply(&psi0.amplitudes, t);
            let probs: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
            TraceRow { t, fidelity: probs[target_site], site_probabilities: probs }
        })
        .collect())
}
