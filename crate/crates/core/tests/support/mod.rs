//! Independent numerical oracles shared by integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on [-1, 1] via Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(20);
        Self { nodes, weights }
    }

    fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> Complex64) -> Complex64 {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| f(mid + half * x) * (w * half)).sum()
    }
}

fn panels(t: f64, rates: &[f64]) -> usize {
    let phase = rates.iter().fold(0.0f64, |m, r| m.max(r.abs())) * t;
    ((phase / 0.5).ceil() as usize).max(4)
}

/// `int_0^t exp(i c tau) d tau` by composite quadrature.
pub fn quad_phase(c: f64, t: f64) -> Complex64 {
    let rule = Rule::new();
    let n = panels(t, &[c]);
    let h = t / n as f64;
    (0..n)
        .map(|k| rule.integrate(k as f64 * h, (k + 1) as f64 * h, |x| Complex64::from_polar(1.0, c * x)))
        .sum()
}

/// `int_0^t exp(i b tau) int_0^tau exp(i a sigma) d sigma d tau` by nested
/// composite quadrature.
pub fn quad_nested(a: f64, b: f64, t: f64) -> Complex64 {
    let rule = Rule::new();
    let n = panels(t, &[a, b]);
    let h = t / n as f64;
    let mut inner_start = Complex64::new(0.0, 0.0);
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let lo = k as f64 * h;
        let hi = lo + h;
        let inner =
            |tau: f64| inner_start + rule.integrate(lo, tau, |s| Complex64::from_polar(1.0, a * s));
        total += rule.integrate(lo, hi, |tau| Complex64::from_polar(1.0, b * tau) * inner(tau));
        inner_start += rule.integrate(lo, hi, |s| Complex64::from_polar(1.0, a * s));
    }
    total
}

fn pauli(which: char) -> DMatrix<Complex64> {
    let (z, o, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    // basis order: bit value 0 (down), bit value 1 (up)
    match which {
        'x' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'y' => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        'z' => DMatrix::from_row_slice(2, 2, &[-o, z, z, o]),
        _ => DMatrix::identity(2, 2),
    }
}

/// Operator acting with the given Paulis on chosen sites; site `i` is bit `i`
/// of the basis index.
fn site_product(n: usize, ops: &[(usize, char)]) -> DMatrix<Complex64> {
    let mut out = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for site in (0..n).rev() {
        let p = ops.iter().find(|(s, _)| *s == site).map_or('1', |(_, c)| *c);
        out = out.kronecker(&pauli(p));
    }
    out
}

/// `sum_{i != j} J_ij (X_i X_j + Y_i Y_j) + sum_j h_j Z_j` on the full 2^N space.
pub fn full_xy_hamiltonian(j: &DMatrix<f64>, h: &[f64]) -> DMatrix<Complex64> {
    let n = h.len();
    let dim = 1usize << n;
    let mut out = DMatrix::zeros(dim, dim);
    for a in 0..n {
        for b in 0..n {
            if a != b && j[(a, b)] != 0.0 {
                let xx = site_product(n, &[(a, 'x'), (b, 'x')]);
                let yy = site_product(n, &[(a, 'y'), (b, 'y')]);
                out += (xx + yy) * Complex64::new(j[(a, b)], 0.0);
            }
        }
        out += site_product(n, &[(a, 'z')]) * Complex64::new(h[a], 0.0);
    }
    out
}

/// `exp(-i H t)` by scaling and squaring of a Taylor series.
pub fn expm_taylor(h: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    let dim = h.nrows();
    let a = h * Complex64::new(0.0, -t);
    let norm = (0..dim).map(|r| a.row(r).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scaled = a / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let mut term = DMatrix::<Complex64>::identity(dim, dim);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Random real symmetric matrix with zero diagonal and entries in [-1, 1].
pub fn random_symmetric(n: usize, mut next: impl FnMut() -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = 2.0 * next() - 1.0;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

pub fn max_abs_diff(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
