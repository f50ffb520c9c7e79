//! Deterministic derivative-free box maximisation: Latin-hypercube seeding
//! followed by a compass pattern search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Maximum number of objective evaluations, including the seed.
    pub budget: usize,
    pub lhs_samples: usize,
    /// Initial compass step as a fraction of each box width.
    pub initial_step: f64,
    /// Stop once the step fraction falls below this.
    pub min_step: f64,
    pub rng_seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { budget: 200, lhs_samples: 24, initial_step: 0.125, min_step: 1e-4, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub seed_value: f64,
    pub evaluations: usize,
}

fn latin_hypercube(rng: &mut ChaCha8Rng, samples: usize, lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let dims = lower.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..samples).collect();
        strata.shuffle(rng);
        columns.push(
            strata
                .into_iter()
                .map(|k| {
                    let u = (k as f64 + rng.random::<f64>()) / samples as f64;
                    lower[d] + u * (upper[d] - lower[d])
                })
                .collect(),
        );
    }
    (0..samples).map(|s| (0..dims).map(|d| columns[d][s]).collect()).collect()
}

/// Maximise `objective` over the box `[lower, upper]` starting from `seed`.
/// The result is never worse than the seed; ties keep the earlier point.
pub fn maximize<F>(objective: F, seed: &[f64], lower: &[f64], upper: &[f64], options: &SearchOptions) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dims = seed.len();
    assert!(lower.len() == dims && upper.len() == dims, "box dimension mismatch");
    let eval_batch = |points: &[Vec<f64>]| -> Vec<f64> { points.par_iter().map(|p| objective(p)).collect() };

    let seed_value = objective(seed);
    let mut evaluations = 1;
    let mut best = (seed.to_vec(), seed_value);

    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let lhs = options.lhs_samples.min(options.budget.saturating_sub(evaluations));
    if lhs > 0 {
        let points = latin_hypercube(&mut rng, lhs, lower, upper);
        let values = eval_batch(&points);
        evaluations += lhs;
        for (p, v) in points.into_iter().zip(values) {
            if v > best.1 {
                best = (p, v);
            }
        }
    }

    let width: Vec<f64> = (0..dims).map(|d| upper[d] - lower[d]).collect();
    let mut step = options.initial_step;
    while step >= options.min_step && evaluations < options.budget {
        let mut trial = Vec::with_capacity(2 * dims);
        for d in 0..dims {
            for dir in [1.0, -1.0] {
                let mut p = best.0.clone();
                p[d] = (p[d] + dir * step * width[d]).clamp(lower[d], upper[d]);
                if p[d] != best.0[d] {
                    trial.push(p);
                }
            }
        }
        trial.truncate(options.budget - evaluations);
        if trial.is_empty() {
            step *= 0.5;
            continue;
        }
        let values = eval_batch(&trial);
        evaluations += trial.len();
        let mut improved = false;
        for (p, v) in trial.into_iter().zip(values) {
            if v > best.1 {
                best = (p, v);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    SearchResult { x: best.0, value: best.1, seed_value, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.1).powi(2);
        let r = maximize(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &SearchOptions::default());
        assert!((r.x[0] - 0.3).abs() < 1e-3 && (r.x[1] + 0.1).abs() < 1e-3);
        assert!(r.evaluations <= 200);
        assert!(r.value >= r.seed_value);
    }

    #[test]
    fn seed_at_optimum_is_kept() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - (x[1] - 2.0).powi(2);
        let r = maximize(f, &[1.0, 2.0], &[0.7, 1.4], &[1.3, 2.6], &SearchOptions::default());
        assert_eq!(r.x, vec![1.0, 2.0]);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos();
        let opts = SearchOptions { rng_seed: 42, ..Default::default() };
        let a = maximize(f, &[0.1, 0.1], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        let b = maximize(f, &[0.1, 0.1], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn budget_is_respected() {
        let f = |x: &[f64]| x[0];
        let opts = SearchOptions { budget: 7, ..Default::default() };
        let r = maximize(f, &[0.0], &[0.0], &[1.0], &opts);
        assert!(r.evaluations <= 7);
    }
}
