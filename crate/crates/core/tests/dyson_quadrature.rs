mod support;

use ionxy::leakage::{nested_phase_integral, phase_integral, sign_f, DysonCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{quad_nested, quad_phase};

fn close(got: num_complex::Complex64, want: num_complex::Complex64, tol: f64) -> bool {
    (got - want).norm() <= tol * want.norm().max(1.0)
}

#[test]
fn gauss_legendre_integrates_polynomials_exactly() {
    let (x, w) = support::gauss_legendre(20);
    let int = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
    assert!((int(0) - 2.0).abs() < 1e-14);
    assert!((int(38) - 2.0 / 39.0).abs() < 1e-14);
    assert!(int(7).abs() < 1e-14);
}

#[test]
fn first_order_coefficients_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let c = rng.random_range(-40.0..40.0);
        let t = rng.random_range(0.0..10.0);
        assert!(close(phase_integral(c, t), quad_phase(c, t), 1e-9), "c={c} t={t}");
    }
    assert!(close(phase_integral(0.0, 3.0), quad_phase(0.0, 3.0), 1e-12));
}

#[test]
fn second_order_coefficients_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let omega_eff = rng.random_range(1.0..10.0);
        // every fourth case puts a mode close to the drive to hit the secular branches
        let near = if case % 4 == 0 { omega_eff * (1.0 + rng.random_range(-1e-5..1e-5)) } else { rng.random_range(0.5..10.0) };
        let dyson = DysonCoefficients::new(omega_eff, vec![near, rng.random_range(0.5..10.0)]);
        let t = rng.random_range(0.0..5.0);
        for (l, m) in [(0, 0), (0, 1), (1, 0)] {
            for bits in 0..16u8 {
                let (r, s, p, q) = (bits & 1, bits >> 1 & 1, bits >> 2 & 1, bits >> 3 & 1);
                let a = sign_f(q) * omega_eff + sign_f(p) * dyson.mode_freqs[m];
                let b = sign_f(s) * omega_eff + sign_f(r) * dyson.mode_freqs[l];
                let got = dyson.beta(l, m, r, s, p, q, t);
                assert!(close(got, quad_nested(a, b, t), 1e-9), "case {case} a={a} b={b} t={t}");
            }
            let a = dyson.alpha(m, 1, 0, t);
            assert!(close(a, quad_phase(dyson.mode_freqs[m] - omega_eff, t), 1e-9));
        }
    }
}

#[test]
fn nested_integral_near_series_threshold() {
    for a in [1e-6, 9.99e-4, 1.001e-3, 0.3] {
        for b in [-a, 0.0, 2.5] {
            let t = 1.0;
            assert!(close(nested_phase_integral(a, b, t), quad_nested(a, b, t), 1e-10), "a={a} b={b}");
        }
    }
}
