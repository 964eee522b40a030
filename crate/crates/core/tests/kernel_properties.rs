use doubledamp::kernels::*;
use proptest::prelude::*;

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn k1_is_nonnegative(t in 0.0f64..200.0, a in 0.0f64..1e4) {
        prop_assert!(propagator(t, a).k1 >= 0.0);
    }

    #[test]
    fn continuity_across_the_seam(t in 0.0f64..50.0, sign in prop_oneof![Just(-1.0), Just(1.0)]) {
        let c = propagator(t, 1.0);
        let s = propagator(t, 1.0 + sign * 1e-6);
        prop_assert!((c.k1 - s.k1).abs() <= 1e-6);
        prop_assert!((c.k0 - s.k0).abs() <= 1e-6);
    }

    // i1 itself moves by |d i1 / da| * 1e-6, which reaches 1.000001e-6 for t > 25,
    // so the branch jump is isolated with a second difference.
    #[test]
    fn i1_has_no_jump_at_the_seam(t in 0.0f64..50.0) {
        let lo = propagator(t, 1.0 - 1e-6).i1;
        let c = propagator(t, 1.0).i1;
        let hi = propagator(t, 1.0 + 1e-6).i1;
        prop_assert!((hi - 2.0 * c + lo).abs() <= 1e-10, "{}", hi - 2.0 * c + lo);
        prop_assert!((hi - c).abs() <= 1.0000011e-6 && (c - lo).abs() <= 1.0000011e-6);
    }

    #[test]
    fn composition_is_a_semigroup(t in 0.0f64..20.0, s in 0.0f64..20.0, a in 0.0f64..50.0) {
        let lhs = mat_mul(propagator_matrix(t, a), propagator_matrix(s, a));
        let rhs = propagator_matrix(t + s, a);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((lhs[i][j] - rhs[i][j]).abs() <= 1e-10, "{i}{j}: {} vs {}", lhs[i][j], rhs[i][j]);
            }
        }
    }

    #[test]
    fn derivatives_match_distinct_roots(t in 0.0f64..30.0, a in prop_oneof![0.0f64..0.9, 1.1f64..20.0]) {
        // Roots -a and -1: K1 = (e^{-at} - e^{-t}) / (1 - a).
        let p = propagator(t, a);
        let k1 = ((-a * t).exp() - (-t).exp()) / (1.0 - a);
        let dk1 = ((-t).exp() - a * (-a * t).exp()) / (1.0 - a);
        prop_assert!((p.k1 - k1).abs() <= 1e-12 * (1.0 + k1.abs()));
        prop_assert!((p.dk1 - dk1).abs() <= 1e-12 * (1.0 + dk1.abs()));
        prop_assert_eq!(p.dk0, -a * p.k1);
    }

    #[test]
    fn modes_solve_the_ode(t in 0.0f64..50.0, a in 0.0f64..100.0) {
        prop_assert!(ode_residual(t, a, 1e-3) <= 1e-6);
    }
}

#[test]
fn residual_on_grid_including_seam() {
    let ts: Vec<f64> = (0..=50).map(|i| i as f64).collect();
    let mut as_: Vec<f64> = (0..=100).map(|i| i as f64).collect();
    as_.extend([1.0 - 1e-6, 1.0 + 1e-6, 1.0 - 1e-4, 1.0 + 1e-4, 0.5, 1e-3]);
    for &t in &ts {
        for &a in &as_ {
            let r = ode_residual(t, a, 1e-3);
            assert!(r <= 1e-6, "t = {t}, a = {a}: {r:e}");
        }
    }
}
