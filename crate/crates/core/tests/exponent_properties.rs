use doubledamp::exponents::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = SystemParams> {
    (
        2usize..=6,
        1usize..=3,
        prop_oneof![Just(1.0), Just(1.5), Just(2.0), 1.0f64..3.0],
    )
        .prop_flat_map(|(k, n, sigma)| {
            proptest::collection::vec(1.1f64..5.0, k).prop_map(move |p| SystemParams {
                n,
                sigma,
                p,
            })
        })
}

/// Dense `(P - I) gamma = 1` solved by nalgebra.
fn dense_gamma(params: &SystemParams) -> Vec<f64> {
    let k = params.k();
    let mut m = DMatrix::<f64>::from_element(k, k, 0.0);
    for i in 0..k {
        m[(i, i)] = -1.0;
    }
    m[(0, k - 1)] += params.p[0];
    for l in 1..k {
        m[(l, l - 1)] += params.p[l];
    }
    let rhs = DVector::from_element(k, 1.0);
    m.lu()
        .solve(&rhs)
        .expect("nonsingular")
        .iter()
        .copied()
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gamma_matches_dense_solve(params in params_strategy()) {
        let g = compute_gamma(&params).unwrap();
        let oracle = dense_gamma(&params);
        for (a, b) in g.gamma.iter().zip(&oracle) {
            prop_assert!(rel(*a, *b) <= 1e-10, "{a} vs {b}");
        }
        let closed = gamma_max_closed_form(&params).unwrap();
        prop_assert!(rel(closed, g.gamma[params.k() - 1]) <= 1e-10);
    }

    #[test]
    fn sign_law(params in params_strategy()) {
        let class = classify(&params).unwrap();
        let life = lifespan_exponent(&params);
        let (canon, _) = params.canonical().unwrap();
        let beta = alpha_beta_sequences(&canon).unwrap().beta;
        let sub = class == Classification::Subcritical;
        prop_assert_eq!(sub, life.as_ref().is_ok_and(|e| *e < 0.0));
        if class != Classification::Critical {
            prop_assert_eq!(sub, beta.iter().all(|b| *b > 0.0));
        }
    }

    #[test]
    fn scale_covariance(params in params_strategy(), factor in 2usize..=3) {
        let scaled = SystemParams {
            n: params.n * factor,
            sigma: params.sigma * factor as f64,
            p: params.p.clone(),
        };
        prop_assert!((params.threshold() - scaled.threshold()).abs() <= 1e-12);
        prop_assert_eq!(classify(&params).unwrap(), classify(&scaled).unwrap());
        let a = loss_of_decay_sequence(&params, 0.01).unwrap().recursive;
        let b = loss_of_decay_sequence(&scaled, 0.01).unwrap().recursive;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        match (lifespan_exponent(&params), lifespan_exponent(&scaled)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "lifespan exponent existence differs"),
        }
    }

    #[test]
    fn loss_recursion_equals_closed_form(params in params_strategy(), eps in 1e-4f64..0.1) {
        let l = loss_of_decay_sequence(&params, eps).unwrap();
        for (a, b) in l.recursive.iter().zip(&l.closed_form) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0) * 10.0);
        }
        prop_assert_eq!(l.recursive[params.k() - 1], 0.0);
    }

    #[test]
    fn relabeling_round_trips(params in params_strategy()) {
        let (canon, shift) = params.canonical().unwrap();
        let g = compute_gamma(&params).unwrap();
        let gc = compute_gamma(&canon).unwrap();
        let back = unrotate(&gc.gamma, shift);
        for (a, b) in back.iter().zip(&g.gamma) {
            prop_assert!(rel(*a, *b) <= 1e-12);
        }
        prop_assert!(rel(gc.gamma[params.k() - 1], g.max()) <= 1e-12);
    }

    #[test]
    fn gn_theta_monotone_in_q(q1 in 1.1f64..4.0, d in 0.0f64..0.4, e in 0.01f64..0.1, s in 0.5f64..3.0, n in 1usize..=3) {
        // Larger 1/q1 - 1/q means larger theta while the denominator is positive.
        let q_of = |gap: f64| 1.0 / (1.0 / q1 - gap);
        prop_assume!(1.0 / q1 - d - e > 0.0);
        prop_assume!(1.0 / q1 - 0.5 + s / n as f64 > 0.0);
        let lo = gn_theta(q_of(d), q1, 2.0, 0.0, s, n).unwrap().theta;
        let hi = gn_theta(q_of(d + e), q1, 2.0, 0.0, s, n).unwrap().theta;
        prop_assert!(hi > lo);
    }
}

#[test]
fn gn_theta_identity_and_paper_usages() {
    let t = gn_theta(3.0, 3.0, 2.0, 0.0, 1.0, 1).unwrap();
    assert_eq!(t.theta, 0.0);
    assert!(t.valid);
    // theta_1 = (n / sigma)(1/2 - 1/p) with q = p.
    let t1 = gn_theta(4.0, 2.0, 2.0, 0.0, 1.0, 2).unwrap();
    assert!((t1.theta - 0.5).abs() <= 1e-12);
    // theta_2 = (n / sigma)(1/2 - 1/(2p)) with q = 2p.
    let t2 = gn_theta(4.0, 2.0, 2.0, 0.0, 1.0, 1).unwrap();
    assert!((t2.theta - 0.25).abs() <= 1e-12);
    // theta = a / s when the numerator is forced to a/s times the denominator.
    let (a, s, n) = (0.5, 2.0, 1usize);
    let q1 = 2.0;
    let q2 = 2.0;
    let target = a / s * (1.0 / q1 - 1.0 / q2 + s / n as f64);
    let q = 1.0 / (1.0 / q1 + a / n as f64 - target);
    assert!((gn_theta(q, q1, q2, a, s, n).unwrap().theta - a / s).abs() <= 1e-12);
}
