use doubledamp::exponents::SystemParams;
use doubledamp::kernels::propagator;
use doubledamp::solver::*;
use doubledamp::testfunc::{constant_state, functional_f_r, snapshot_schedule, Eta};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;

fn params() -> SystemParams {
    SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap()
}

fn data(centers: [f64; 2], widths: [f64; 2], amps: [f64; 4]) -> InitialData {
    InitialData {
        eps: 1.0,
        components: vec![
            ComponentData {
                amp_u0: amps[0],
                amp_u1: amps[1],
                width: widths[0],
                center: vec![centers[0]],
            },
            ComponentData {
                amp_u0: amps[2],
                amp_u1: amps[3],
                width: widths[1],
                center: vec![centers[1]],
            },
        ],
    }
}

fn sq(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum()
}

/// Relative l^2 distance over every `u_hat` and `v_hat` coefficient.
fn relative_error(a: &FieldState, b: &FieldState) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a
        .u_hat
        .iter()
        .zip(&b.u_hat)
        .chain(a.v_hat.iter().zip(&b.v_hat))
    {
        let d: Vec<Complex64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        num += sq(&d);
        den += sq(y);
    }
    (num / den).sqrt()
}

fn propagate_exactly(state: &FieldState, grid: &GridSpec, sigma: f64, t: f64) -> FieldState {
    let a = grid.multiplier(sigma);
    let mut out = state.clone();
    out.time = state.time + t;
    for l in 0..state.components() {
        for (m, &am) in a.iter().enumerate() {
            let s = propagator(t, am);
            let (u, v) = (state.u_hat[l][m], state.v_hat[l][m]);
            out.u_hat[l][m] = u * s.k0 + v * s.k1;
            out.v_hat[l][m] = u * s.dk0 + v * s.dk1;
        }
    }
    out
}

fn march(stepper: &mut Stepper, state: &FieldState, dt: f64, steps: usize) -> FieldState {
    let mut s = state.clone();
    for _ in 0..steps {
        s = stepper.step(&s, dt).unwrap();
    }
    s
}

#[test]
fn linear_steps_are_exact_and_independent_of_dt() {
    let grid = GridSpec::new(1, 256, 40.0).unwrap();
    let d = data([-3.0, 5.0], [1.0, 2.5], [1.0, -0.5, 0.3, 2.0]);
    let (s0, _) = make_initial_data(&grid, 1.0, &d).unwrap();
    let t = 5.0;
    let mut st = Stepper::new(&params(), &grid, false).unwrap();
    let one = march(&mut st, &s0, t, 1);
    let many = march(&mut st, &s0, t / 1000.0, 1000);
    let exact = propagate_exactly(&s0, &grid, 1.0, t);
    assert!(relative_error(&one, &exact) <= 1e-10);
    assert!(
        relative_error(&many, &exact) <= 1e-10,
        "{:e}",
        relative_error(&many, &exact)
    );
    assert!(relative_error(&many, &one) <= 1e-10);
}

#[test]
fn zero_state_is_a_fixed_point() {
    let grid = GridSpec::new(1, 128, 20.0).unwrap();
    let mut st = Stepper::new(&params(), &grid, true).unwrap();
    let z = FieldState::zeros(2, &grid);
    let out = march(&mut st, &z, 0.1, 20);
    assert!(out.u_hat.iter().chain(&out.v_hat).all(|c| sq(c) == 0.0));
}

#[test]
fn mass_mode_follows_the_scalar_ode() {
    let grid = GridSpec::new(1, 128, 20.0).unwrap();
    let c = 0.7;
    let mut s0 = FieldState::zeros(2, &grid);
    for v in &mut s0.v_hat {
        v[0] = Complex64::new(c, 0.0);
    }
    let mut st = Stepper::new(&params(), &grid, false).unwrap();
    let out = march(&mut st, &s0, 0.25, 12);
    let expect = c * -(-3.0_f64).exp_m1();
    for u in &out.u_hat {
        assert!((u[0].re - expect).abs() <= 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_exactness_for_random_data(
        c0 in -10.0f64..10.0, c1 in -10.0f64..10.0,
        w0 in 0.5f64..3.0, w1 in 0.5f64..3.0,
        a0 in -2.0f64..2.0, a1 in -2.0f64..2.0, a2 in -2.0f64..2.0, a3 in -2.0f64..2.0,
        t in 0.1f64..20.0, steps in 1usize..200,
    ) {
        prop_assume!([a0, a1, a2, a3].iter().any(|a| a.abs() > 0.1));
        let grid = GridSpec::new(1, 256, 40.0).unwrap();
        let (s0, _) = make_initial_data(&grid, 1.0, &data([c0, c1], [w0, w1], [a0, a1, a2, a3])).unwrap();
        let mut st = Stepper::new(&params(), &grid, false).unwrap();
        let out = march(&mut st, &s0, t / steps as f64, steps);
        let err = relative_error(&out, &propagate_exactly(&s0, &grid, 1.0, t));
        prop_assert!(err <= 1e-10, "{err:e}");
    }

    #[test]
    fn nonlinear_steps_keep_fields_real(
        amp in 0.05f64..0.6, w in 0.7f64..3.0, c in -5.0f64..5.0, dt in 0.01f64..0.1,
    ) {
        let grid = GridSpec::new(1, 256, 40.0).unwrap();
        let (s0, _) = make_initial_data(&grid, 1.0, &data([c, -c], [w, w], [amp, amp, amp, -amp])).unwrap();
        let mut st = Stepper::new(&params(), &grid, true).unwrap();
        let mut s = s0;
        for _ in 0..10 {
            s = st.step(&s, dt).unwrap();
            prop_assert!(s.conjugate_asymmetry(&grid) <= 1e-12);
            for u in &s.u_hat {
                let (re, imag) = st.transform().inverse_real(u);
                let sup = re.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                prop_assert!(imag <= 1e-10 * sup, "{imag:e} vs {sup:e}");
            }
        }
    }

    #[test]
    fn functional_is_homogeneous_and_monotone(c in 0.1f64..3.0, factor in 1.01f64..4.0, r in 1.0f64..4.0) {
        let grid = GridSpec::new(1, 256, 16.0 * r).unwrap();
        let sigma = 1.0;
        let p = 2.5;
        let eta = Eta::default();
        let at = |v: f64| {
            let snaps: Vec<FieldState> = snapshot_schedule(r, sigma, 24, 32)
                .into_iter()
                .map(|t| constant_state(&grid, 1, v, t))
                .collect();
            functional_f_r(&snaps, &grid, 0, p, r, sigma, &eta).unwrap()
        };
        let (lo, hi) = (at(c), at(c * factor));
        prop_assert!(hi > lo);
        prop_assert!((hi / lo / factor.powf(p) - 1.0).abs() <= 1e-12);
    }
}
