//! Fourier multipliers of the linear doubly damped equation.
//!
//! Per mode with `a = |xi|^{2 sigma}` the linear equation reads
//! `u'' + (1 + a) u' + a u = 0` with roots `-a` and `-1`, so
//!
//! ```text
//! K1(t, a) = (e^{-a t} - e^{-t}) / (1 - a),   K0 = K1 + e^{-t}.
//! ```
//!
//! Both are evaluated through `K1 = e^{-min(a,1) t} (1 - e^{-|1-a| t}) / |1-a|`,
//! which is free of cancellation and continuous across the double root `a = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{log_grid, loglog_fit};

/// Width of the band around `a = 1` reported as near the double root.
pub const BRANCH_DELTA: f64 = 1e-4;

/// Times beyond this are clamped; everything has decayed to zero by then.
pub const T_CAP: f64 = 1e6;

/// Minimum `R^2` accepted by [`decay_profile`].
pub const PROFILE_MIN_R2: f64 = 0.99;

const SERIES_TERMS: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSymbol {
    /// `|xi|^{2 sigma}`.
    pub a: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// `|a - 1| < BRANCH_DELTA`.
    pub degenerate: bool,
}

impl ModeSymbol {
    pub fn new(a: f64) -> Self {
        ModeSymbol {
            a,
            lambda_plus: -a,
            lambda_minus: -1.0,
            degenerate: (a - 1.0).abs() < BRANCH_DELTA,
        }
    }

    /// `lambda^2 + (1 + a) lambda + a`.
    pub fn characteristic(&self, lambda: f64) -> f64 {
        lambda * lambda + (1.0 + self.a) * lambda + self.a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorSample {
    pub t: f64,
    pub k0: f64,
    pub k1: f64,
    pub dk0: f64,
    pub dk1: f64,
    /// `int_0^t K1(s) ds`: response to a unit constant forcing.
    pub i1: f64,
    /// `int_0^t i1(s) ds`: response to a unit linear-in-time forcing.
    pub i2: f64,
}

/// `(1 - e^{-c t}) / c`, equal to `t` at `c = 0`.
fn g(c: f64, t: f64) -> f64 {
    if c == 0.0 {
        t
    } else {
        -(-c * t).exp_m1() / c
    }
}

/// `(e^z - 1 - z) / z^2`.
fn phi2(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let mut term = 0.5;
        let mut sum = 0.5;
        for j in 3..20 {
            term *= z / j as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// `int_0^t g(r, s) ds = t^2 phi2(-r t)`.
fn h2(r: f64, t: f64) -> f64 {
    t * t * phi2(-r * t)
}

/// Taylor series of `K1`, `i1`, `i2` about `t = 0`; accurate while `(1 + a) t <= 1`.
fn series(t: f64, a: f64) -> (f64, f64, f64) {
    // K1 = sum b_j t^j with b_0 = 0, b_1 = 1 and the recurrence of the ODE.
    let (mut b_prev, mut b) = (0.0_f64, 1.0_f64);
    let mut tp = t; // t^j for the current j
    let (mut k1, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for j in 1..SERIES_TERMS {
        let jf = j as f64;
        let term = b * tp;
        k1 += term;
        i1 += term * t / (jf + 1.0);
        i2 += term * t * t / ((jf + 1.0) * (jf + 2.0));
        if term.abs() <= 1e-18 * k1.abs() && j > 2 {
            break;
        }
        // (j + 1) j b_{j+1} + (1 + a) j b_j + a b_{j-1} = 0
        let next = -((1.0 + a) * jf * b + a * b_prev) / ((jf + 1.0) * jf);
        b_prev = b;
        b = next;
        tp *= t;
    }
    (k1, i1, i2)
}

/// Exact modal propagator of `u'' + (1 + a) u' + a u = f`.
pub fn propagator(t: f64, a: f64) -> PropagatorSample {
    let t = t.clamp(0.0, T_CAP);
    let a = a.max(0.0);
    let e = (-t).exp();
    let k1 = (-(a.min(1.0)) * t).exp() * g((1.0 - a).abs(), t);
    let k0 = k1 + e;
    let dk0 = -a * k1;
    let dk1 = e - a * k1;

    let (i1, i2) = if (1.0 + a) * t <= 1.0 {
        let (_, i1, i2) = series(t, a);
        (i1, i2)
    } else if a >= 0.5 {
        let i1 = (-(-t).exp_m1() - k1) / a;
        let i2 = (t - k1 - (1.0 + a) * i1) / a;
        (i1, i2)
    } else {
        let d = 1.0 - a;
        ((g(a, t) - g(1.0, t)) / d, (h2(a, t) - h2(1.0, t)) / d)
    };
    PropagatorSample {
        t,
        k0,
        k1,
        dk0,
        dk1,
        i1,
        i2,
    }
}

/// `[[K0, K1], [dK0, dK1]]`: maps `(u(0), u'(0))` to `(u(t), u'(t))`.
pub fn propagator_matrix(t: f64, a: f64) -> [[f64; 2]; 2] {
    let s = propagator(t, a);
    [[s.k0, s.k1], [s.dk0, s.dk1]]
}

/// Relative residual of `u'' + (1 + a) u' + a u` for `u` in `{K0, K1}`.
///
/// `u'` is the closed-form derivative and `u''` its fourth-order difference
/// with step `h / max(1, a)`, one-sided near `t = 0`. Differencing `u'` keeps
/// the check conditioned where `u` tends to a nonzero constant (`a = 0`).
/// Each residual is divided by the sum of the magnitudes of its three terms.
pub fn ode_residual(t: f64, a: f64, h: f64) -> f64 {
    let hh = h / a.max(1.0);
    let mut worst: f64 = 0.0;
    for pick in [0usize, 1] {
        let f = |s: f64| {
            let p = propagator(s, a);
            if pick == 0 {
                (p.k0, p.dk0)
            } else {
                (p.k1, p.dk1)
            }
        };
        let (u, du) = f(t);
        let d = |s: f64| f(s).1;
        let ddu = if t >= 2.0 * hh {
            (d(t - 2.0 * hh) - 8.0 * d(t - hh) + 8.0 * d(t + hh) - d(t + 2.0 * hh)) / (12.0 * hh)
        } else {
            let v: Vec<f64> = (0..5).map(|i| d(t + i as f64 * hh)).collect();
            (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * hh)
        };
        let res = ddu + (1.0 + a) * du + a * u;
        let scale = ddu.abs() + (1.0 + a) * du.abs() + a * u.abs();
        if scale > 0.0 {
            worst = worst.max(res.abs() / scale);
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `sup_a a^{s/(2 sigma)} |K1(t, a)|`.
    L2L2,
    /// `(int_{|xi| <= 1} |xi|^{2s} |K1(t, |xi|^{2 sigma})|^2 dxi)^{1/2}`.
    L1L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub regime: Regime,
    pub s: f64,
    pub n: usize,
    pub sigma: f64,
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub stderr: f64,
    /// `-s/(2 sigma)` for L2L2, `-n/(4 sigma) - s/(2 sigma)` for L1L2.
    pub expected: f64,
}

/// Default time grid of the profile fits: 41 log-uniform points on `[10, 1000]`.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(10.0, 1000.0, 41)
}

fn l2l2_value(t: f64, s: f64, sigma: f64, a_grid: &[f64]) -> f64 {
    let w = s / (2.0 * sigma);
    let mut best = if s == 0.0 { propagator(t, 0.0).k1 } else { 0.0 };
    for &a in a_grid {
        best = best.max(a.powf(w) * propagator(t, a).k1.abs());
    }
    best
}

/// Surface area of the unit sphere in `R^n`.
fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            // 2 pi^{n/2} / Gamma(n/2) through the recursion A_{n+2} = 2 pi A_n / n.
            let mut area = if n % 2 == 1 {
                2.0
            } else {
                2.0 * std::f64::consts::PI
            };
            let mut m = if n % 2 == 1 { 1 } else { 2 };
            while m < n {
                area *= 2.0 * std::f64::consts::PI / m as f64;
                m += 2;
            }
            area
        }
    }
}

fn l1l2_value(t: f64, s: f64, n: usize, sigma: f64, radii: &[f64]) -> f64 {
    // Trapezoid in ln r of f(r) r^n; the piece [0, r_min] uses the value at r_min.
    let f = |r: f64| {
        let k = propagator(t, r.powf(2.0 * sigma)).k1;
        r.powf(2.0 * s) * k * k * r.powi(n as i32)
    };
    let vals: Vec<f64> = radii.iter().map(|&r| f(r)).collect();
    let mut integral = vals[0] / (n as f64 + 2.0 * s);
    for i in 1..radii.len() {
        let dl = radii[i].ln() - radii[i - 1].ln();
        integral += 0.5 * dl * (vals[i] + vals[i - 1]);
    }
    (sphere_area(n) * integral).sqrt()
}

/// Decay of the linear multiplier `K1` in the chosen norm, fitted over `t_grid`.
pub fn decay_profile(
    s: f64,
    regime: Regime,
    n: usize,
    sigma: f64,
    t_grid: &[f64],
) -> Result<DecayProfile> {
    if !(s >= 0.0 && s.is_finite()) || n == 0 || !(sigma >= 1.0) {
        return Err(Error::InvalidParams(format!(
            "decay profile needs s >= 0, n >= 1, sigma >= 1 (got s = {s}, n = {n}, sigma = {sigma})"
        )));
    }
    let (t_lo, t_hi) = (
        t_grid.first().copied().unwrap_or(0.0),
        t_grid.last().copied().unwrap_or(0.0),
    );
    if t_grid.len() < 2 || !(t_lo > 0.0) || t_hi / t_lo < 99.0 {
        return Err(Error::InvalidParams(
            "time grid must be positive and span at least two decades".into(),
        ));
    }
    let expected = match regime {
        Regime::L2L2 => -s / (2.0 * sigma),
        Regime::L1L2 => -(n as f64) / (4.0 * sigma) - s / (2.0 * sigma),
    };
    let samples: Vec<(f64, f64)> = match regime {
        Regime::L2L2 => {
            let a_grid = log_grid(1e-10, 1e4, 4000);
            t_grid
                .par_iter()
                .map(|&t| (t, l2l2_value(t, s, sigma, &a_grid)))
                .collect()
        }
        Regime::L1L2 => {
            let radii = log_grid(1e-6, 1.0, 2048);
            t_grid
                .par_iter()
                .map(|&t| (t, l1l2_value(t, s, n, sigma, &radii)))
                .collect()
        }
    };
    let (ts, ys): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    let fit = loglog_fit(&ts, &ys)?;
    if fit.r_squared < PROFILE_MIN_R2 {
        return Err(Error::FitUnstable {
            r_squared: fit.r_squared,
            required: PROFILE_MIN_R2,
        });
    }
    Ok(DecayProfile {
        regime,
        s,
        n,
        sigma,
        samples,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        stderr: fit.stderr,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_k1(t: f64, a: f64) -> f64 {
        ((-a * t).exp() - (-t).exp()) / (1.0 - a)
    }

    /// Composite Simpson quadrature used as an independent oracle for i1 and i2.
    fn simpson(f: impl Fn(f64) -> f64, t: f64, m: usize) -> f64 {
        let h = t / m as f64;
        let mut s = f(0.0) + f(t);
        for i in 1..m {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn mass_mode_and_double_root() {
        for t in [0.0, 0.3, 1.0, 5.0, 40.0] {
            let p = propagator(t, 0.0);
            assert!((p.k0 - 1.0).abs() < 1e-15);
            assert!((p.k1 + (-t).exp_m1()).abs() < 1e-15);
            let p = propagator(t, 1.0);
            assert!((p.k1 - t * (-t).exp()).abs() < 1e-15);
            assert!((p.k0 - (1.0 + t) * (-t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_values() {
        for a in [0.0, 0.2, 1.0, 3.0, 1e4] {
            let p = propagator(0.0, a);
            assert_eq!((p.k0, p.k1, p.dk1, p.i1, p.i2), (1.0, 0.0, 1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn generic_branch_matches_naive_formula() {
        for a in [0.0, 0.1, 0.5, 0.9, 1.5, 4.0, 50.0] {
            for t in [0.01, 0.5, 2.0, 10.0] {
                let p = propagator(t, a);
                let reference = naive_k1(t, a);
                assert!(
                    (p.k1 - reference).abs() <= 1e-13 * (1.0 + reference.abs()),
                    "a={a} t={t}"
                );
                let k0 = ((-a * t).exp() - a * (-t).exp()) / (1.0 - a);
                assert!((p.k0 - k0).abs() <= 1e-13 * (1.0 + k0.abs()));
                let dk1 = (-a * (-a * t).exp() + (-t).exp()) / (1.0 - a);
                assert!((p.dk1 - dk1).abs() <= 1e-12 * (1.0 + dk1.abs()));
            }
        }
    }

    #[test]
    fn duhamel_weights_match_quadrature() {
        for a in [0.0, 0.05, 0.3, 0.49, 0.5, 0.999_99, 1.0, 1.7, 20.0, 400.0] {
            for t in [1e-3, 0.05, 0.4, 1.0, 3.0, 12.0] {
                let p = propagator(t, a);
                let m = 2 * (2000.0 * (1.0 + a * t).min(200.0)) as usize;
                // i2 through the Cauchy formula so the oracle never touches p.i1.
                let i1 = simpson(|s| naive_k1(s, a), t, m);
                let i2 = simpson(|s| (t - s) * naive_k1(s, a), t, m);
                if (a - 1.0).abs() < 1e-3 {
                    let i1 = simpson(|s| s * (-s).exp(), t, m);
                    assert!((p.i1 - i1).abs() <= 1e-4 * i1, "a={a}");
                    continue;
                }
                assert!(
                    (p.i1 - i1).abs() <= 1e-10 * i1,
                    "i1 a={a} t={t}: {} vs {i1}",
                    p.i1
                );
                assert!(
                    (p.i2 - i2).abs() <= 1e-10 * i2,
                    "i2 a={a} t={t}: {} vs {i2}",
                    p.i2
                );
            }
        }
    }

    #[test]
    fn weights_continuous_at_series_switch() {
        for a in [0.0, 0.3, 0.7, 2.0, 99.0] {
            let t = 1.0 / (1.0 + a);
            let (_, s1, s2) = series(t, a);
            let k1 = propagator(t, a).k1;
            let (c1, c2) = if a >= 0.5 {
                let c1 = (-(-t).exp_m1() - k1) / a;
                (c1, (t - k1 - (1.0 + a) * c1) / a)
            } else {
                (
                    (g(a, t) - g(1.0, t)) / (1.0 - a),
                    (h2(a, t) - h2(1.0, t)) / (1.0 - a),
                )
            };
            assert!((s1 - c1).abs() <= 1e-13 * c1, "a={a}");
            assert!((s2 - c2).abs() <= 1e-11 * c2, "a={a}");
        }
    }

    #[test]
    fn ode_residual_examples() {
        assert!(ode_residual(1.0, 0.5, 1e-4) <= 1e-6);
        assert!(ode_residual(2.0, 1.0, 1e-4) <= 1e-6);
        assert!(ode_residual(0.0, 0.5, 1e-4) <= 1e-4);
        assert!(ode_residual(0.0, 100.0, 1e-3) <= 1e-6);
    }

    #[test]
    fn semigroup_composition() {
        for a in [0.0, 0.4, 1.0, 1.0 + 1e-7, 7.0] {
            let (t, s) = (0.7, 1.9);
            let m1 = propagator_matrix(t, a);
            let m2 = propagator_matrix(s, a);
            let m12 = propagator_matrix(t + s, a);
            for i in 0..2 {
                for j in 0..2 {
                    let prod = m1[i][0] * m2[0][j] + m1[i][1] * m2[1][j];
                    assert!((prod - m12[i][j]).abs() < 1e-12, "a={a} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn profile_slopes() {
        let ts = default_t_grid();
        let p = decay_profile(2.0, Regime::L2L2, 1, 1.0, &ts).unwrap();
        assert!((p.slope + 1.0).abs() < 0.05, "{}", p.slope);
        let p = decay_profile(0.0, Regime::L1L2, 1, 1.0, &ts).unwrap();
        assert!((p.slope + 0.25).abs() < 0.05, "{}", p.slope);
        let p = decay_profile(0.0, Regime::L2L2, 1, 1.0, &ts).unwrap();
        assert!(p.slope.abs() < 0.01);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!((sphere_area(5) - 8.0 / 3.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }
}
