//! Test functions of the blow-up argument and numerical checks of their properties.
//!
//! `psi(x) = <x>^{-n - 2 sigma_bar}` is the spatial weight, `eta` a C^2 cutoff in
//! time equal to 1 on `[0, 1/2]` and 0 from `t = 1` on, and
//! `Phi_R(t, x) = eta(R^{-2 sigma} t) psi(x / R)`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::fft::Transform;
use crate::solver::{FieldState, GridSpec};
use crate::stats::{log_grid, loglog_fit};

/// Distance from an integer below which `sigma` counts as an integer.
pub const INTEGER_TOLERANCE: f64 = 1e-12;

/// Edge-to-peak ratio accepted by [`frac_laplacian_grid`].
pub const EDGE_LIMIT: f64 = 1e-10;

/// Default smoothness exponent of the cutoff `eta`.
pub const DEFAULT_MU: u32 = 16;

/// Minimum number of time nodes inside `[0, R^{2 sigma}]` for [`functional_f_r`].
pub const MIN_TIME_NODES: usize = 16;

pub fn sigma_bar(sigma: f64) -> f64 {
    let nearest = sigma.round();
    if (sigma - nearest).abs() <= INTEGER_TOLERANCE {
        1.0
    } else {
        sigma - sigma.floor()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionParams {
    pub n: usize,
    pub sigma: f64,
    pub sigma_bar: f64,
    /// Decay order of `psi`, `n + 2 sigma_bar`.
    pub q: f64,
    pub r: f64,
    pub mu: u32,
}

impl TestFunctionParams {
    pub fn new(n: usize, sigma: f64, r: f64) -> Result<Self> {
        if n == 0 || !(sigma >= 1.0) || !(r > 0.0) {
            return Err(Error::InvalidParams(format!(
                "test functions need n >= 1, sigma >= 1, R > 0 (got n = {n}, sigma = {sigma}, R = {r})"
            )));
        }
        let sb = sigma_bar(sigma);
        Ok(TestFunctionParams {
            n,
            sigma,
            sigma_bar: sb,
            q: n as f64 + 2.0 * sb,
            r,
            mu: DEFAULT_MU,
        })
    }

    pub fn psi(&self, x2: f64) -> f64 {
        japanese_power(x2, -self.q)
    }

    pub fn eta(&self) -> Eta {
        Eta { mu: self.mu }
    }

    /// `Phi_R(t, x)` with `x2 = |x|^2`.
    pub fn phi_r(&self, t: f64, x2: f64) -> f64 {
        let scale = self.r.powf(2.0 * self.sigma);
        self.eta().value(t / scale) * self.psi(x2 / (self.r * self.r))
    }
}

/// `<x>^e = (1 + |x|^2)^{e/2}` from `x2 = |x|^2`.
pub fn japanese_power(x2: f64, e: f64) -> f64 {
    (1.0 + x2).powf(0.5 * e)
}

/// `psi(x) = (1 + |x|^2)^{-n/2 - sigma_bar}`.
pub fn psi(x: &[f64], sigma_bar: f64) -> f64 {
    let x2: f64 = x.iter().map(|v| v * v).sum();
    japanese_power(x2, -(x.len() as f64) - 2.0 * sigma_bar)
}

/// `Phi_R(t, x) = eta(R^{-2 sigma} t) psi(x / R)`.
pub fn phi_r(t: f64, x: &[f64], r: f64, sigma: f64, eta: &Eta) -> f64 {
    let y: Vec<f64> = x.iter().map(|v| v / r).collect();
    eta.value(t / r.powf(2.0 * sigma)) * psi(&y, sigma_bar(sigma))
}

/// `eta(t) = h(2t - 1)` on `[1/2, 1]` with `h(s) = (1 - s^3)^mu`.
///
/// `h'(0) = h''(0) = 0` glues it in C^2 to the constant 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eta {
    pub mu: u32,
}

impl Default for Eta {
    fn default() -> Self {
        Eta { mu: DEFAULT_MU }
    }
}

impl Eta {
    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.5 {
            1.0
        } else if t >= 1.0 {
            0.0
        } else {
            let s = 2.0 * t - 1.0;
            (1.0 - s * s * s).powi(self.mu as i32)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.5 || t >= 1.0 {
            return 0.0;
        }
        let s = 2.0 * t - 1.0;
        let mu = self.mu as f64;
        let z = 1.0 - s * s * s;
        2.0 * (-3.0 * mu * s * s * z.powi(self.mu as i32 - 1))
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        if t <= 0.5 || t >= 1.0 {
            return 0.0;
        }
        let s = 2.0 * t - 1.0;
        let mu = self.mu as f64;
        let z = 1.0 - s * s * s;
        let m = self.mu as i32;
        let h2 = -6.0 * mu * s * z.powi(m - 1) + 9.0 * mu * (mu - 1.0) * s.powi(4) * z.powi(m - 2);
        4.0 * h2
    }

    /// `ln( eta^{-lambda'/lambda} (|eta'|^{lambda'} + |eta''|^{lambda'}) )` on `(1/2, 1)`.
    ///
    /// Evaluated from `ln(1 - s^3)` so that it stays finite arbitrarily close to `t = 1`.
    pub fn log_condition_quantity(&self, t: f64, lambda_prime: f64) -> f64 {
        let s = 2.0 * t - 1.0;
        let mu = self.mu as f64;
        // 1 - s^3 = (1 - s)(1 + s + s^2), with 1 - s = 2(1 - t) computed exactly.
        let lz = (2.0 * (1.0 - t)).ln() + (1.0 + s + s * s).ln();
        let z = lz.exp();
        let ratio = lambda_prime - 1.0; // lambda' / lambda
        let l_eta = mu * lz;
        let l_d1 = (6.0 * mu * s * s).ln() + (mu - 1.0) * lz;
        let l_d2 = (4.0 * (-6.0 * mu * s * z + 9.0 * mu * (mu - 1.0) * s.powi(4)).abs()).ln()
            + (mu - 2.0) * lz;
        let a = lambda_prime * l_d1;
        let b = lambda_prime * l_d2;
        let big = a.max(b);
        let sum = big + ((a - big).exp() + (b - big).exp()).ln();
        sum - ratio * l_eta
    }
}

impl Eta {
    /// `eta^{-lambda'/lambda} (|eta'|^{lambda'} + |eta''|^{lambda'})`; zero off `(1/2, 1)`.
    pub fn condition_quantity(&self, t: f64, lambda_prime: f64) -> f64 {
        if t <= 0.5 || t >= 1.0 {
            0.0
        } else {
            self.log_condition_quantity(t, lambda_prime).exp()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaCheck {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub mu: u32,
    /// `mu - 2 lambda'`: the quantity stays bounded near `t = 1` iff this is `>= 0`.
    pub exponent: f64,
    pub sup: f64,
    pub t_at_sup: f64,
    /// Value at the grid point closest to `t = 1`.
    pub edge_value: f64,
}

/// Bound above which the cutoff quantity counts as unbounded.
pub const ETA_LIMIT: f64 = 1e6;

/// Sup of `eta^{-lambda'/lambda} (|eta'|^{lambda'} + |eta''|^{lambda'})` over `[1/2, 1)`.
///
/// The grid is uniform on `[1/2, 0.999]` and log-uniform in `1 - t` down to
/// `1e-12`. Fails with [`Error::ConditionViolated`] when the quantity close to
/// `t = 1` exceeds [`ETA_LIMIT`] and grows towards the zero of `eta`.
pub fn verify_eta_condition(lambda: f64, eta: &Eta) -> Result<EtaCheck> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "lambda must exceed 1, got {lambda}"
        )));
    }
    let lp = lambda / (lambda - 1.0);
    let mut ts: Vec<f64> = (1..=4000)
        .map(|i| 0.5 + 0.499 * i as f64 / 4000.0)
        .collect();
    ts.extend(log_grid(1e-3, 1e-12, 400).into_iter().map(|d| 1.0 - d));
    let mut sup = 0.0_f64;
    let mut t_at_sup = 0.5;
    let mut values = Vec::with_capacity(ts.len());
    for &t in &ts {
        let v = eta.condition_quantity(t, lp);
        values.push(v);
        if !(v <= sup) {
            sup = v;
            t_at_sup = t;
        }
    }
    let edge_value = *values.last().unwrap_or(&0.0);
    let prev = values[values.len() - 2];
    let check = EtaCheck {
        lambda,
        lambda_prime: lp,
        mu: eta.mu,
        exponent: eta.mu as f64 - 2.0 * lp,
        sup,
        t_at_sup,
        edge_value,
    };
    if !edge_value.is_finite() || (edge_value > ETA_LIMIT && edge_value > prev) {
        return Err(Error::ConditionViolated {
            value: edge_value,
            exponent: check.exponent,
        });
    }
    Ok(check)
}

/// Spectral `(-Delta)^nu` on the periodic grid, without any edge check.
pub fn frac_laplacian_periodic(field: &[f64], grid: &GridSpec, nu: f64) -> Vec<f64> {
    let tr = Transform::new(grid);
    let mut c = tr.forward_real(field);
    for (z, a) in c.iter_mut().zip(grid.multiplier(nu)) {
        *z *= a;
    }
    tr.inverse_real(&c).0
}

/// Largest boundary value relative to the peak of `field`.
pub fn edge_ratio(field: &[f64], grid: &GridSpec) -> f64 {
    let peak = field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    let last = grid.points - 1;
    let mut edge = 0.0_f64;
    for (idx, v) in field.iter().enumerate() {
        let [i, j] = grid.unflatten(idx);
        let on_edge = i == 0 || i == last || (grid.n == 2 && (j == 0 || j == last));
        if on_edge {
            edge = edge.max(v.abs());
        }
    }
    edge / peak
}

/// `(-Delta)^nu` through the multiplier `|xi|^{2 nu}` for fields that vanish at the box edge.
pub fn frac_laplacian_grid(field: &[f64], grid: &GridSpec, nu: f64) -> Result<Vec<f64>> {
    grid.validate()?;
    if field.len() != grid.len() {
        return Err(Error::InvalidParams(format!(
            "field has {} values, grid has {}",
            field.len(),
            grid.len()
        )));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidParams(format!(
            "nu must be positive, got {nu}"
        )));
    }
    let edge = edge_ratio(field, grid);
    if edge > EDGE_LIMIT {
        return Err(Error::DataLeakage {
            edge,
            limit: EDGE_LIMIT,
        });
    }
    Ok(frac_laplacian_periodic(field, grid, nu))
}

/// Weight exponent of the decay bound for `(-Delta)^{m+s} <x>^{-q}`:
/// `n + 2m` when `s = 0`, else `n + 2s`.
pub fn lemma_3_1_weight(nu: f64, n: usize) -> f64 {
    let m = nu.floor();
    let s = nu - m;
    if s.abs() <= INTEGER_TOLERANCE || (1.0 - s).abs() <= INTEGER_TOLERANCE {
        n as f64 + 2.0 * nu.round()
    } else {
        n as f64 + 2.0 * s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Check {
    pub nu: f64,
    pub q: f64,
    pub weight: f64,
    pub points: usize,
    /// `sup_{|x| <= L/4} |(-Delta)^nu <x>^{-q}| <x>^{weight}`.
    pub sup_ratio: f64,
}

fn interior(grid: &GridSpec) -> Vec<bool> {
    let lim = (grid.half_length / 4.0).powi(2);
    grid.x_squared().into_iter().map(|x2| x2 <= lim).collect()
}

pub fn check_lemma_3_1(nu: f64, q: f64, grid: &GridSpec) -> Result<Lemma31Check> {
    grid.validate()?;
    if !(q > grid.n as f64) || !(nu > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need q > n and nu > 0, got q = {q}, nu = {nu}"
        )));
    }
    let x2 = grid.x_squared();
    let f: Vec<f64> = x2.iter().map(|&r| japanese_power(r, -q)).collect();
    let lap = frac_laplacian_periodic(&f, grid, nu);
    let weight = lemma_3_1_weight(nu, grid.n);
    let inside = interior(grid);
    let sup_ratio = lap
        .iter()
        .zip(&x2)
        .zip(&inside)
        .filter(|(_, keep)| **keep)
        .map(|((v, &r), _)| v.abs() * japanese_power(r, weight))
        .fold(0.0_f64, f64::max);
    Ok(Lemma31Check {
        nu,
        q,
        weight,
        points: grid.points,
        sup_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma32Check {
    pub nu: f64,
    pub r: f64,
    pub q: f64,
    pub points: usize,
    /// Max over interior points of the identity defect, relative to `max |R^{-2nu} (-Delta)^nu psi|`.
    pub relative_error: f64,
}

/// Box for the scaling check: `L = 64 R`, `points` per dimension.
pub fn lemma_3_2_grid(n: usize, r: f64, points: usize) -> Result<GridSpec> {
    GridSpec::new(n, points, 64.0 * r)
}

/// Compares `(-Delta)^nu (psi_R)(x)` with `R^{-2nu} ((-Delta)^nu psi)(x / R)`.
///
/// Both sides are computed on the same grid (box `L = 64 R`) and compared at
/// `x = R y` for grid points `y`, `|x| <= L/4`; `R` must be a positive integer so
/// that `R y` is again a grid point.
pub fn check_lemma_3_2(nu: f64, r: f64, q: f64, grid: &GridSpec) -> Result<Lemma32Check> {
    grid.validate()?;
    if !(r >= 1.0) || (r - r.round()).abs() > INTEGER_TOLERANCE {
        return Err(Error::InvalidParams(format!(
            "R must be a positive integer, got {r}"
        )));
    }
    let ri = r.round() as i64;
    let x2 = grid.x_squared();
    let psi_r: Vec<f64> = x2
        .iter()
        .map(|&v| japanese_power(v / (r * r), -q))
        .collect();
    let psi_1: Vec<f64> = x2.iter().map(|&v| japanese_power(v, -q)).collect();
    let (lap_r, lap_1) = rayon::join(
        || frac_laplacian_periodic(&psi_r, grid, nu),
        || frac_laplacian_periodic(&psi_1, grid, nu),
    );
    let scale_factor = r.powf(-2.0 * nu);
    let inside = interior(grid);
    let half = (grid.points / 2) as i64;
    let np = grid.points as i64;
    // Grid index of the centred offset `c` (x = c dx).
    let index = |c: i64| -> Option<usize> {
        let i = c + half;
        (0..np).contains(&i).then_some(i as usize)
    };
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for idx in 0..grid.len() {
        if !inside[idx] {
            continue;
        }
        let [i, j] = grid.unflatten(idx);
        let (ci, cj) = (i as i64 - half, j as i64 - half);
        // y = x / R must itself be a grid point.
        if ci % ri != 0 || (grid.n == 2 && cj % ri != 0) {
            continue;
        }
        let yi = index(ci / ri);
        let yj = if grid.n == 2 { index(cj / ri) } else { Some(0) };
        let (Some(yi), Some(yj)) = (yi, yj) else {
            continue;
        };
        let yidx = if grid.n == 1 {
            yi
        } else {
            yi * grid.points + yj
        };
        let rhs = scale_factor * lap_1[yidx];
        scale = scale.max(rhs.abs());
        worst = worst.max((lap_r[idx] - rhs).abs());
    }
    let relative_error = if scale > 0.0 { worst / scale } else { worst };
    Ok(Lemma32Check {
        nu,
        r,
        q,
        points: grid.points,
        relative_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma32Refinement {
    pub coarse: Lemma32Check,
    pub fine: Lemma32Check,
}

impl Lemma32Refinement {
    pub fn improves(&self) -> bool {
        self.fine.relative_error < self.coarse.relative_error
    }
}

/// Scaling check on `coarse_points` and twice as many points per dimension.
pub fn lemma_3_2_refinement(
    nu: f64,
    r: f64,
    q: f64,
    n: usize,
    coarse_points: usize,
) -> Result<Lemma32Refinement> {
    let (coarse, fine) = rayon::join(
        || check_lemma_3_2(nu, r, q, &lemma_3_2_grid(n, r, coarse_points)?),
        || check_lemma_3_2(nu, r, q, &lemma_3_2_grid(n, r, 2 * coarse_points)?),
    );
    Ok(Lemma32Refinement {
        coarse: coarse?,
        fine: fine?,
    })
}

/// Refinement studies over every `(nu, R)` pair; the coarse grid has `base * R` points.
pub fn lemma_3_2_sweep(
    nus: &[f64],
    radii: &[f64],
    q: f64,
    n: usize,
    base: usize,
) -> Result<Vec<Lemma32Refinement>> {
    let pairs: Vec<(f64, f64)> = nus
        .iter()
        .flat_map(|&nu| radii.iter().map(move |&r| (nu, r)))
        .collect();
    pairs
        .par_iter()
        .map(|&(nu, r)| lemma_3_2_refinement(nu, r, q, n, base * r.round().max(1.0) as usize))
        .collect()
}

/// JSON verification record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub lemma: String,
    pub params: serde_json::Value,
    pub value: f64,
    pub pass: bool,
}

/// Snapshot times for `F_R`: log-spaced up to `R^{2 sigma}/2`, uniform on
/// `[R^{2 sigma}/2, R^{2 sigma}]` where `eta'` and `eta''` live.
pub fn snapshot_schedule(r: f64, sigma: f64, coarse: usize, dense: usize) -> Vec<f64> {
    let top = r.powf(2.0 * sigma);
    let mut ts = vec![0.0];
    let lo = (top / 2.0 * 1e-3).min(0.1 * top);
    ts.extend(log_grid(lo, top / 2.0, coarse.max(2)));
    ts.extend((1..=dense).map(|i| top / 2.0 + top / 2.0 * i as f64 / dense as f64));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    ts
}

/// `F_R = int int |u_l|^p Phi_R dx dt` by trapezoid in time over the snapshots and
/// grid quadrature in space. `component` is zero-based.
pub fn functional_f_r(
    snapshots: &[FieldState],
    grid: &GridSpec,
    component: usize,
    p: f64,
    r: f64,
    sigma: f64,
    eta: &Eta,
) -> Result<f64> {
    let top = r.powf(2.0 * sigma);
    let mut nodes: Vec<&FieldState> = snapshots
        .iter()
        .filter(|s| s.time >= 0.0 && s.time <= top * (1.0 + 1e-12))
        .collect();
    nodes.sort_by(|a, b| a.time.total_cmp(&b.time));
    if nodes.len() < MIN_TIME_NODES {
        return Err(Error::InsufficientSnapshots {
            found: nodes.len(),
            required: MIN_TIME_NODES,
        });
    }
    if nodes.iter().any(|s| component >= s.components()) {
        return Err(Error::InvalidParams(format!(
            "component index {component} out of range"
        )));
    }
    let tr = Transform::new(grid);
    let cell = grid.dx().powi(grid.n as i32);
    let sb = sigma_bar(sigma);
    let q = grid.n as f64 + 2.0 * sb;
    let weights: Vec<f64> = grid
        .x_squared()
        .into_iter()
        .map(|x2| japanese_power(x2 / (r * r), -q) * cell)
        .collect();
    let values: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|s| {
            let (u, _) = tr.inverse_real(&s.u_hat[component]);
            let space: f64 = u
                .iter()
                .zip(&weights)
                .map(|(v, w)| {
                    let m = v.abs();
                    if m == 0.0 {
                        0.0
                    } else {
                        m.powf(p) * w
                    }
                })
                .sum();
            (s.time, eta.value(s.time / top) * space)
        })
        .collect();
    let mut total = 0.0;
    for w in values.windows(2) {
        total += 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1);
    }
    // eta vanishes at R^{2 sigma}; close the last interval against zero.
    if let Some(&(t_last, v_last)) = values.last() {
        if t_last < top {
            total += 0.5 * (top - t_last) * v_last;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalScaling {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    /// `-2 sigma + (n + 2 sigma) / p'` of one link of the functional chain.
    pub link_exponent: f64,
    /// `n - 2 sigma max gamma`, exponent of the closed chain.
    pub chain_exponent: f64,
}

/// `log F_R` against `log R` over `radii`, reported next to the chain exponents.
#[allow(clippy::too_many_arguments)]
pub fn functional_scaling(
    snapshots: &[FieldState],
    grid: &GridSpec,
    component: usize,
    p: f64,
    sigma: f64,
    gamma_max: f64,
    radii: &[f64],
    eta: &Eta,
) -> Result<FunctionalScaling> {
    let values = radii
        .iter()
        .map(|&r| functional_f_r(snapshots, grid, component, p, r, sigma, eta))
        .collect::<Result<Vec<f64>>>()?;
    let fit = loglog_fit(radii, &values)?;
    let n = grid.n as f64;
    let p_conj = p / (p - 1.0);
    Ok(FunctionalScaling {
        radii: radii.to_vec(),
        values,
        slope: fit.slope,
        link_exponent: -2.0 * sigma + (n + 2.0 * sigma) / p_conj,
        chain_exponent: n - 2.0 * sigma * gamma_max,
    })
}

/// Spectral state of a constant field `c` in every component.
pub fn constant_state(grid: &GridSpec, k: usize, c: f64, time: f64) -> FieldState {
    let mut s = FieldState::zeros(k, grid);
    s.time = time;
    for u in &mut s.u_hat {
        u[0] = Complex64::new(c, 0.0);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sigma_bar_cases() {
        assert_eq!(sigma_bar(2.0), 1.0);
        assert_eq!(sigma_bar(1.5), 0.5);
        assert_eq!(sigma_bar(1.0 + 1e-13), 1.0);
        assert!((sigma_bar(2.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn psi_and_eta_values() {
        assert_eq!(psi(&[0.0], 1.0), 1.0);
        assert!((psi(&[1.0], 1.0) - 2.0_f64.powf(-1.5)).abs() < 1e-15);
        let eta = Eta::default();
        assert_eq!(eta.value(0.3), 1.0);
        assert_eq!(eta.value(1.2), 0.0);
        let p = TestFunctionParams::new(1, 1.0, 2.0).unwrap();
        assert_eq!(p.phi_r(0.0, 0.0), 1.0);
        assert!((p.phi_r(1.0, 4.0) - 2.0_f64.powf(-1.5)).abs() < 1e-15);
        assert!((phi_r(1.0, &[2.0], 2.0, 1.0, &eta) - 2.0_f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn eta_is_c2_and_monotone() {
        let eta = Eta::default();
        let h = 1e-12;
        assert!(eta.derivative(0.5 + h).abs() < 1e-8);
        assert!(eta.second_derivative(0.5 + h).abs() < 1e-8);
        assert_eq!(eta.condition_quantity(0.25, 2.0), 0.0);
        assert_eq!(eta.condition_quantity(0.5, 2.0), 0.0);
        let mut last = 1.0;
        for i in 0..=1000 {
            let v = eta.value(0.5 + 0.5 * i as f64 / 1000.0);
            assert!(v <= last);
            last = v;
        }
        // Derivatives against centred differences.
        for t in [0.6, 0.75, 0.9] {
            let d = (eta.value(t + 1e-6) - eta.value(t - 1e-6)) / 2e-6;
            assert!((d - eta.derivative(t)).abs() < 1e-6 * (1.0 + d.abs()));
            let dd = (eta.derivative(t + 1e-6) - eta.derivative(t - 1e-6)) / 2e-6;
            assert!((dd - eta.second_derivative(t)).abs() < 1e-5 * (1.0 + dd.abs()));
        }
    }

    #[test]
    fn log_quantity_matches_direct_evaluation() {
        let eta = Eta::default();
        for t in [0.55, 0.7, 0.95] {
            let lp = 2.0;
            let direct = eta.value(t).powf(-(lp - 1.0))
                * (eta.derivative(t).abs().powf(lp) + eta.second_derivative(t).abs().powf(lp));
            let logged = eta.log_condition_quantity(t, lp).exp();
            assert!((direct - logged).abs() < 1e-10 * direct, "t={t}");
        }
    }

    #[test]
    fn eta_condition_cases() {
        let ok = verify_eta_condition(2.0, &Eta::default()).unwrap();
        assert!(ok.sup.is_finite() && ok.exponent == 12.0);
        assert!(matches!(
            verify_eta_condition(2.0, &Eta { mu: 2 }),
            Err(Error::ConditionViolated { exponent, .. }) if exponent == -2.0
        ));
        // lambda' = 10 > mu / 2 = 8.
        assert!(verify_eta_condition(10.0 / 9.0, &Eta::default()).is_err());
    }

    #[test]
    fn fractional_laplacian_basics() {
        let g = GridSpec::new(1, 256, 20.0).unwrap();
        let x = g.coordinates();
        let gauss: Vec<f64> = x.iter().map(|v| (-v * v).exp()).collect();
        let lap = frac_laplacian_grid(&gauss, &g, 1.0).unwrap();
        for (v, xv) in lap.iter().zip(&x) {
            let exact = (2.0 - 4.0 * xv * xv) * (-xv * xv).exp();
            assert!((v - exact).abs() < 1e-8);
        }
        let single: Vec<f64> = x.iter().map(|v| (PI / 20.0 * 5.0 * v).cos()).collect();
        assert!(frac_laplacian_grid(&single, &g, 0.5).is_err());
        let out = frac_laplacian_periodic(&single, &g, 0.75);
        let factor = (PI / 20.0 * 5.0).powf(1.5);
        for (a, b) in out.iter().zip(&single) {
            assert!((a - factor * b).abs() < 1e-12);
        }
        let constant = vec![3.0; g.len()];
        assert!(frac_laplacian_periodic(&constant, &g, 1.3)
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn lemma_3_1_weights() {
        assert_eq!(lemma_3_1_weight(1.0, 1), 3.0);
        assert_eq!(lemma_3_1_weight(2.0, 2), 6.0);
        assert_eq!(lemma_3_1_weight(1.5, 1), 2.0);
        assert_eq!(lemma_3_1_weight(0.5, 1), 2.0);
    }

    #[test]
    fn lemma_3_2_identity_at_r_one() {
        let g = lemma_3_2_grid(1, 1.0, 1024).unwrap();
        let c = check_lemma_3_2(1.0, 1.0, 3.0, &g).unwrap();
        assert_eq!(c.relative_error, 0.0);
    }

    #[test]
    fn lemma_3_2_refines() {
        let r = lemma_3_2_refinement(1.0, 2.0, 3.0, 1, 512).unwrap();
        assert!(r.improves());
        assert!(r.fine.relative_error < 1e-3);
    }

    #[test]
    fn lemma_3_1_grid_stable() {
        for (nu, q) in [(1.0, 3.0), (1.5, 2.0), (0.5, 2.0)] {
            let a = check_lemma_3_1(nu, q, &GridSpec::new(1, 1024, 64.0).unwrap()).unwrap();
            let b = check_lemma_3_1(nu, q, &GridSpec::new(1, 2048, 64.0).unwrap()).unwrap();
            assert!(a.sup_ratio.is_finite());
            assert!((a.sup_ratio - b.sup_ratio).abs() < 0.1 * b.sup_ratio);
        }
    }

    #[test]
    fn functional_of_constant_field() {
        let g = GridSpec::new(1, 256, 40.0).unwrap();
        let (r, sigma, p, c) = (2.0, 1.0, 2.0, 0.3);
        let eta = Eta::default();
        let ts = snapshot_schedule(r, sigma, 40, 200);
        let snaps: Vec<FieldState> = ts.iter().map(|&t| constant_state(&g, 2, c, t)).collect();
        let f = functional_f_r(&snaps, &g, 0, p, r, sigma, &eta).unwrap();
        // Oracle: direct quadrature of Phi_R on a much finer time grid.
        let top = r.powf(2.0 * sigma);
        let m = 200_000;
        let time_int: f64 = (0..m)
            .map(|i| eta.value((i as f64 + 0.5) / m as f64) * top / m as f64)
            .sum();
        let space: f64 = g
            .x_squared()
            .iter()
            .map(|&x2| japanese_power(x2 / (r * r), -3.0) * g.dx())
            .sum();
        let expect = c.powf(p) * time_int * space;
        assert!((f - expect).abs() < 2e-4 * expect, "{f} vs {expect}");
        assert!(functional_f_r(&snaps[..10], &g, 0, p, r, sigma, &eta).is_err());
        let zero: Vec<FieldState> = ts.iter().map(|&t| constant_state(&g, 2, 0.0, t)).collect();
        assert_eq!(
            functional_f_r(&zero, &g, 1, p, r, sigma, &eta).unwrap(),
            0.0
        );
    }
}
