use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::Transform;
use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Gaussian tails at the box edge may not exceed this fraction of the peak.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

/// Spectral coefficients of `(u_l, u_l')` for every component.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub time: f64,
    pub u_hat: Vec<Vec<Complex64>>,
    pub v_hat: Vec<Vec<Complex64>>,
}

impl FieldState {
    pub fn zeros(k: usize, grid: &GridSpec) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        FieldState {
            time: 0.0,
            u_hat: vec![z.clone(); k],
            v_hat: vec![z; k],
        }
    }

    pub fn components(&self) -> usize {
        self.u_hat.len()
    }

    pub fn is_finite(&self) -> bool {
        self.u_hat
            .iter()
            .chain(&self.v_hat)
            .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Largest `|c(xi) - conj(c(-xi))|` relative to the largest coefficient.
    pub fn conjugate_asymmetry(&self, grid: &GridSpec) -> f64 {
        let mirror = |idx: usize| {
            let [i, j] = grid.unflatten(idx);
            let mi = (grid.points - i) % grid.points;
            if grid.n == 1 {
                mi
            } else {
                mi * grid.points + (grid.points - j) % grid.points
            }
        };
        let mut worst: f64 = 0.0;
        for c in self.u_hat.iter().chain(&self.v_hat) {
            let scale = c.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            if scale == 0.0 {
                continue;
            }
            for idx in 0..c.len() {
                worst = worst.max((c[idx] - c[mirror(idx)].conj()).norm() / scale);
            }
        }
        worst
    }
}

/// Gaussian profile `eps A exp(-|x - c|^2 / w^2)` for `u_0` and `u_1` of one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentData {
    pub amp_u0: f64,
    pub amp_u1: f64,
    pub width: f64,
    #[serde(default)]
    pub center: Vec<f64>,
}

impl ComponentData {
    pub fn gaussian(amp_u0: f64, amp_u1: f64, width: f64) -> Self {
        ComponentData {
            amp_u0,
            amp_u1,
            width,
            center: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    /// Data size `epsilon`.
    pub eps: f64,
    pub components: Vec<ComponentData>,
}

impl InitialData {
    /// Same unit Gaussian for every `u_0` and `u_1`.
    pub fn uniform(eps: f64, k: usize, width: f64) -> Self {
        InitialData {
            eps,
            components: vec![ComponentData::gaussian(1.0, 1.0, width); k],
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        InitialData {
            eps,
            components: self.components.clone(),
        }
    }

    /// Means of `u_0` and `u_1` positive for every component; on the torus this
    /// is what remains of the sign conditions on the data.
    pub fn check_positive_means(&self) -> Result<()> {
        for (l, c) in self.components.iter().enumerate() {
            if !(self.eps * c.amp_u0 > 0.0 && self.eps * c.amp_u1 > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "blow-up runs need positive means of u_0 and u_1; component {} has eps A0 = {}, eps A1 = {}",
                    l + 1,
                    self.eps * c.amp_u0,
                    self.eps * c.amp_u1
                )));
            }
        }
        Ok(())
    }
}

/// Discrete means, integrals and data norms of the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataReport {
    pub mean_u0: Vec<f64>,
    pub mean_u1: Vec<f64>,
    pub integral_u0: Vec<f64>,
    pub integral_u1: Vec<f64>,
    /// `||u_0||_{L^1} + ||u_0||_{H^sigma} + ||u_1||_{L^1} + ||u_1||_{L^2}` per component.
    pub data_norm: Vec<f64>,
    pub total_norm: f64,
}

fn gaussian_field(grid: &GridSpec, amp: f64, width: f64, center: &[f64]) -> Vec<f64> {
    let x = grid.coordinates();
    let c = |d: usize| center.get(d).copied().unwrap_or(0.0);
    (0..grid.len())
        .map(|idx| {
            let [i, j] = grid.unflatten(idx);
            let mut r2 = (x[i] - c(0)).powi(2);
            if grid.n == 2 {
                r2 += (x[j] - c(1)).powi(2);
            }
            amp * (-r2 / (width * width)).exp()
        })
        .collect()
}

/// Spectral initial state plus its data report.
pub fn make_initial_data(
    grid: &GridSpec,
    sigma: f64,
    data: &InitialData,
) -> Result<(FieldState, DataReport)> {
    grid.validate()?;
    let k = data.components.len();
    let tr = Transform::new(grid);
    let mut state = FieldState::zeros(k, grid);
    let xi2 = grid.xi_squared();
    let vol = grid.volume();
    let cell = grid.dx().powi(grid.n as i32);
    let mut report = DataReport {
        mean_u0: Vec::with_capacity(k),
        mean_u1: Vec::with_capacity(k),
        integral_u0: Vec::with_capacity(k),
        integral_u1: Vec::with_capacity(k),
        data_norm: Vec::with_capacity(k),
        total_norm: 0.0,
    };
    for (l, c) in data.components.iter().enumerate() {
        if !(c.width > 0.0 && c.width.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "component {} has non-positive width {}",
                l + 1,
                c.width
            )));
        }
        if c.center.len() > grid.n {
            return Err(Error::InvalidParams(format!(
                "component {} center has {} coordinates for an n = {} grid",
                l + 1,
                c.center.len(),
                grid.n
            )));
        }
        let active = c.amp_u0 != 0.0 || c.amp_u1 != 0.0;
        if active && data.eps != 0.0 {
            let d = (0..grid.n)
                .map(|dim| grid.half_length - c.center.get(dim).copied().unwrap_or(0.0).abs())
                .fold(f64::INFINITY, f64::min);
            let edge = if d <= 0.0 {
                1.0
            } else {
                (-(d * d) / (c.width * c.width)).exp()
            };
            if edge > LEAKAGE_LIMIT {
                return Err(Error::DataLeakage {
                    edge,
                    limit: LEAKAGE_LIMIT,
                });
            }
        }
        let u0 = gaussian_field(grid, data.eps * c.amp_u0, c.width, &c.center);
        let u1 = gaussian_field(grid, data.eps * c.amp_u1, c.width, &c.center);
        state.u_hat[l] = tr.forward_real(&u0);
        state.v_hat[l] = tr.forward_real(&u1);

        let l1 = |f: &[f64]| f.iter().map(|x| x.abs()).sum::<f64>() * cell;
        let weighted = |coeffs: &[Complex64], inhomogeneous: bool| {
            let s: f64 = coeffs
                .iter()
                .zip(&xi2)
                .map(|(z, &x2)| {
                    let w = if inhomogeneous {
                        (1.0 + x2).powf(sigma)
                    } else {
                        1.0
                    };
                    w * z.norm_sqr()
                })
                .sum();
            (vol * s).sqrt()
        };
        let norm =
            l1(&u0) + weighted(&state.u_hat[l], true) + l1(&u1) + weighted(&state.v_hat[l], false);
        report.mean_u0.push(state.u_hat[l][0].re);
        report.mean_u1.push(state.v_hat[l][0].re);
        report.integral_u0.push(state.u_hat[l][0].re * vol);
        report.integral_u1.push(state.v_hat[l][0].re * vol);
        report.data_norm.push(norm);
        report.total_norm += norm;
    }
    Ok((state, report))
}
