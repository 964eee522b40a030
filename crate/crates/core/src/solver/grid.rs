use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic box `[-L, L]^n` sampled with `N` points per dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    /// Points per dimension, a power of two.
    pub points: usize,
    /// Half-length `L`.
    pub half_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: 1,
            points: 512,
            half_length: 40.0,
        }
    }
}

impl GridSpec {
    pub fn new(n: usize, points: usize, half_length: f64) -> Result<Self> {
        let g = GridSpec {
            n,
            points,
            half_length,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n == 1 || self.n == 2) {
            return Err(Error::InvalidParams(format!(
                "grid dimension must be 1 or 2, got {}",
                self.n
            )));
        }
        if self.points < 4 || !self.points.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "points per dimension must be a power of two >= 4, got {}",
                self.points
            )));
        }
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "half-length must be positive, got {}",
                self.half_length
            )));
        }
        Ok(())
    }

    /// Total number of grid points `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Measure of the box, `(2L)^n`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_length).powi(self.n as i32)
    }

    /// Signed integer wavenumber of FFT index `m`, in `[-N/2, N/2)`.
    pub fn signed_index(&self, m: usize) -> i64 {
        let nn = self.points as i64;
        let m = m as i64;
        if m < nn / 2 {
            m
        } else {
            m - nn
        }
    }

    /// One-dimensional wavenumbers `(pi / L) m`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points)
            .map(|m| PI / self.half_length * self.signed_index(m) as f64)
            .collect()
    }

    /// Largest resolved `|xi|` per dimension, `(pi / L)(N / 2)`.
    pub fn max_wavenumber(&self) -> f64 {
        PI / self.half_length * (self.points / 2) as f64
    }

    /// Coordinates `-L + j dx`.
    pub fn coordinates(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.points)
            .map(|j| -self.half_length + j as f64 * dx)
            .collect()
    }

    /// Splits a flat index into per-dimension indices (row-major, last fastest).
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.n == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    /// `|xi|^2` for every flat index.
    pub fn xi_squared(&self) -> Vec<f64> {
        let k = self.wavenumbers();
        (0..self.len())
            .map(|idx| {
                let [i, j] = self.unflatten(idx);
                if self.n == 1 {
                    k[i] * k[i]
                } else {
                    k[i] * k[i] + k[j] * k[j]
                }
            })
            .collect()
    }

    /// Multiplier table `|xi|^{2 nu}`; zero at `xi = 0`.
    pub fn multiplier(&self, nu: f64) -> Vec<f64> {
        self.xi_squared()
            .into_iter()
            .map(|x2| if x2 == 0.0 { 0.0 } else { x2.powf(nu) })
            .collect()
    }

    /// `|x|^2` at every grid point.
    pub fn x_squared(&self) -> Vec<f64> {
        let x = self.coordinates();
        (0..self.len())
            .map(|idx| {
                let [i, j] = self.unflatten(idx);
                if self.n == 1 {
                    x[i] * x[i]
                } else {
                    x[i] * x[i] + x[j] * x[j]
                }
            })
            .collect()
    }

    /// Mask of modes kept by the 2/3 rule: `|m| <= N/3` in every dimension.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let cut = (self.points / 3) as i64;
        (0..self.len())
            .map(|idx| {
                let [i, j] = self.unflatten(idx);
                let ok_i = self.signed_index(i).abs() <= cut;
                if self.n == 1 {
                    ok_i
                } else {
                    ok_i && self.signed_index(j).abs() <= cut
                }
            })
            .collect()
    }
}
