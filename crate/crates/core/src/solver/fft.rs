use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::GridSpec;

/// Normalized transforms: `forward` returns `DFT(u) / N^n`, `inverse` is its exact inverse.
#[derive(Clone)]
pub struct Transform {
    n: usize,
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("n", &self.n)
            .field("points", &self.points)
            .finish()
    }
}

fn transpose(buf: &mut [Complex64], side: usize) {
    for i in 0..side {
        for j in i + 1..side {
            buf.swap(i * side + j, j * side + i);
        }
    }
}

impl Transform {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Transform {
            n: grid.n,
            points: grid.points,
            forward: planner.plan_fft_forward(grid.points),
            inverse: planner.plan_fft_inverse(grid.points),
        }
    }

    fn apply(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        plan.process(buf);
        if self.n == 2 {
            transpose(buf, self.points);
            plan.process(buf);
            transpose(buf, self.points);
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.apply(&self.forward, buf);
        let scale = 1.0 / buf.len() as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.apply(&self.inverse, buf);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform; returns the real part and `max |Im|`.
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> (Vec<f64>, f64) {
        let mut buf = coeffs.to_vec();
        self.inverse(&mut buf);
        let imag = buf.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
        (buf.into_iter().map(|c| c.re).collect(), imag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_and_single_mode() {
        for n in [1, 2] {
            let g = GridSpec::new(n, 16, PI).unwrap();
            let tr = Transform::new(&g);
            let x = g.coordinates();
            let vals: Vec<f64> = (0..g.len())
                .map(|idx| {
                    let [i, j] = g.unflatten(idx);
                    (3.0 * x[i]).cos() + if n == 2 { (2.0 * x[j]).sin() } else { 0.0 }
                })
                .collect();
            let c = tr.forward_real(&vals);
            let (back, imag) = tr.inverse_real(&c);
            assert!(imag < 1e-13);
            for (a, b) in vals.iter().zip(&back) {
                assert!((a - b).abs() < 1e-13);
            }
            // cos(3x) splits evenly between m = 3 and m = -3.
            let i3 = if n == 1 { 3 } else { 3 * 16 };
            assert!((c[i3].norm() - 0.5).abs() < 1e-14);
        }
    }
}
