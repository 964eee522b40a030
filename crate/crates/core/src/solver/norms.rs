use serde::{Deserialize, Serialize};

use super::data::FieldState;
use super::fft::Transform;
use super::grid::GridSpec;

/// Per-component norms at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: Vec<f64>,
    /// `|| |D|^sigma u ||_{L^2}`.
    pub hs: Vec<f64>,
    pub sup: Vec<f64>,
    /// Spatial average.
    pub mean: Vec<f64>,
}

/// L^2 and homogeneous H^sigma through Parseval, sup on the grid.
///
/// `a` is the multiplier table `|xi|^{2 sigma}`.
pub fn norms_with(state: &FieldState, grid: &GridSpec, a: &[f64], tr: &Transform) -> Norms {
    let vol = grid.volume();
    let k = state.components();
    let mut out = Norms {
        l2: Vec::with_capacity(k),
        hs: Vec::with_capacity(k),
        sup: Vec::with_capacity(k),
        mean: Vec::with_capacity(k),
    };
    for c in &state.u_hat {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (z, &w) in c.iter().zip(a) {
            let q = z.norm_sqr();
            s0 += q;
            s1 += w * q;
        }
        out.l2.push((vol * s0).sqrt());
        out.hs.push((vol * s1).sqrt());
        let (phys, _) = tr.inverse_real(c);
        out.sup
            .push(phys.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
        out.mean.push(c[0].re);
    }
    out
}

pub fn norms(state: &FieldState, grid: &GridSpec, sigma: f64) -> Norms {
    norms_with(state, grid, &grid.multiplier(sigma), &Transform::new(grid))
}
