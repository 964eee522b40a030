use rustfft::num_complex::Complex64;

use super::data::FieldState;
use super::fft::Transform;
use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::exponents::SystemParams;
use crate::kernels::{propagator, PropagatorSample};

/// Default sup-norm level treated as blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Values of `|u|` below this contribute nothing to `|u|^p`.
const TINY: f64 = 1e-300;

/// Physical-space view of a state: the real fields and bookkeeping from the inverse transform.
#[derive(Clone, Debug)]
pub struct Physical {
    pub fields: Vec<Vec<f64>>,
    /// `max |u|` over all components, infinite if any value is not finite.
    pub sup: f64,
    /// `max |Im u| / max |u|` of the inverse transforms.
    pub imag_ratio: f64,
}

/// Second-order exponential integrator (ETD2RK) for the cyclic system.
///
/// Each mode is advanced by the exact linear propagator; the nonlinear forcing
/// enters through the Duhamel weights of a forcing that is linear in time over
/// the step, with the end value taken from a first-order predictor.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: SystemParams,
    grid: GridSpec,
    transform: Transform,
    a: Vec<f64>,
    mask: Vec<bool>,
    nonlinear: bool,
    pub threshold: f64,
    cache: Option<(f64, Vec<PropagatorSample>)>,
}

impl Stepper {
    pub fn new(params: &SystemParams, grid: &GridSpec, nonlinear: bool) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        Ok(Stepper {
            params: params.clone(),
            grid: *grid,
            transform: Transform::new(grid),
            a: grid.multiplier(params.sigma),
            mask: grid.dealias_mask(),
            nonlinear,
            threshold: BLOWUP_THRESHOLD,
            cache: None,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    /// Multiplier table `|xi|^{2 sigma}`.
    pub fn symbol(&self) -> &[f64] {
        &self.a
    }

    pub fn physical(&self, state: &FieldState) -> Physical {
        let mut sup: f64 = 0.0;
        let mut imag: f64 = 0.0;
        let fields: Vec<Vec<f64>> = state
            .u_hat
            .iter()
            .map(|c| {
                let (f, im) = self.transform.inverse_real(c);
                imag = imag.max(im);
                for x in &f {
                    sup = if x.is_finite() {
                        sup.max(x.abs())
                    } else {
                        f64::INFINITY
                    };
                }
                f
            })
            .collect();
        Physical {
            fields,
            sup,
            imag_ratio: if sup > 0.0 { imag / sup } else { 0.0 },
        }
    }

    /// Dealiased spectral forcing `|u_{l-1}|^{p_l}`, with `u_0 = u_k`.
    fn forcing(&self, phys: &Physical) -> Vec<Vec<Complex64>> {
        let k = self.params.k();
        (0..k)
            .map(|l| {
                let src = &phys.fields[(l + k - 1) % k];
                let p = self.params.p[l];
                let vals: Vec<f64> = src
                    .iter()
                    .map(|&u| {
                        let m = u.abs();
                        if m < TINY {
                            0.0
                        } else {
                            (p * m.ln()).exp()
                        }
                    })
                    .collect();
                let mut hat = self.transform.forward_real(&vals);
                for (z, keep) in hat.iter_mut().zip(&self.mask) {
                    if !keep {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
                hat
            })
            .collect()
    }

    fn coefficients(&mut self, dt: f64) -> Vec<PropagatorSample> {
        if let Some((h, c)) = &self.cache {
            if *h == dt {
                return c.clone();
            }
        }
        let c: Vec<PropagatorSample> = self.a.iter().map(|&a| propagator(dt, a)).collect();
        self.cache = Some((dt, c.clone()));
        c
    }

    fn coefficients_uncached(&self, dt: f64) -> Vec<PropagatorSample> {
        self.a.iter().map(|&a| propagator(dt, a)).collect()
    }

    /// One step from `state` whose physical view is `phys`, without blow-up checks.
    pub fn advance_from(
        &mut self,
        state: &FieldState,
        phys: &Physical,
        dt: f64,
        cache: bool,
    ) -> FieldState {
        let coeff = if cache {
            self.coefficients(dt)
        } else {
            self.coefficients_uncached(dt)
        };
        let k = state.components();
        let linear = |l: usize, out_u: &mut Vec<Complex64>, out_v: &mut Vec<Complex64>| {
            for (i, c) in coeff.iter().enumerate() {
                let (u0, v0) = (state.u_hat[l][i], state.v_hat[l][i]);
                out_u[i] = u0 * c.k0 + v0 * c.k1;
                out_v[i] = u0 * c.dk0 + v0 * c.dk1;
            }
        };
        let zero = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        let mut next = FieldState {
            time: state.time + dt,
            u_hat: vec![zero.clone(); k],
            v_hat: vec![zero; k],
        };
        for l in 0..k {
            let (mut u, mut v) = (
                std::mem::take(&mut next.u_hat[l]),
                std::mem::take(&mut next.v_hat[l]),
            );
            linear(l, &mut u, &mut v);
            next.u_hat[l] = u;
            next.v_hat[l] = v;
        }
        if !self.nonlinear {
            return next;
        }

        let f0 = self.forcing(phys);
        let mut predicted = next.clone();
        for (u, f) in predicted.u_hat.iter_mut().zip(&f0) {
            for ((u, f), c) in u.iter_mut().zip(f).zip(&coeff) {
                *u += f * c.i1;
            }
        }
        let f1 = self.forcing(&self.physical(&predicted));
        for l in 0..k {
            for (i, c) in coeff.iter().enumerate() {
                let (w1, w2) = (c.i1 / dt, c.i2 / dt);
                next.u_hat[l][i] += f0[l][i] * (c.i1 - w2) + f1[l][i] * w2;
                next.v_hat[l][i] += f0[l][i] * (c.k1 - w1) + f1[l][i] * w1;
            }
        }
        next
    }

    /// One step of size `dt`.
    ///
    /// Fails with [`Error::BlowUpDetected`] carrying the new state when its sup
    /// norm exceeds the threshold or is not finite.
    pub fn step(&mut self, state: &FieldState, dt: f64) -> Result<FieldState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let phys = self.physical(state);
        let next = self.advance_from(state, &phys, dt, true);
        let after = self.physical(&next);
        if !(after.sup <= self.threshold) || !next.is_finite() {
            return Err(Error::BlowUpDetected {
                time: next.time,
                sup: after.sup,
                state: Box::new(next),
            });
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::data::{make_initial_data, InitialData};

    fn params() -> SystemParams {
        SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap()
    }

    #[test]
    fn single_mode_linear_propagation() {
        let g = GridSpec::new(1, 64, 10.0).unwrap();
        let mut st = Stepper::new(&params(), &g, false).unwrap();
        let mut s = FieldState::zeros(2, &g);
        let (u0, v0) = (Complex64::new(0.3, -0.2), Complex64::new(-0.1, 0.4));
        s.u_hat[0][5] = u0;
        s.v_hat[0][5] = v0;
        for _ in 0..37 {
            s = st.step(&s, 0.1).unwrap();
        }
        let a = g.multiplier(1.0)[5];
        let p = propagator(3.7, a);
        let expect = u0 * p.k0 + v0 * p.k1;
        assert!((s.u_hat[0][5] - expect).norm() < 1e-10 * expect.norm());
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = GridSpec::new(1, 64, 10.0).unwrap();
        let mut st = Stepper::new(&params(), &g, true).unwrap();
        let mut s = FieldState::zeros(2, &g);
        for _ in 0..5 {
            s = st.step(&s, 0.1).unwrap();
        }
        assert!(s.u_hat.iter().flatten().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn mass_mode_with_velocity_data() {
        let g = GridSpec::new(1, 32, 5.0).unwrap();
        let mut st = Stepper::new(&params(), &g, false).unwrap();
        let mut s = FieldState::zeros(2, &g);
        let c = 0.7;
        s.v_hat[1][0] = Complex64::new(c, 0.0);
        for _ in 0..20 {
            s = st.step(&s, 0.25).unwrap();
        }
        assert!((s.u_hat[1][0].re - c * (1.0 - (-5.0_f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn constant_forcing_follows_mean_ode() {
        // u_2 = c sits in the mass mode and stays put, so the forcing c^2 of u_1 is
        // constant over the step and one ETD step integrates it exactly.
        let g = GridSpec::new(1, 16, 5.0).unwrap();
        let p = SystemParams::new(1, 1.0, vec![2.0, 3.0]).unwrap();
        let mut st = Stepper::new(&p, &g, true).unwrap();
        let mut s = FieldState::zeros(2, &g);
        s.u_hat[1][0] = Complex64::new(0.5, 0.0);
        let next = st.step(&s, 0.3).unwrap();
        let expect = 0.25 * propagator(0.3, 0.0).i1;
        assert!((next.u_hat[0][0].re - expect).abs() < 1e-15);
    }

    #[test]
    fn conjugate_symmetry_survives_nonlinear_steps() {
        let g = GridSpec::new(1, 128, 20.0).unwrap();
        let (mut s, _) = make_initial_data(&g, 1.0, &InitialData::uniform(0.5, 2, 1.5)).unwrap();
        let mut st = Stepper::new(&params(), &g, true).unwrap();
        for _ in 0..50 {
            s = st.step(&s, 0.05).unwrap();
        }
        assert!(s.conjugate_asymmetry(&g) < 1e-12);
        assert!(st.physical(&s).imag_ratio < 1e-10);
    }

    #[test]
    fn blow_up_is_reported() {
        let g = GridSpec::new(1, 64, 10.0).unwrap();
        let p = SystemParams::new(1, 1.0, vec![2.0, 2.0]).unwrap();
        let (s, _) = make_initial_data(&g, 1.0, &InitialData::uniform(50.0, 2, 1.0)).unwrap();
        let mut st = Stepper::new(&p, &g, true).unwrap();
        st.threshold = 1e3;
        let mut cur = s;
        let mut hit = false;
        for _ in 0..200 {
            match st.step(&cur, 0.01) {
                Ok(next) => cur = next,
                Err(Error::BlowUpDetected { sup, .. }) => {
                    assert!(sup > 1e3);
                    hit = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(hit);
    }
}
