use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::data::{make_initial_data, DataReport, FieldState, InitialData};
use super::grid::GridSpec;
use super::norms::{norms_with, Norms};
use super::stepper::{Physical, Stepper, BLOWUP_THRESHOLD};
use crate::error::{Error, Result};
use crate::exponents::SystemParams;
use crate::stats::log_grid;

/// Bisection steps used to locate the threshold crossing inside the last step.
pub const BISECTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed {
        dt: f64,
    },
    /// Halves the step when the sup norm changes by more than `tolerance`
    /// (relative) in one step and doubles it after `calm_steps` quiet steps.
    Adaptive {
        initial: f64,
        min: f64,
        max: f64,
        tolerance: f64,
        calm_steps: usize,
    },
}

impl DtPolicy {
    pub fn adaptive(initial: f64) -> Self {
        DtPolicy::Adaptive {
            initial,
            min: initial * 1e-9,
            max: initial,
            tolerance: 0.1,
            calm_steps: 8,
        }
    }

    fn initial(&self) -> f64 {
        match *self {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Adaptive { initial, .. } => initial,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DtPolicy::Fixed { dt } => dt > 0.0 && dt.is_finite(),
            DtPolicy::Adaptive {
                initial,
                min,
                max,
                tolerance,
                ..
            } => {
                min > 0.0 && min <= initial && initial <= max && max.is_finite() && tolerance > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "invalid time-step policy {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub t_end: f64,
    pub dt: DtPolicy,
    /// Times at which norms are recorded; sorted, within `[0, t_end]`.
    pub output_times: Vec<f64>,
    /// Times at which the full state is archived.
    pub snapshot_times: Vec<f64>,
    pub nonlinear: bool,
    pub threshold: f64,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl RunOptions {
    /// Nonlinear run with norms on a logarithmic schedule, 40 points per decade from `t = 0.1`.
    pub fn new(t_end: f64, dt: DtPolicy) -> Self {
        RunOptions {
            t_end,
            dt,
            output_times: log_schedule(0.1, t_end, 40),
            snapshot_times: Vec::new(),
            nonlinear: true,
            threshold: BLOWUP_THRESHOLD,
            cancel: None,
        }
    }
}

/// `0` followed by log-uniform times from `t_first` to `t_end`.
pub fn log_schedule(t_first: f64, t_end: f64, per_decade: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    if t_end <= 0.0 {
        return out;
    }
    let t_first = t_first.min(t_end);
    let decades = (t_end / t_first).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
    out.extend(log_grid(t_first, t_end, count));
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub t: f64,
    #[serde(flatten)]
    pub norms: Norms,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    /// Crossing time, midpoint of the final bisection interval.
    pub time: f64,
    /// Half-width of the bisection interval around `time`.
    pub uncertainty: f64,
    pub sup: f64,
    pub last_regular_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub rejected_steps: usize,
    pub smallest_dt: f64,
    pub max_imag_ratio: f64,
    pub t_reached: f64,
    pub cancelled: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub records: Vec<NormRecord>,
    pub blowup: Option<BlowUp>,
    pub snapshots: Vec<FieldState>,
    pub final_state: FieldState,
    pub data: Option<DataReport>,
    pub diagnostics: RunDiagnostics,
}

impl RunResult {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Series of one norm of component `l` (zero-based).
    pub fn series(&self, l: usize, pick: impl Fn(&Norms) -> &Vec<f64>) -> Vec<f64> {
        self.records.iter().map(|r| pick(&r.norms)[l]).collect()
    }
}

/// Builds the initial state from `data` and integrates it.
pub fn run(
    params: &SystemParams,
    grid: &GridSpec,
    data: &InitialData,
    options: &RunOptions,
) -> Result<RunResult> {
    if data.components.len() != params.k() {
        return Err(Error::InvalidParams(format!(
            "initial data has {} components, the system has {}",
            data.components.len(),
            params.k()
        )));
    }
    let (state, report) = make_initial_data(grid, params.sigma, data)?;
    let mut result = run_from_state(params, grid, state, options)?;
    result.data = Some(report);
    Ok(result)
}

fn is_cancelled(flag: &Option<Arc<AtomicBool>>) -> bool {
    flag.as_ref().is_some_and(|f| f.load(Ordering::Relaxed))
}

/// Integrates `state` to `options.t_end` or until blow-up.
pub fn run_from_state(
    params: &SystemParams,
    grid: &GridSpec,
    initial: FieldState,
    options: &RunOptions,
) -> Result<RunResult> {
    options.dt.validate()?;
    if !(options.t_end >= initial.time && options.t_end.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "t_end = {} precedes the initial time {}",
            options.t_end, initial.time
        )));
    }
    if initial.components() != params.k() {
        return Err(Error::InvalidParams(
            "state and system disagree on k".into(),
        ));
    }
    let mut stepper = Stepper::new(params, grid, options.nonlinear)?;
    stepper.threshold = options.threshold;
    let symbol = stepper.symbol().to_vec();
    let tr = stepper.transform().clone();

    let t_end = options.t_end;
    let mut outputs: Vec<f64> = options
        .output_times
        .iter()
        .copied()
        .filter(|t| *t >= initial.time && *t <= t_end)
        .collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    let mut snaps: Vec<f64> = options
        .snapshot_times
        .iter()
        .copied()
        .filter(|t| *t >= initial.time && *t <= t_end)
        .collect();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();

    let mut state = initial;
    let mut phys: Physical = stepper.physical(&state);
    if !state.is_finite() {
        return Err(Error::InvalidParams("initial state is not finite".into()));
    }
    let sup_floor = 1e-3 * phys.sup.max(1e-9);
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut diag = RunDiagnostics {
        smallest_dt: f64::INFINITY,
        max_imag_ratio: phys.imag_ratio,
        ..Default::default()
    };
    let (mut oi, mut si) = (0, 0);
    let eps_t = |t: f64| 1e-12 * (1.0 + t.abs());

    let archive = |state: &FieldState,
                   oi: &mut usize,
                   si: &mut usize,
                   records: &mut Vec<NormRecord>,
                   snapshots: &mut Vec<FieldState>| {
        while *oi < outputs.len() && outputs[*oi] <= state.time + eps_t(state.time) {
            if (outputs[*oi] - state.time).abs() <= eps_t(state.time) {
                records.push(NormRecord {
                    t: state.time,
                    norms: norms_with(state, grid, &symbol, &tr),
                });
            }
            *oi += 1;
        }
        while *si < snaps.len() && snaps[*si] <= state.time + eps_t(state.time) {
            if (snaps[*si] - state.time).abs() <= eps_t(state.time) {
                snapshots.push(state.clone());
            }
            *si += 1;
        }
    };
    archive(&state, &mut oi, &mut si, &mut records, &mut snapshots);

    let mut dt = options.dt.initial();
    let mut calm = 0usize;
    let mut blowup = None;
    while state.time < t_end - eps_t(t_end) {
        if is_cancelled(&options.cancel) {
            diag.cancelled = true;
            break;
        }
        let mut target = t_end;
        if oi < outputs.len() {
            target = target.min(outputs[oi]);
        }
        if si < snaps.len() {
            target = target.min(snaps[si]);
        }
        let clipped = target - state.time < dt;
        let h = if clipped { target - state.time } else { dt };
        let mut trial = stepper.advance_from(&state, &phys, h, !clipped);
        if clipped {
            trial.time = target;
        }
        let tphys = stepper.physical(&trial);
        let finite = tphys.sup.is_finite() && trial.is_finite();
        let change = (tphys.sup - phys.sup).abs() / phys.sup.max(sup_floor);

        if let DtPolicy::Adaptive { min, tolerance, .. } = options.dt {
            if (!finite || change > tolerance) && h > min {
                dt = (h / 2.0).max(min);
                diag.rejected_steps += 1;
                calm = 0;
                continue;
            }
        }

        if !finite || tphys.sup > options.threshold {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                let s = stepper.advance_from(&state, &phys, mid * h, false);
                let sp = stepper.physical(&s);
                if !(sp.sup <= options.threshold) || !s.is_finite() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            blowup = Some(BlowUp {
                time: state.time + 0.5 * (lo + hi) * h,
                uncertainty: 0.5 * (hi - lo) * h,
                sup: tphys.sup,
                last_regular_time: state.time,
            });
            break;
        }

        diag.steps += 1;
        diag.smallest_dt = diag.smallest_dt.min(h);
        diag.max_imag_ratio = diag.max_imag_ratio.max(tphys.imag_ratio);
        state = trial;
        phys = tphys;

        if let DtPolicy::Adaptive {
            max,
            tolerance,
            calm_steps,
            ..
        } = options.dt
        {
            if change < 0.25 * tolerance && !clipped {
                calm += 1;
                if calm >= calm_steps && dt < max {
                    dt = (2.0 * dt).min(max);
                    calm = 0;
                }
            } else if !clipped {
                calm = 0;
            }
        }
        archive(&state, &mut oi, &mut si, &mut records, &mut snapshots);
    }
    diag.t_reached = state.time;
    if diag.smallest_dt == f64::INFINITY {
        diag.smallest_dt = 0.0;
    }
    Ok(RunResult {
        records,
        blowup,
        snapshots,
        final_state: state,
        data: None,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = log_schedule(0.1, 1000.0, 10);
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.1).abs() < 1e-15);
        assert!((s.last().unwrap() - 1000.0).abs() < 1e-9);
        assert_eq!(s.len(), 42);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn records_land_on_schedule() {
        let p = SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap();
        let g = GridSpec::new(1, 128, 20.0).unwrap();
        let mut opts = RunOptions::new(5.0, DtPolicy::Fixed { dt: 0.07 });
        opts.snapshot_times = vec![1.0, 2.5];
        let r = run(&p, &g, &InitialData::uniform(0.01, 2, 1.0), &opts).unwrap();
        assert!(r.blowup.is_none());
        assert_eq!(r.records.len(), opts.output_times.len());
        for (rec, t) in r.records.iter().zip(&opts.output_times) {
            assert!((rec.t - t).abs() < 1e-12);
        }
        assert_eq!(r.snapshots.len(), 2);
        assert!((r.snapshots[1].time - 2.5).abs() < 1e-12);
        assert!((r.final_state.time - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cancellation_stops_the_run() {
        let p = SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap();
        let g = GridSpec::new(1, 64, 20.0).unwrap();
        let mut opts = RunOptions::new(100.0, DtPolicy::Fixed { dt: 0.1 });
        let flag = Arc::new(AtomicBool::new(true));
        opts.cancel = Some(flag);
        let r = run(&p, &g, &InitialData::uniform(0.01, 2, 1.0), &opts).unwrap();
        assert!(r.diagnostics.cancelled);
        assert_eq!(r.final_state.time, 0.0);
    }

    #[test]
    fn adaptive_run_detects_blow_up() {
        let p = SystemParams::new(1, 1.0, vec![2.0, 2.0]).unwrap();
        let g = GridSpec::new(1, 256, 40.0).unwrap();
        let opts = RunOptions::new(200.0, DtPolicy::adaptive(0.05));
        let r = run(&p, &g, &InitialData::uniform(2.0, 2, 2.0), &opts).unwrap();
        let b = r.blowup.expect("large data must blow up");
        assert!(b.time < 50.0 && b.uncertainty > 0.0 && b.time >= b.last_regular_time);
        assert!(r.diagnostics.rejected_steps > 0);
    }
}
