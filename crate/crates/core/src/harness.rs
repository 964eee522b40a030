//! Experiment drivers: power-law fits with verdicts, decay and lifespan
//! experiments, the weighted-norm diagnostic, convergence studies and the
//! Gagliardo-Nirenberg scaling check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{
    classify, gn_theta, lifespan_exponent, loss_of_decay_sequence, predicted_decay, unrotate,
    Classification, SystemParams, DEFAULT_EPS,
};
use crate::solver::fft::Transform;
use crate::solver::{
    run, DtPolicy, GridSpec, InitialData, NormRecord, RunDiagnostics, RunOptions, RunResult,
};
use crate::stats::{loglog_fit, LogLogFit};

/// Fewest points a time-series fit accepts.
pub const MIN_FIT_POINTS: usize = 8;

/// Fewest detected lifespans a sweep fit accepts.
pub const MIN_SWEEP_POINTS: usize = 4;

/// Acceptance thresholds shared by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub min_r_squared: f64,
    pub decay_slope: f64,
    pub lifespan_slope: f64,
    pub xnorm_ratio: f64,
    pub convergence_ratio: f64,
    pub convergence_ratio_tolerance: f64,
    pub gn_scaling: f64,
    pub kernel_slope: f64,
    pub lemma_scaling: f64,
    pub lemma_stability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            min_r_squared: 0.98,
            decay_slope: 0.1,
            lifespan_slope: 0.3,
            xnorm_ratio: 10.0,
            convergence_ratio: 4.0,
            convergence_ratio_tolerance: 1.0,
            gn_scaling: 0.01,
            kernel_slope: 0.05,
            lemma_scaling: 1e-3,
            lemma_stability: 0.1,
        }
    }
}

/// Accepted slopes `[lo - tolerance, hi + tolerance]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    /// Reference slope, the `eps -> 0` value where a range applies.
    pub expected: f64,
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    pub min_r_squared: f64,
}

impl Expectation {
    pub fn point(expected: f64, tolerance: f64) -> Self {
        Expectation {
            expected,
            lo: expected,
            hi: expected,
            tolerance,
            min_r_squared: Tolerances::default().min_r_squared,
        }
    }

    pub fn range(expected: f64, a: f64, b: f64, tolerance: f64) -> Self {
        Expectation {
            expected,
            lo: a.min(b),
            hi: a.max(b),
            tolerance,
            min_r_squared: Tolerances::default().min_r_squared,
        }
    }

    pub fn with_min_r_squared(mut self, r2: f64) -> Self {
        self.min_r_squared = r2;
        self
    }

    pub fn accepts(&self, slope: f64, r_squared: f64) -> bool {
        slope >= self.lo - self.tolerance
            && slope <= self.hi + self.tolerance
            && r_squared >= self.min_r_squared
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub stderr: f64,
    pub points: usize,
    pub window: (f64, f64),
    pub expected: f64,
    pub expected_range: (f64, f64),
    pub tolerance: f64,
    pub pass: bool,
}

impl FitResult {
    pub fn from_fit(fit: &LogLogFit, window: (f64, f64), expectation: &Expectation) -> Self {
        FitResult {
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            stderr: fit.stderr,
            points: fit.points,
            window,
            expected: expectation.expected,
            expected_range: (expectation.lo, expectation.hi),
            tolerance: expectation.tolerance,
            pass: expectation.accepts(fit.slope, fit.r_squared),
        }
    }
}

/// Least squares of `ln y` on `ln t` over the points with `t` in `window`.
pub fn fit_power_law(
    ts: &[f64],
    ys: &[f64],
    window: (f64, f64),
    expectation: &Expectation,
) -> Result<FitResult> {
    if ts.len() != ys.len() {
        return Err(Error::InvalidParams("series lengths differ".into()));
    }
    let (wt, wy): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, y)| (*t, *y))
        .unzip();
    if wt.len() < MIN_FIT_POINTS {
        return Err(Error::EmptyWindow {
            t_min: window.0,
            t_max: window.1,
            found: wt.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let fit = loglog_fit(&wt, &wy)?;
    Ok(FitResult::from_fit(&fit, window, expectation))
}

/// Fit window `[t_min, t2]`, `t2` the first time with
/// `|mean(u)| sqrt(|box|) >= mean_fraction ||u||_{L^2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowRule {
    pub t_min: f64,
    pub mean_fraction: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        WindowRule {
            t_min: 20.0,
            mean_fraction: 0.9,
        }
    }
}

/// Share of `||u_l||_{L^2}` carried by the mean mode at every record.
pub fn mean_fraction(records: &[NormRecord], component: usize, grid: &GridSpec) -> Vec<f64> {
    let root_vol = grid.volume().sqrt();
    records
        .iter()
        .map(|r| {
            let l2 = r.norms.l2[component];
            if l2 > 0.0 {
                r.norms.mean[component].abs() * root_vol / l2
            } else {
                0.0
            }
        })
        .collect()
}

pub fn decay_window(
    records: &[NormRecord],
    component: usize,
    grid: &GridSpec,
    rule: &WindowRule,
) -> (f64, f64) {
    let fractions = mean_fraction(records, component, grid);
    let t_end = records.last().map_or(rule.t_min, |r| r.t);
    let t2 = records
        .iter()
        .zip(&fractions)
        .find(|(r, f)| r.t >= rule.t_min && **f >= rule.mean_fraction)
        .map_or(t_end, |(r, _)| r.t);
    (rule.t_min, t2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub t_end: f64,
    pub dt: DtPolicy,
    /// Norm records per decade, starting at `t = 0.1`.
    pub per_decade: usize,
    pub window: WindowRule,
    pub nonlinear: bool,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            t_end: 1e4,
            dt: DtPolicy::Adaptive {
                initial: 0.1,
                min: 1e-10,
                max: 1.0,
                tolerance: 0.1,
                calm_steps: 8,
            },
            per_decade: 40,
            window: WindowRule::default(),
            nonlinear: true,
        }
    }
}

/// Loss-of-decay constants in the original labels (`0` for the component with maximal `gamma`).
pub fn loss_original(params: &SystemParams, eps: f64) -> Result<Vec<f64>> {
    let (canon, shift) = params.canonical()?;
    Ok(unrotate(
        &loss_of_decay_sequence(&canon, eps)?.recursive,
        shift,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XNormDiagnostic {
    pub times: Vec<f64>,
    /// `values[l][i]` for component `l` at `times[i]`.
    pub values: Vec<Vec<f64>>,
    pub eps_seq: Vec<f64>,
}

impl XNormDiagnostic {
    /// `max / min` of component `l` over `window`; infinite if the minimum is zero.
    pub fn ratio(&self, l: usize, window: (f64, f64)) -> f64 {
        let (lo, hi) = self
            .times
            .iter()
            .zip(&self.values[l])
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), (_, v)| {
                (lo.min(*v), hi.max(*v))
            });
        if lo > 0.0 && lo.is_finite() {
            hi / lo
        } else if hi == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }
}

/// `(1+t)^{n/4s - eps_l} ||u_l|| + (1+t)^{n/4s + 1/2 - eps_l} || |D|^s u_l ||` at every record.
pub fn xnorm_diagnostic(
    records: &[NormRecord],
    params: &SystemParams,
    eps_seq: &[f64],
) -> XNormDiagnostic {
    let base = params.threshold() / 2.0;
    let k = params.k();
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let values = (0..k)
        .map(|l| {
            let e = eps_seq.get(l).copied().unwrap_or(0.0);
            records
                .iter()
                .map(|r| {
                    let w = 1.0 + r.t;
                    w.powf(base - e) * r.norms.l2[l] + w.powf(base + 0.5 - e) * r.norms.hs[l]
                })
                .collect()
        })
        .collect();
    XNormDiagnostic {
        times,
        values,
        eps_seq: eps_seq.to_vec(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayExperiment {
    pub windows: Vec<(f64, f64)>,
    pub l2: Vec<FitResult>,
    pub hs: Vec<FitResult>,
    pub xnorm: XNormDiagnostic,
    /// `max / min` of the weighted norm of each component over its window.
    pub xnorm_ratio: Vec<f64>,
    pub records: Vec<NormRecord>,
    pub diagnostics: RunDiagnostics,
    pub pass: bool,
}

/// Runs the system and fits the `L^2` and `H^sigma` decay of every component.
///
/// Nonlinear runs need the global-existence conditions; the accepted slope of
/// component `l` is `[-n/4s, -n/4s + eps_l]` widened by the tolerance. Linear
/// runs compare with the linear rates.
pub fn decay_experiment(
    params: &SystemParams,
    grid: &GridSpec,
    data: &InitialData,
    config: &DecayConfig,
    tol: &Tolerances,
) -> Result<DecayExperiment> {
    let base = -params.threshold() / 2.0;
    let k = params.k();
    let (l2_rates, hs_rates, eps_seq) = if config.nonlinear {
        let pred = predicted_decay(params, DEFAULT_EPS)?;
        (pred.l2, pred.hsigma, loss_original(params, DEFAULT_EPS)?)
    } else {
        (vec![base; k], vec![base - 0.5; k], vec![0.0; k])
    };

    let mut options = RunOptions::new(config.t_end, config.dt);
    options.output_times = crate::solver::log_schedule(0.1, config.t_end, config.per_decade);
    options.nonlinear = config.nonlinear;
    let result = run(params, grid, data, &options)?;
    if let Some(b) = result.blowup {
        return Err(Error::BlowUpDuringDecayExperiment(b.time));
    }

    let times = result.times();
    let xnorm = xnorm_diagnostic(&result.records, params, &eps_seq);
    let mut windows = Vec::with_capacity(k);
    let mut l2 = Vec::with_capacity(k);
    let mut hs = Vec::with_capacity(k);
    let mut xnorm_ratio = Vec::with_capacity(k);
    for l in 0..k {
        let window = decay_window(&result.records, l, grid, &config.window);
        let e_l2 = Expectation::range(base, base, l2_rates[l], tol.decay_slope)
            .with_min_r_squared(tol.min_r_squared);
        let e_hs = Expectation::range(base - 0.5, base - 0.5, hs_rates[l], tol.decay_slope)
            .with_min_r_squared(tol.min_r_squared);
        l2.push(fit_power_law(
            &times,
            &result.series(l, |n| &n.l2),
            window,
            &e_l2,
        )?);
        hs.push(fit_power_law(
            &times,
            &result.series(l, |n| &n.hs),
            window,
            &e_hs,
        )?);
        xnorm_ratio.push(xnorm.ratio(l, window));
        windows.push(window);
    }
    let pass =
        l2.iter().chain(&hs).all(|f| f.pass) && xnorm_ratio.iter().all(|r| *r < tol.xnorm_ratio);
    Ok(DecayExperiment {
        windows,
        l2,
        hs,
        xnorm,
        xnorm_ratio,
        records: result.records,
        diagnostics: result.diagnostics,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlowupConfig {
    pub cap: f64,
    pub dt: DtPolicy,
    pub per_decade: usize,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig {
            cap: 1e4,
            dt: DtPolicy::Adaptive {
                initial: 0.2,
                min: 2e-10,
                max: 0.2,
                tolerance: 0.1,
                calm_steps: 8,
            },
            per_decade: 40,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupOutcome {
    pub epsilon: f64,
    pub time: Option<f64>,
    pub uncertainty: f64,
    pub sup: f64,
    pub cap: f64,
    pub records: Vec<NormRecord>,
    pub diagnostics: RunDiagnostics,
}

impl BlowupOutcome {
    pub fn blew_up(&self) -> bool {
        self.time.is_some_and(|t| t < self.cap)
    }
}

fn blowup_guard(params: &SystemParams, data: &InitialData, strict: bool) -> Result<()> {
    let class = classify(params)?;
    let ok = match class {
        Classification::Subcritical => true,
        Classification::Critical => !strict,
        Classification::Supercritical => false,
    };
    if !ok {
        let g = crate::exponents::compute_gamma(params)?;
        return Err(Error::NotSubcritical {
            gamma_max: g.max(),
            threshold: params.threshold(),
        });
    }
    data.check_positive_means()
}

fn blowup_run(
    params: &SystemParams,
    grid: &GridSpec,
    data: &InitialData,
    cap: f64,
    dt: DtPolicy,
    per_decade: usize,
) -> Result<BlowupOutcome> {
    let mut options = RunOptions::new(cap, dt);
    options.output_times = if per_decade == 0 {
        vec![0.0]
    } else {
        crate::solver::log_schedule(0.1, cap, per_decade)
    };
    let r: RunResult = run(params, grid, data, &options)?;
    let (time, uncertainty, sup) = match r.blowup {
        Some(b) => (Some(b.time), b.uncertainty, b.sup),
        None => (
            None,
            0.0,
            r.records
                .last()
                .map_or(0.0, |x| x.norms.sup.iter().fold(0.0, |m: f64, v| m.max(*v))),
        ),
    };
    Ok(BlowupOutcome {
        epsilon: data.eps,
        time,
        uncertainty,
        sup,
        cap,
        records: r.records,
        diagnostics: r.diagnostics,
    })
}

/// Single run to blow-up for a system with `max gamma >= n / (2 sigma)` and positive-mean data.
pub fn blowup_experiment(
    params: &SystemParams,
    grid: &GridSpec,
    data: &InitialData,
    config: &BlowupConfig,
) -> Result<BlowupOutcome> {
    blowup_guard(params, data, false)?;
    blowup_run(params, grid, data, config.cap, config.dt, config.per_decade)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifespanConfig {
    pub epsilons: Vec<f64>,
    /// Cap for the largest `epsilon`.
    pub base_cap: f64,
    /// Later caps are `cap_factor * T(eps_max) * (eps / eps_max)^exponent`.
    pub cap_factor: f64,
    pub dt: DtPolicy,
}

impl Default for LifespanConfig {
    fn default() -> Self {
        LifespanConfig {
            epsilons: vec![0.05, 0.1, 0.2, 0.4],
            base_cap: 1e4,
            cap_factor: 100.0,
            dt: BlowupConfig::default().dt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifespanPoint {
    pub epsilon: f64,
    pub lifespan: Option<f64>,
    pub uncertainty: f64,
    pub cap: f64,
    pub exceeded_cap: bool,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifespanSweep {
    /// Points in increasing `epsilon`.
    pub points: Vec<LifespanPoint>,
    pub expected_exponent: f64,
    pub fit: Option<FitResult>,
    pub monotone: bool,
    /// Pairs `(eps_a, eps_b)` with `eps_a < eps_b` but `T(eps_a) < T(eps_b)`.
    pub monotonicity_violations: Vec<(f64, f64)>,
    pub pass: bool,
}

impl LifespanSweep {
    pub fn epsilons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.epsilon).collect()
    }

    pub fn lifespans(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.lifespan).collect()
    }
}

/// Fits `log T` on `log eps` over detected lifespans and checks monotonicity.
pub fn lifespan_fit(
    points: Vec<LifespanPoint>,
    expected_exponent: f64,
    tol: &Tolerances,
) -> Result<LifespanSweep> {
    let mut points = points;
    points.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let detected: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.lifespan.map(|t| (p.epsilon, t)))
        .collect();
    let mut violations = Vec::new();
    for (i, a) in detected.iter().enumerate() {
        for b in &detected[i + 1..] {
            if a.1 < b.1 {
                violations.push((a.0, b.0));
            }
        }
    }
    let fit = if detected.len() >= MIN_SWEEP_POINTS {
        let (es, ts): (Vec<f64>, Vec<f64>) = detected.iter().copied().unzip();
        let f = loglog_fit(&es, &ts)?;
        let expectation = Expectation::point(expected_exponent, tol.lifespan_slope)
            .with_min_r_squared(tol.min_r_squared);
        Some(FitResult::from_fit(
            &f,
            (es[0], es[es.len() - 1]),
            &expectation,
        ))
    } else {
        None
    };
    let monotone = violations.is_empty();
    let pass = monotone && fit.as_ref().is_some_and(|f| f.pass);
    Ok(LifespanSweep {
        points,
        expected_exponent,
        fit,
        monotone,
        monotonicity_violations: violations,
        pass,
    })
}

/// Blow-up times for every `epsilon`, fitted against the lifespan exponent.
///
/// The largest `epsilon` runs first under `base_cap`; its lifespan scales the
/// caps of the others, which then run in parallel.
pub fn lifespan_sweep(
    params: &SystemParams,
    grid: &GridSpec,
    shape: &InitialData,
    config: &LifespanConfig,
    tol: &Tolerances,
) -> Result<LifespanSweep> {
    blowup_guard(params, shape, true)?;
    let exponent = lifespan_exponent(params)?;
    if config.epsilons.is_empty() || config.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParams(
            "lifespan sweep needs positive epsilons".into(),
        ));
    }
    let mut eps = config.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let eps_max = eps[0];

    let point = |e: f64, cap: f64| -> Result<LifespanPoint> {
        let o = blowup_run(params, grid, &shape.with_eps(e), cap, config.dt, 0)?;
        Ok(LifespanPoint {
            epsilon: e,
            lifespan: o.time.filter(|t| *t < cap),
            uncertainty: o.uncertainty,
            cap,
            exceeded_cap: !o.blew_up(),
            steps: o.diagnostics.steps,
        })
    };
    let first = point(eps_max, config.base_cap)?;
    let reference = first
        .lifespan
        .map_or(config.base_cap / config.cap_factor, |t| t);
    let rest: Vec<LifespanPoint> = eps[1..]
        .par_iter()
        .map(|&e| {
            point(
                e,
                config.cap_factor * reference * (e / eps_max).powf(exponent),
            )
        })
        .collect::<Result<_>>()?;
    let mut points = vec![first];
    points.extend(rest);
    lifespan_fit(points, exponent, tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub t_end: f64,
    pub dts: Vec<f64>,
    pub dt_reference: f64,
    pub points: Vec<usize>,
    pub nonlinear: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            t_end: 1.0,
            dts: vec![1e-2, 5e-3, 2.5e-3],
            dt_reference: 3.125e-4,
            points: vec![128, 256, 512],
            nonlinear: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialRow {
    pub points: usize,
    /// `max |u_hat|` over modes beyond `N/3`, relative to `max |u_hat|`.
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub dts: Vec<f64>,
    /// Relative `L^2` distance of `u` from the reference run.
    pub errors: Vec<f64>,
    /// `errors[i] / errors[i + 1]`.
    pub ratios: Vec<f64>,
    pub orders: Vec<f64>,
    pub spatial: Vec<SpatialRow>,
}

impl ConvergenceTable {
    pub fn second_order(&self, tol: &Tolerances) -> bool {
        !self.ratios.is_empty()
            && self
                .ratios
                .iter()
                .all(|r| (r - tol.convergence_ratio).abs() <= tol.convergence_ratio_tolerance)
    }
}

/// Relative `L^2` distance between the `u` fields of two states.
pub fn relative_l2(a: &crate::solver::FieldState, b: &crate::solver::FieldState) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.u_hat.iter().zip(&b.u_hat) {
        for (p, q) in x.iter().zip(y) {
            num += (p - q).norm_sqr();
            den += q.norm_sqr();
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn final_state(
    params: &SystemParams,
    grid: &GridSpec,
    data: &InitialData,
    t_end: f64,
    dt: f64,
    nonlinear: bool,
) -> Result<crate::solver::FieldState> {
    let mut o = RunOptions::new(t_end, DtPolicy::Fixed { dt });
    o.output_times = vec![t_end];
    o.nonlinear = nonlinear;
    let r = run(params, grid, data, &o)?;
    if let Some(b) = r.blowup {
        return Err(Error::InvalidParams(format!(
            "convergence run blew up at t = {}; shorten the horizon",
            b.time
        )));
    }
    Ok(r.final_state)
}

/// Temporal self-convergence on `grid` plus the spectral tail over the `points` ladder.
pub fn convergence_study(
    params: &SystemParams,
    grid: &GridSpec,
    data: &InitialData,
    config: &ConvergenceConfig,
) -> Result<ConvergenceTable> {
    if config.dts.len() + config.points.len() < 3 || config.dts.len() < 2 {
        return Err(Error::InvalidParams(
            "convergence study needs at least 3 resolutions".into(),
        ));
    }
    let mut jobs: Vec<f64> = config.dts.clone();
    jobs.push(config.dt_reference);
    let states = jobs
        .par_iter()
        .map(|&dt| final_state(params, grid, data, config.t_end, dt, config.nonlinear))
        .collect::<Result<Vec<_>>>()?;
    let reference = states.last().expect("reference run");
    let errors: Vec<f64> = states[..config.dts.len()]
        .iter()
        .map(|s| relative_l2(s, reference))
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let orders: Vec<f64> = errors
        .windows(2)
        .zip(config.dts.windows(2))
        .map(|(e, d)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
        .collect();
    let dt_fine = config.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let spatial = config
        .points
        .par_iter()
        .map(|&np| {
            let g = GridSpec::new(grid.n, np, grid.half_length)?;
            let s = final_state(params, &g, data, config.t_end, dt_fine, config.nonlinear)?;
            let cut = (np / 3) as i64;
            let (mut peak, mut tail) = (0.0_f64, 0.0_f64);
            for u in &s.u_hat {
                for (idx, z) in u.iter().enumerate() {
                    let [i, j] = g.unflatten(idx);
                    let beyond = g.signed_index(i).abs() > cut
                        || (g.n == 2 && g.signed_index(j).abs() > cut);
                    let m = z.norm();
                    peak = peak.max(m);
                    if beyond {
                        tail = tail.max(m);
                    }
                }
            }
            Ok(SpatialRow {
                points: np,
                tail: if peak > 0.0 { tail / peak } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable {
        dts: config.dts.clone(),
        errors,
        ratios,
        orders,
        spatial,
    })
}

/// `||u||_{H^a_q} <= C ||u||_{L^q1}^(1-theta) ||u||_{H^s_q2}^theta` with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnParams {
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
    pub a: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnScaling {
    pub theta: f64,
    pub dilations: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lhs_slope: f64,
    pub rhs_slope: f64,
    /// `a - n/q`, the dilation exponent of the left side.
    pub predicted_slope: f64,
    /// `max(lhs/rhs) / min(lhs/rhs) - 1`.
    pub ratio_spread: f64,
}

/// `|| |D|^a f ||_{L^q}` on the grid.
pub fn lq_norm_of_derivative(
    field: &[f64],
    grid: &GridSpec,
    a: f64,
    q: f64,
    tr: &Transform,
) -> f64 {
    let values = if a == 0.0 {
        field.to_vec()
    } else {
        let mut c = tr.forward_real(field);
        for (z, m) in c.iter_mut().zip(grid.multiplier(a / 2.0)) {
            *z *= m;
        }
        tr.inverse_real(&c).0
    };
    let cell = grid.dx().powi(grid.n as i32);
    (values.iter().map(|v| v.abs().powf(q)).sum::<f64>() * cell).powf(1.0 / q)
}

/// Both sides of the inequality on `exp(-lambda^2 |x|^2)` for every dilation `lambda`.
pub fn gn_scaling_check(grid: &GridSpec, gn: &GnParams, dilations: &[f64]) -> Result<GnScaling> {
    let theta = gn_theta(gn.q, gn.q1, gn.q2, gn.a, gn.s, grid.n)?.theta;
    let tr = Transform::new(grid);
    let x2 = grid.x_squared();
    let (lhs, rhs): (Vec<f64>, Vec<f64>) = dilations
        .iter()
        .map(|&lam| {
            let f: Vec<f64> = x2.iter().map(|r| (-lam * lam * r).exp()).collect();
            let left = lq_norm_of_derivative(&f, grid, gn.a, gn.q, &tr);
            let low = lq_norm_of_derivative(&f, grid, 0.0, gn.q1, &tr);
            let high = lq_norm_of_derivative(&f, grid, gn.s, gn.q2, &tr);
            (left, low.powf(1.0 - theta) * high.powf(theta))
        })
        .unzip();
    let lf = loglog_fit(dilations, &lhs)?;
    let rf = loglog_fit(dilations, &rhs)?;
    let ratios: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| l / r).collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GnScaling {
        theta,
        dilations: dilations.to_vec(),
        lhs,
        rhs,
        lhs_slope: lf.slope,
        rhs_slope: rf.slope,
        predicted_slope: gn.a - grid.n as f64 / gn.q,
        ratio_spread: hi / lo - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Norms;
    use crate::stats::log_grid;

    fn records(ts: &[f64], l2: impl Fn(f64) -> f64, mean: impl Fn(f64) -> f64) -> Vec<NormRecord> {
        ts.iter()
            .map(|&t| NormRecord {
                t,
                norms: Norms {
                    l2: vec![l2(t); 2],
                    hs: vec![l2(t) / (1.0 + t).sqrt(); 2],
                    sup: vec![0.0; 2],
                    mean: vec![mean(t); 2],
                },
            })
            .collect()
    }

    #[test]
    fn planted_slopes_recovered() {
        let ts = log_grid(10.0, 1000.0, 40);
        let ys: Vec<f64> = ts.iter().map(|t| (1.0 + t).powf(-0.5)).collect();
        let f = fit_power_law(&ts, &ys, (10.0, 1000.0), &Expectation::point(-0.5, 0.01)).unwrap();
        assert!(f.pass, "{f:?}");
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powi(-2)).collect();
        let f = fit_power_law(&ts, &ys, (10.0, 1000.0), &Expectation::point(-2.0, 1e-9)).unwrap();
        assert!((f.intercept - 3.0_f64.ln()).abs() < 1e-10 && f.pass);
    }

    #[test]
    fn fit_errors() {
        let ts = log_grid(1.0, 10.0, 5);
        let ys = vec![1.0; 5];
        assert!(matches!(
            fit_power_law(&ts, &ys, (0.5, 20.0), &Expectation::point(0.0, 0.1)),
            Err(Error::EmptyWindow { found: 5, .. })
        ));
        let ts = log_grid(1.0, 10.0, 10);
        let mut ys = vec![1.0; 10];
        ys[3] = -1.0;
        assert!(matches!(
            fit_power_law(&ts, &ys, (1.0, 10.0), &Expectation::point(0.0, 0.1)),
            Err(Error::NonPositiveValues { .. })
        ));
    }

    #[test]
    fn range_expectation() {
        let e = Expectation::range(-0.25, -0.25, -0.1, 0.05);
        assert!(e.accepts(-0.3, 0.99) && e.accepts(-0.05, 0.99));
        assert!(!e.accepts(-0.31, 0.99) && !e.accepts(-0.2, 0.9));
    }

    #[test]
    fn window_stops_at_mean_dominance() {
        let g = GridSpec::new(1, 64, 8.0).unwrap();
        let root = g.volume().sqrt();
        let ts = log_grid(1.0, 1000.0, 61);
        // Mean share grows like t / 100 of the L^2 norm.
        let recs = records(&ts, |_| 1.0, |t| (t / 100.0).min(1.0) / root);
        let (lo, hi) = decay_window(&recs, 0, &g, &WindowRule::default());
        assert_eq!(lo, 20.0);
        let expect = ts.iter().copied().find(|t| *t / 100.0 >= 0.9).unwrap();
        assert_eq!(hi, expect);
        let never = records(&ts, |_| 1.0, |_| 0.0);
        assert_eq!(
            decay_window(&never, 0, &g, &WindowRule::default()).1,
            *ts.last().unwrap()
        );
    }

    #[test]
    fn xnorm_of_zero_and_of_exact_rates() {
        let p = SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap();
        let ts = log_grid(1.0, 100.0, 30);
        let zero = records(&ts, |_| 0.0, |_| 0.0);
        let x = xnorm_diagnostic(&zero, &p, &[0.0, 0.0]);
        assert!(x.values[0].iter().all(|v| *v == 0.0));
        assert_eq!(x.ratio(0, (1.0, 100.0)), 1.0);
        let exact = records(&ts, |t| (1.0 + t).powf(-0.25), |_| 0.0);
        let x = xnorm_diagnostic(&exact, &p, &[0.0, 0.0]);
        assert!((x.ratio(0, (1.0, 100.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_lifespans_give_exact_slope() {
        let pts: Vec<LifespanPoint> = [0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|&e: &f64| LifespanPoint {
                epsilon: e,
                lifespan: Some(7.0 * e.powi(-2)),
                uncertainty: 0.0,
                cap: 1e9,
                exceeded_cap: false,
                steps: 0,
            })
            .collect();
        let s = lifespan_fit(pts.clone(), -2.0, &Tolerances::default()).unwrap();
        let f = s.fit.unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && s.pass && s.monotone);
        let mut bad = pts;
        bad[0].lifespan = Some(1.0);
        let s = lifespan_fit(bad.clone(), -2.0, &Tolerances::default()).unwrap();
        assert!(!s.monotone && !s.pass);
        bad[0].lifespan = None;
        let s = lifespan_fit(bad, -2.0, &Tolerances::default()).unwrap();
        assert!(s.fit.is_none() && !s.pass);
    }

    #[test]
    fn supercritical_sweep_is_refused() {
        let p = SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap();
        let g = GridSpec::new(1, 64, 20.0).unwrap();
        let r = lifespan_sweep(
            &p,
            &g,
            &InitialData::uniform(1.0, 2, 1.0),
            &LifespanConfig::default(),
            &Tolerances::default(),
        );
        assert!(matches!(r, Err(Error::NotSubcritical { .. })));
        let sub = SystemParams::new(1, 1.0, vec![2.0, 2.0]).unwrap();
        let neg = InitialData::uniform(-1.0, 2, 1.0);
        assert!(lifespan_sweep(
            &sub,
            &g,
            &neg,
            &LifespanConfig::default(),
            &Tolerances::default()
        )
        .is_err());
    }

    #[test]
    fn linear_convergence_is_exact() {
        let p = SystemParams::new(1, 1.0, vec![3.0, 4.0]).unwrap();
        let g = GridSpec::new(1, 128, 20.0).unwrap();
        let cfg = ConvergenceConfig {
            nonlinear: false,
            points: vec![64],
            ..Default::default()
        };
        let t = convergence_study(&p, &g, &InitialData::uniform(1.0, 2, 1.0), &cfg).unwrap();
        assert!(t.errors.iter().all(|e| *e < 1e-12), "{:?}", t.errors);
    }

    #[test]
    fn gn_scaling_on_gaussians() {
        let g = GridSpec::new(1, 4096, 40.0).unwrap();
        let gn = GnParams {
            q: 4.0,
            q1: 2.0,
            q2: 2.0,
            a: 0.0,
            s: 1.0,
        };
        let r = gn_scaling_check(&g, &gn, &[0.5, 1.0, 2.0, 4.0]).unwrap();
        assert!((r.theta - 0.25).abs() < 1e-15);
        assert!(r.ratio_spread < 1e-6, "{r:?}");
        assert!((r.lhs_slope - r.predicted_slope).abs() < 1e-6);
    }
}
