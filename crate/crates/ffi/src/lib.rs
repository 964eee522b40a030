//! C ABI for the exponent calculus, the modal propagator and the solver.
//!
//! Every fallible call returns a [`DdStatus`]; on failure the message is
//! available from [`dd_last_error_message`] on the same thread. Handles are
//! opaque and released with their `_free` function. Strings returned through
//! out-parameters are released with [`dd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use doubledamp::exponents::{
    classify, compute_gamma, lifespan_exponent, Classification, ExponentOptions, ExponentReport,
    SystemParams,
};
use doubledamp::kernels::propagator;
use doubledamp::solver::{
    log_schedule, run, DtPolicy, GridSpec, InitialData, RunOptions, RunResult,
};
use doubledamp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SingularSystem = 3,
    NotSubcritical = 4,
    BufferTooSmall = 5,
    NoResult = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdClassification {
    Supercritical = 0,
    Critical = 1,
    Subcritical = 2,
}

/// Which per-component norm series to read from a simulation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdNorm {
    L2 = 0,
    HSigma = 1,
    Sup = 2,
    Mean = 3,
}

/// Modal propagator values at `(t, a)`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdPropagator {
    pub t: f64,
    pub k0: f64,
    pub k1: f64,
    pub dk0: f64,
    pub dk1: f64,
    pub i1: f64,
    pub i2: f64,
}

/// System parameters `(n, sigma, p_1..p_k)`.
pub struct DdParams {
    inner: SystemParams,
}

/// A configured run and, once executed, its result.
pub struct DdSimulation {
    params: SystemParams,
    grid: GridSpec,
    data: InitialData,
    nonlinear: bool,
    result: Option<RunResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DdStatus, message: impl Into<String>) -> DdStatus {
    set_error(message.into());
    status
}

fn from_error(e: &Error) -> DdStatus {
    let status = match e {
        Error::InvalidParams(_)
        | Error::DataLeakage { .. }
        | Error::DomainError(_)
        | Error::Config(_) => DdStatus::InvalidArgument,
        Error::SingularSystem(_) => DdStatus::SingularSystem,
        Error::NotSubcritical { .. } => DdStatus::NotSubcritical,
        _ => DdStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`DdStatus::Panic`].
fn guard(f: impl FnOnce() -> DdStatus) -> DdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(DdStatus::Panic, "panic inside doubledamp"),
    }
}

macro_rules! deref {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(v) => v,
            None => return fail(DdStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

macro_rules! deref_mut {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_mut() } {
            Some(v) => v,
            None => return fail(DdStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn dd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is NULL or a string returned by this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Creates parameters from `k` exponents at `p`.
///
/// # Safety
/// `p` points to `k` readable doubles and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn dd_params_new(
    n: usize,
    sigma: f64,
    p: *const f64,
    k: usize,
    out: *mut *mut DdParams,
) -> DdStatus {
    guard(|| {
        let out = deref_mut!(out, "out");
        *out = ptr::null_mut();
        if p.is_null() {
            return fail(DdStatus::NullPointer, "p is null");
        }
        let exps = unsafe { std::slice::from_raw_parts(p, k) }.to_vec();
        match SystemParams::new(n, sigma, exps) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DdParams { inner }));
                DdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `params` is NULL or a handle from [`dd_params_new`] that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dd_params_free(params: *mut DdParams) {
    if !params.is_null() {
        drop(unsafe { Box::from_raw(params) });
    }
}

/// Number of components `k`.
///
/// # Safety
/// `params` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_params_components(
    params: *const DdParams,
    out: *mut usize,
) -> DdStatus {
    guard(|| {
        let params = deref!(params, "params");
        *deref_mut!(out, "out") = params.inner.k();
        DdStatus::Ok
    })
}

/// Writes the `k` entries of `gamma` to `out`, which holds `len` doubles.
///
/// # Safety
/// `params` is a live handle and `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dd_gamma(params: *const DdParams, out: *mut f64, len: usize) -> DdStatus {
    guard(|| {
        let params = deref!(params, "params");
        if out.is_null() {
            return fail(DdStatus::NullPointer, "out is null");
        }
        let k = params.inner.k();
        if len < k {
            return fail(
                DdStatus::BufferTooSmall,
                format!("need {k} slots, got {len}"),
            );
        }
        match compute_gamma(&params.inner) {
            Ok(g) => {
                unsafe { std::slice::from_raw_parts_mut(out, k) }.copy_from_slice(&g.gamma);
                DdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `params` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_classify(
    params: *const DdParams,
    out: *mut DdClassification,
) -> DdStatus {
    guard(|| {
        let params = deref!(params, "params");
        let out = deref_mut!(out, "out");
        match classify(&params.inner) {
            Ok(c) => {
                *out = match c {
                    Classification::Supercritical => DdClassification::Supercritical,
                    Classification::Critical => DdClassification::Critical,
                    Classification::Subcritical => DdClassification::Subcritical,
                };
                DdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Exponent `-1 / (max gamma - n/(2 sigma))` of the lifespan; subcritical systems only.
///
/// # Safety
/// `params` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_lifespan_exponent(params: *const DdParams, out: *mut f64) -> DdStatus {
    guard(|| {
        let params = deref!(params, "params");
        let out = deref_mut!(out, "out");
        match lifespan_exponent(&params.inner) {
            Ok(e) => {
                *out = e;
                DdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Full exponent report as JSON; free the string with [`dd_string_free`].
///
/// # Safety
/// `params` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_exponent_report_json(
    params: *const DdParams,
    eps: f64,
    out: *mut *mut c_char,
) -> DdStatus {
    guard(|| {
        let params = deref!(params, "params");
        let out = deref_mut!(out, "out");
        *out = ptr::null_mut();
        let options = ExponentOptions {
            eps,
            ..ExponentOptions::default()
        };
        let report = match ExponentReport::build(&params.inner, options) {
            Ok(r) => r,
            Err(e) => return from_error(&e),
        };
        match serde_json::to_string(&report).map(CString::new) {
            Ok(Ok(s)) => {
                *out = s.into_raw();
                DdStatus::Ok
            }
            _ => fail(DdStatus::Internal, "report serialization failed"),
        }
    })
}

/// Modal propagator of `u'' + (1 + a) u' + a u = f`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_propagator(t: f64, a: f64, out: *mut DdPropagator) -> DdStatus {
    guard(|| {
        let out = deref_mut!(out, "out");
        if !(t.is_finite() && a.is_finite()) {
            return fail(DdStatus::InvalidArgument, "t and a must be finite");
        }
        let s = propagator(t, a);
        *out = DdPropagator {
            t: s.t,
            k0: s.k0,
            k1: s.k1,
            dk0: s.dk0,
            dk1: s.dk1,
            i1: s.i1,
            i2: s.i2,
        };
        DdStatus::Ok
    })
}

/// Configures a run on `[-half_length, half_length]^n` with `points` per
/// dimension and the Gaussian data `eps exp(-|x|^2 / width^2)` for every
/// `u_0` and `u_1`. The parameters are copied.
///
/// # Safety
/// `params` is a live handle and `out` is a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_new(
    params: *const DdParams,
    points: usize,
    half_length: f64,
    eps: f64,
    width: f64,
    nonlinear: bool,
    out: *mut *mut DdSimulation,
) -> DdStatus {
    guard(|| {
        let params = deref!(params, "params");
        let out = deref_mut!(out, "out");
        *out = ptr::null_mut();
        let grid = match GridSpec::new(params.inner.n, points, half_length) {
            Ok(g) => g,
            Err(e) => return from_error(&e),
        };
        if !(width > 0.0 && width.is_finite() && eps.is_finite()) {
            return fail(
                DdStatus::InvalidArgument,
                "width must be positive and eps finite",
            );
        }
        let sim = DdSimulation {
            params: params.inner.clone(),
            grid,
            data: InitialData::uniform(eps, params.inner.k(), width),
            nonlinear,
            result: None,
        };
        *out = Box::into_raw(Box::new(sim));
        DdStatus::Ok
    })
}

/// # Safety
/// `sim` is NULL or a handle from [`dd_simulation_new`] that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_free(sim: *mut DdSimulation) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Integrates to `t_end` with an adaptive step starting at `dt`, recording
/// norms 40 times per decade. `blew_up` may be NULL.
///
/// # Safety
/// `sim` is a live handle; `blew_up` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_run(
    sim: *mut DdSimulation,
    t_end: f64,
    dt: f64,
    blew_up: *mut bool,
) -> DdStatus {
    guard(|| {
        let sim = deref_mut!(sim, "sim");
        if !(t_end > 0.0 && t_end.is_finite() && dt > 0.0 && dt.is_finite()) {
            return fail(DdStatus::InvalidArgument, "t_end and dt must be positive");
        }
        let mut options = RunOptions::new(t_end, DtPolicy::adaptive(dt));
        options.output_times = log_schedule(0.1, t_end, 40);
        options.nonlinear = sim.nonlinear;
        match run(&sim.params, &sim.grid, &sim.data, &options) {
            Ok(r) => {
                if let Some(flag) = unsafe { blew_up.as_mut() } {
                    *flag = r.blowup.is_some();
                }
                sim.result = Some(r);
                DdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

fn result_of(sim: &DdSimulation) -> Result<&RunResult, DdStatus> {
    sim.result
        .as_ref()
        .ok_or_else(|| fail(DdStatus::NoResult, "simulation has not been run"))
}

/// Number of recorded instants.
///
/// # Safety
/// `sim` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_record_count(
    sim: *const DdSimulation,
    out: *mut usize,
) -> DdStatus {
    guard(|| {
        let sim = deref!(sim, "sim");
        let out = deref_mut!(out, "out");
        match result_of(sim) {
            Ok(r) => {
                *out = r.records.len();
                DdStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Blow-up time; [`DdStatus::NoResult`] when the run reached `t_end`.
///
/// # Safety
/// `sim` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_blowup_time(
    sim: *const DdSimulation,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        let sim = deref!(sim, "sim");
        let out = deref_mut!(out, "out");
        match result_of(sim) {
            Ok(r) => match r.blowup {
                Some(b) => {
                    *out = b.time;
                    DdStatus::Ok
                }
                None => fail(DdStatus::NoResult, "no blow-up in this run"),
            },
            Err(s) => s,
        }
    })
}

/// Copies the record times into `out`, which holds `len` doubles.
///
/// # Safety
/// `sim` is a live handle and `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_times(
    sim: *const DdSimulation,
    out: *mut f64,
    len: usize,
) -> DdStatus {
    guard(|| {
        let sim = deref!(sim, "sim");
        let r = match result_of(sim) {
            Ok(r) => r,
            Err(s) => return s,
        };
        copy_out(r.records.iter().map(|x| x.t), r.records.len(), out, len)
    })
}

/// Copies one norm series of component `component` (zero-based) into `out`.
///
/// # Safety
/// `sim` is a live handle and `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dd_simulation_norms(
    sim: *const DdSimulation,
    component: usize,
    norm: DdNorm,
    out: *mut f64,
    len: usize,
) -> DdStatus {
    guard(|| {
        let sim = deref!(sim, "sim");
        let r = match result_of(sim) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if component >= sim.params.k() {
            return fail(
                DdStatus::InvalidArgument,
                format!("component {component} out of range"),
            );
        }
        let pick = |x: &doubledamp::solver::NormRecord| {
            let n = &x.norms;
            match norm {
                DdNorm::L2 => n.l2[component],
                DdNorm::HSigma => n.hs[component],
                DdNorm::Sup => n.sup[component],
                DdNorm::Mean => n.mean[component],
            }
        };
        copy_out(r.records.iter().map(pick), r.records.len(), out, len)
    })
}

fn copy_out(
    values: impl Iterator<Item = f64>,
    count: usize,
    out: *mut f64,
    len: usize,
) -> DdStatus {
    if out.is_null() {
        return fail(DdStatus::NullPointer, "out is null");
    }
    if len < count {
        return fail(
            DdStatus::BufferTooSmall,
            format!("need {count} slots, got {len}"),
        );
    }
    let dst = unsafe { std::slice::from_raw_parts_mut(out, count) };
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    DdStatus::Ok
}

/// Reads a NUL-terminated comma-separated list such as `"2,3.5"` into `out`.
///
/// # Safety
/// `text` is a valid C string; `out` points to `len` writable doubles and
/// `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn dd_parse_exponents(
    text: *const c_char,
    out: *mut f64,
    len: usize,
    count: *mut usize,
) -> DdStatus {
    guard(|| {
        if text.is_null() {
            return fail(DdStatus::NullPointer, "text is null");
        }
        let count = deref_mut!(count, "count");
        let s = match unsafe { CStr::from_ptr(text) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(DdStatus::InvalidArgument, "text is not UTF-8"),
        };
        let values = match doubledamp::cli_io::parse_exponents(s) {
            Ok(v) => v,
            Err(e) => return from_error(&e),
        };
        *count = values.len();
        copy_out(values.into_iter(), *count, out, len)
    })
}
