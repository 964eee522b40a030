//! Pseudo-spectral exponential integrator for the cyclic system on a periodic box.

pub mod data;
pub mod fft;
pub mod grid;
pub mod norms;
pub mod run;
pub mod stepper;

pub use data::{make_initial_data, ComponentData, DataReport, FieldState, InitialData};
pub use grid::GridSpec;
pub use norms::{norms, Norms};
pub use run::{
    log_schedule, run, run_from_state, BlowUp, DtPolicy, NormRecord, RunDiagnostics, RunOptions,
    RunResult,
};
pub use stepper::{Stepper, BLOWUP_THRESHOLD};
