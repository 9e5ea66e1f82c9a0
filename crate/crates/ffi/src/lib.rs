//! C interface to the quadsafe closed-loop simulator.
//!
//! Scenarios and finished runs are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! a [`QsStatus`]; the message of the last failure on the calling thread is
//! available from [`qs_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use quadsafe::harness::{self, RunOutput, ScenarioConfig};
use quadsafe::mpc::ControllerKind;
use quadsafe::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidScenario = 4,
    Parse = 5,
    Io = 6,
    /// The run stopped early; the handle is still produced.
    SimulationFailed = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Opaque scenario handle.
pub struct QsScenario(ScenarioConfig);

/// Opaque handle to a finished run.
pub struct QsRun(RunOutput);

/// Number of columns of one inner-loop row, see [`qs_run_inner_row`].
pub const QS_INNER_COLUMNS: usize = 18;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: QsStatus, msg: impl Into<String>) -> QsStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> QsStatus {
    let status = match e {
        Error::Config(_) => QsStatus::Config,
        Error::InvalidScenario(_) => QsStatus::InvalidScenario,
        Error::Parse { .. } => QsStatus::Parse,
        Error::Io { .. } => QsStatus::Io,
        Error::NonFinite(_) | Error::DoubleInfeasible { .. } => QsStatus::SimulationFailed,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> QsStatus) -> QsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(QsStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, QsStatus> {
    if s.is_null() {
        return Err(fail(QsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(QsStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn give_scenario(cfg: ScenarioConfig, out: *mut *mut QsScenario) -> QsStatus {
    *out = Box::into_raw(Box::new(QsScenario(cfg)));
    QsStatus::Ok
}

macro_rules! try_qs {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(QsStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads one of the scenarios shipped with the library by name.
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_bundled(name: *const c_char, out: *mut *mut QsScenario) -> QsStatus {
    guard(|| {
        non_null!(out);
        let name = try_qs!(read_str(name));
        match harness::bundled(name) {
            Ok(cfg) => give_scenario(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Parses and validates a scenario file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_load(path: *const c_char, out: *mut *mut QsScenario) -> QsStatus {
    guard(|| {
        non_null!(out);
        let path = try_qs!(read_str(path));
        match harness::load_scenario(Path::new(path)) {
            Ok(cfg) => give_scenario(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Parses and validates scenario TOML text.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_from_toml(text: *const c_char, out: *mut *mut QsScenario) -> QsStatus {
    guard(|| {
        non_null!(out);
        let text = try_qs!(read_str(text));
        let cfg = match ScenarioConfig::from_toml_str(text) {
            Ok(c) => c,
            Err(message) => return from_error(Error::Parse { path: "<string>".into(), message }),
        };
        match cfg.validate() {
            Ok(()) => give_scenario(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Selects the controller by name (`sdhocbf`, `hocbf_filter`, `mpc_dc`,
/// `dcbf`, `dhocbf`).
///
/// # Safety
/// `scenario` must come from this library; `name` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_set_controller(scenario: *mut QsScenario, name: *const c_char) -> QsStatus {
    guard(|| {
        non_null!(scenario);
        let name = try_qs!(read_str(name));
        match name.parse::<ControllerKind>() {
            Ok(k) => {
                (*scenario).0.controller.kind = k;
                QsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Sets the barrier gain and the discrete decay rate. The scenario is
/// revalidated and left unchanged on failure.
///
/// # Safety
/// `scenario` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_set_gains(scenario: *mut QsScenario, p: f64, lambda: f64) -> QsStatus {
    guard(|| {
        non_null!(scenario);
        let scenario = &mut *scenario;
        let mut cfg = scenario.0.clone();
        cfg.controller.p = p;
        cfg.controller.lambda = lambda;
        match cfg.validate() {
            Ok(()) => {
                scenario.0 = cfg;
                QsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Sets the simulated duration in seconds.
///
/// # Safety
/// `scenario` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_set_duration(scenario: *mut QsScenario, seconds: f64) -> QsStatus {
    guard(|| {
        non_null!(scenario);
        let scenario = &mut *scenario;
        let mut cfg = scenario.0.clone();
        cfg.sim.duration_s = seconds;
        match cfg.validate() {
            Ok(()) => {
                scenario.0 = cfg;
                QsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scenario` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_scenario_free(scenario: *mut QsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the closed loop. On `QS_STATUS_SIMULATION_FAILED` the partial run is
/// still returned through `out`.
///
/// # Safety
/// `scenario` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_run(scenario: *const QsScenario, out: *mut *mut QsRun) -> QsStatus {
    guard(|| {
        non_null!(scenario, out);
        let scenario = &*scenario;
        match harness::run(&scenario.0) {
            Ok(r) => {
                let failure = r.metrics.failure.clone();
                *out = Box::into_raw(Box::new(QsRun(r)));
                match failure {
                    None => QsStatus::Ok,
                    Some(f) => fail(QsStatus::SimulationFailed, f),
                }
            }
            Err(e) => from_error(e),
        }
    })
}

/// Whether the run reached the end of the scenario.
///
/// # Safety
/// `run` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_run_completed(run: *const QsRun) -> bool {
    run.as_ref().is_some_and(|r| r.0.metrics.completed)
}

/// Number of inner-loop samples.
///
/// # Safety
/// `run` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_run_inner_len(run: *const QsRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.log.inner.len())
}

/// Copies inner sample `index` into `row` in the column order of `log.csv`:
/// `t, p, v, q (w, x, y, z), omega, f_z, tau`.
///
/// # Safety
/// `run` must come from this library; `row` must hold [`QS_INNER_COLUMNS`] doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_run_inner_row(run: *const QsRun, index: usize, row: *mut f64) -> QsStatus {
    guard(|| {
        non_null!(run, row);
        let run = &*run;
        let Some(r) = run.0.log.inner.get(index) else {
            return fail(QsStatus::OutOfRange, format!("sample {index} out of range"));
        };
        let s = &r.state;
        let q = s.q.to_wxyz();
        let vals = [
            r.t, s.p.x, s.p.y, s.p.z, s.v.x, s.v.y, s.v.z, q[0], q[1], q[2], q[3], s.omega.x, s.omega.y, s.omega.z,
            r.f_z, r.tau.x, r.tau.y, r.tau.z,
        ];
        ptr::copy_nonoverlapping(vals.as_ptr(), row, QS_INNER_COLUMNS);
        QsStatus::Ok
    })
}

/// Run metrics as a JSON document; release with [`qs_string_free`].
///
/// # Safety
/// `run` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_run_metrics_json(run: *const QsRun) -> *mut c_char {
    let Some(run) = run.as_ref() else {
        set_error("`run` is null");
        return ptr::null_mut();
    };
    let json = harness::io::metrics_json(&run.0.metrics);
    CString::new(json).map_or(ptr::null_mut(), CString::into_raw)
}

/// Writes `log.csv`, `outer.csv` and `metrics.json` into `dir`.
///
/// # Safety
/// `run` must come from this library; `dir` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn qs_run_write(run: *const QsRun, dir: *const c_char) -> QsStatus {
    guard(|| {
        non_null!(run);
        let dir = try_qs!(read_str(dir));
        let run = &*run;
        match run.0.write(Path::new(dir)) {
            Ok(()) => QsStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_run_free(run: *mut QsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn qs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
