//! C ABI over the simulator: parse scenarios, run them, and drive a live
//! cluster with the same JSON requests the TCP front end accepts.
//!
//! Every fallible call returns an [`LbStatus`]. On failure a message is kept
//! per thread and can be read with [`lb_last_error`]. Strings handed out by
//! the library must be released with [`lb_string_free`]; handles with their
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ledgerbench::cluster::Cluster;
use ledgerbench::node::rpc::Server;
use ledgerbench::scenario::{self, RunOptions, Scenario, ScenarioError, SummaryFile};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Run = 4,
    NotFound = 5,
    Io = 6,
    Panic = 7,
}

/// Parsed scenario.
pub struct LbScenario {
    inner: Scenario,
    seed: Option<u64>,
}

/// Outcome of a finished run.
pub struct LbResult {
    summary: SummaryFile,
}

/// Live cluster answering JSON requests.
pub struct LbCluster {
    server: Server,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn scenario_status(e: &ScenarioError) -> LbStatus {
    match e {
        ScenarioError::Io { .. } => LbStatus::Io,
        ScenarioError::Run(_) => LbStatus::Run,
        ScenarioError::Parse(_) | ScenarioError::Invalid(_) => LbStatus::Config,
    }
}

/// Run `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (LbStatus, String)>) -> LbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (LbStatus, String)> {
    if p.is_null() {
        return Err((LbStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_arg<T>(out: *mut *mut T) -> Result<(), (LbStatus, String)> {
    if out.is_null() {
        Err((LbStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn from_scenario_err(e: ScenarioError) -> (LbStatus, String) {
    (scenario_status(&e), e.to_string())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lb_status_str(status: LbStatus) -> *const c_char {
    let s: &'static CStr = match status {
        LbStatus::Ok => c"ok",
        LbStatus::NullArgument => c"null argument",
        LbStatus::InvalidUtf8 => c"invalid UTF-8",
        LbStatus::Config => c"configuration error",
        LbStatus::Run => c"run failed",
        LbStatus::NotFound => c"not found",
        LbStatus::Io => c"I/O error",
        LbStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn lb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lb_version() -> *const c_char {
    static V: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => c"unknown",
        };
    V.as_ptr()
}

/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lb_scenario_from_json(
    json: *const c_char,
    out: *mut *mut LbScenario,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let text = str_arg(json, "json")?;
        let inner = Scenario::from_json(text).map_err(from_scenario_err)?;
        *out = Box::into_raw(Box::new(LbScenario { inner, seed: None }));
        Ok(())
    })
}

/// Load a scenario shipped with the library by name.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lb_scenario_bundled(
    name: *const c_char,
    out: *mut *mut LbScenario,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let name = str_arg(name, "name")?;
        let inner = scenario::bundled(name)
            .ok_or_else(|| (LbStatus::NotFound, format!("no bundled scenario {name:?}")))?
            .map_err(from_scenario_err)?;
        *out = Box::into_raw(Box::new(LbScenario { inner, seed: None }));
        Ok(())
    })
}

/// Override the scenario's run seed for subsequent runs.
///
/// # Safety
/// `scenario` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn lb_scenario_set_seed(scenario: *mut LbScenario, seed: u64) -> LbStatus {
    guard(|| {
        let s = scenario
            .as_mut()
            .ok_or((LbStatus::NullArgument, "scenario is null".to_string()))?;
        s.seed = Some(seed);
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a handle from this library or null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lb_scenario_free(scenario: *mut LbScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run a scenario to completion in virtual time. `out_dir` may be null to
/// skip writing result files.
///
/// # Safety
/// `scenario` must be a live handle, `out_dir` null or a valid string, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lb_run(
    scenario: *const LbScenario,
    out_dir: *const c_char,
    out: *mut *mut LbResult,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let s = scenario
            .as_ref()
            .ok_or((LbStatus::NullArgument, "scenario is null".to_string()))?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(str_arg(out_dir, "out_dir")?))
        };
        let opts = RunOptions {
            out: dir,
            wall_clock: false,
            seed: s.seed,
        };
        let outcome = scenario::run(&s.inner, &opts).map_err(from_scenario_err)?;
        *out = Box::into_raw(Box::new(LbResult {
            summary: outcome.summary,
        }));
        Ok(())
    })
}

/// Successful transactions per second; NaN on a null handle.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lb_result_throughput(result: *const LbResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.summary.summary.throughput)
}

/// Main-branch blocks over all blocks; NaN on a null handle.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lb_result_fork_ratio(result: *const LbResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.summary.summary.fork_ratio)
}

/// Median latency in seconds; NaN on a null handle.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lb_result_latency_p50(result: *const LbResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.summary.summary.latency_p50)
}

/// The run summary as JSON, in the same shape as `summary.json`. Free the
/// string with [`lb_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lb_result_summary_json(
    result: *const LbResult,
    out: *mut *mut c_char,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let r = result
            .as_ref()
            .ok_or((LbStatus::NullArgument, "result is null".to_string()))?;
        let text = serde_json::to_string(&r.summary).map_err(|e| (LbStatus::Run, e.to_string()))?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `result` must be a handle from this library or null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lb_result_free(result: *mut LbResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Start the scenario's cluster at tick 0 without running a workload.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lb_cluster_new(
    scenario: *const LbScenario,
    out: *mut *mut LbCluster,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let s = scenario
            .as_ref()
            .ok_or((LbStatus::NullArgument, "scenario is null".to_string()))?;
        let cfg = s.inner.cluster_config(s.seed.unwrap_or(s.inner.run.seed));
        let cluster = Cluster::new(cfg).map_err(|e| (LbStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(LbCluster {
            server: Server::new(cluster, false),
        }));
        Ok(())
    })
}

/// Handle one JSON request (`{"method": ...}`) and return the JSON response.
/// Request-level failures come back as `{"error": ...}` with status Ok.
///
/// # Safety
/// `cluster` must be a live handle, `request` a valid string, `response` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lb_cluster_request(
    cluster: *mut LbCluster,
    request: *const c_char,
    response: *mut *mut c_char,
) -> LbStatus {
    guard(|| {
        out_arg(response)?;
        let c = cluster
            .as_mut()
            .ok_or((LbStatus::NullArgument, "cluster is null".to_string()))?;
        let req = str_arg(request, "request")?;
        let text = c.server.handle_line(req);
        *response = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `cluster` must be a handle from this library or null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lb_cluster_free(cluster: *mut LbCluster) {
    if !cluster.is_null() {
        drop(Box::from_raw(cluster));
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn lb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
