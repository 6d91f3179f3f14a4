//! C ABI for the overtaking trajectory planner.
//!
//! The surface is a handle-based wrapper around the planning pipeline:
//! load a scenario, run the two-layer planner, then query skeletons,
//! candidate reports and the selected trajectory. All strings returned by
//! this library are heap-allocated and must be released with
//! [`otp_string_free`]; handles with [`otp_plan_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::path::Path;
use std::ptr;

use overtake_planner::error::Error;
use overtake_planner::pipeline::{plan, PlanOutcome};
use overtake_planner::scenario::ScenarioConfig;

/// Status codes mirroring the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtpStatus {
    Ok = 0,
    Failure = 1,
    InvalidScenario = 2,
    NoFeasibleTrajectory = 3,
    NullArgument = 5,
}

/// Vehicle state sample of the selected trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtpState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

/// Opaque planning result handle.
pub struct OtpPlan {
    config: ScenarioConfig,
    outcome: PlanOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(error: &Error) -> OtpStatus {
    match error {
        Error::Scenario(_) => OtpStatus::InvalidScenario,
        Error::NoFeasibleTrajectory { .. } => OtpStatus::NoFeasibleTrajectory,
        Error::Search(overtake_planner::error::SearchError::NoPathToGoal { .. }) => {
            OtpStatus::NoFeasibleTrajectory
        }
        _ => OtpStatus::Failure,
    }
}

fn run_plan(config: ScenarioConfig, seed: i64, out: *mut *mut OtpPlan) -> OtpStatus {
    let mut config = config;
    if seed >= 0 {
        config.seed = seed as u64;
    }
    match plan(&config, false) {
        Ok(outcome) => {
            let handle = Box::new(OtpPlan { config, outcome });
            unsafe { *out = Box::into_raw(handle) };
            OtpStatus::Ok
        }
        Err(e) => {
            set_last_error(&e.to_string());
            status_for(&e)
        }
    }
}

/// Plans a scenario loaded from a JSON file. A negative `seed` keeps the
/// scenario's own seed. On success writes a handle the caller must free.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_file(
    path: *const c_char,
    seed: i64,
    out: *mut *mut OtpPlan,
) -> OtpStatus {
    if path.is_null() || out.is_null() {
        set_last_error("null argument");
        return OtpStatus::NullArgument;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_last_error("path is not valid UTF-8");
        return OtpStatus::InvalidScenario;
    };
    match ScenarioConfig::load(Path::new(path)) {
        Ok(config) => run_plan(config, seed, out),
        Err(e) => {
            set_last_error(&e.to_string());
            OtpStatus::InvalidScenario
        }
    }
}

/// Plans a scenario given as JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_json(
    json: *const c_char,
    seed: i64,
    out: *mut *mut OtpPlan,
) -> OtpStatus {
    if json.is_null() || out.is_null() {
        set_last_error("null argument");
        return OtpStatus::NullArgument;
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        set_last_error("scenario text is not valid UTF-8");
        return OtpStatus::InvalidScenario;
    };
    match ScenarioConfig::from_json(text) {
        Ok(config) => run_plan(config, seed, out),
        Err(e) => {
            set_last_error(&e.to_string());
            OtpStatus::InvalidScenario
        }
    }
}

/// Releases a planning handle.
///
/// # Safety
/// `handle` must come from a successful plan call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_free(handle: *mut OtpPlan) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of distinct topology classes found.
///
/// # Safety
/// `handle` must be a valid planning handle.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_skeleton_count(handle: *const OtpPlan) -> c_int {
    match handle.as_ref() {
        Some(h) => h.outcome.skeletons.len() as c_int,
        None => -1,
    }
}

/// Number of evaluated candidates across the ratio sweep.
///
/// # Safety
/// `handle` must be a valid planning handle.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_candidate_count(handle: *const OtpPlan) -> c_int {
    match handle.as_ref() {
        Some(h) => h.outcome.candidates.len() as c_int,
        None => -1,
    }
}

/// Whether a collision-free, high-feasibility trajectory was selected.
///
/// # Safety
/// `handle` must be a valid planning handle.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_has_selection(handle: *const OtpPlan) -> c_int {
    match handle.as_ref() {
        Some(h) => h.outcome.selected.is_some() as c_int,
        None => -1,
    }
}

fn to_owned_c_string(text: String) -> *mut c_char {
    CString::new(text.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Selected candidate's metrics record as JSON (null when nothing passed the
/// screens). Free with [`otp_string_free`].
///
/// # Safety
/// `handle` must be a valid planning handle.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_selected_json(handle: *const OtpPlan) -> *mut c_char {
    let Some(h) = handle.as_ref() else {
        return ptr::null_mut();
    };
    let Some(index) = h.outcome.selected else {
        return ptr::null_mut();
    };
    let record = &h.outcome.candidates[index];
    to_owned_c_string(serde_json::to_string(record).expect("record serializes"))
}

/// All candidate records (reports, errors, coefficients) as a JSON array.
/// Free with [`otp_string_free`].
///
/// # Safety
/// `handle` must be a valid planning handle.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_candidates_json(handle: *const OtpPlan) -> *mut c_char {
    let Some(h) = handle.as_ref() else {
        return ptr::null_mut();
    };
    to_owned_c_string(serde_json::to_string(&h.outcome.candidates).expect("records serialize"))
}

/// Samples the selected trajectory at time `t` (clamped to its duration).
///
/// # Safety
/// `handle` must be a valid planning handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_sample_selected(
    handle: *const OtpPlan,
    t: c_double,
    out: *mut OtpState,
) -> OtpStatus {
    let Some(h) = handle.as_ref() else {
        set_last_error("null handle");
        return OtpStatus::NullArgument;
    };
    if out.is_null() {
        set_last_error("null output pointer");
        return OtpStatus::NullArgument;
    }
    let Some(index) = h.outcome.selected else {
        set_last_error("no trajectory was selected");
        return OtpStatus::NoFeasibleTrajectory;
    };
    let Some(traj) = h.outcome.candidates[index].trajectory.as_ref() else {
        set_last_error("selected candidate has no trajectory");
        return OtpStatus::Failure;
    };
    let clamped = t.clamp(0.0, traj.duration());
    match overtake_planner::flatness::state_at(traj, clamped, &h.config.vehicle) {
        Ok(state) => {
            *out = OtpState {
                x: state.x,
                y: state.y,
                speed: state.v,
                heading: state.theta,
            };
            OtpStatus::Ok
        }
        Err(e) => {
            set_last_error(&e.to_string());
            OtpStatus::Failure
        }
    }
}

/// Duration of the selected trajectory in seconds, or a negative value when
/// nothing was selected.
///
/// # Safety
/// `handle` must be a valid planning handle.
#[no_mangle]
pub unsafe extern "C" fn otp_plan_selected_duration(handle: *const OtpPlan) -> c_double {
    let Some(h) = handle.as_ref() else {
        return -1.0;
    };
    let Some(index) = h.outcome.selected else {
        return -1.0;
    };
    h.outcome.candidates[index]
        .trajectory
        .as_ref()
        .map(|t| t.duration())
        .unwrap_or(-1.0)
}

/// Last error message of the current thread. Free with [`otp_string_free`].
#[no_mangle]
pub extern "C" fn otp_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| to_owned_c_string(slot.borrow().to_string_lossy().into_owned()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `text` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn otp_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}
