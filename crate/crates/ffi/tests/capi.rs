//! Exercises the C surface exactly as a foreign caller would.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use overtake_planner_ffi::*;

fn scenario_cstring(name: &str) -> CString {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn plan_query_and_sample_through_the_c_surface() {
    unsafe {
        let path = scenario_cstring("s1.json");
        let mut handle: *mut OtpPlan = ptr::null_mut();
        let status = otp_plan_file(path.as_ptr(), -1, &mut handle);
        assert_eq!(status, OtpStatus::Ok);
        assert!(!handle.is_null());

        assert_eq!(otp_plan_skeleton_count(handle), 2);
        assert_eq!(otp_plan_candidate_count(handle), 14);
        assert_eq!(otp_plan_has_selection(handle), 1);

        let selected = otp_plan_selected_json(handle);
        assert!(!selected.is_null());
        let text = CStr::from_ptr(selected).to_str().unwrap().to_owned();
        otp_string_free(selected);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(
            parsed["report"]["collision"],
            serde_json::Value::Bool(false)
        );

        let duration = otp_plan_selected_duration(handle);
        assert!(duration > 1.0);
        let mut state = OtpState {
            x: 0.0,
            y: 0.0,
            speed: 0.0,
            heading: 0.0,
        };
        assert_eq!(
            otp_plan_sample_selected(handle, 0.0, &mut state),
            OtpStatus::Ok
        );
        assert!(
            state.x.abs() < 1e-6,
            "trajectory starts at the ego position"
        );
        assert_eq!(
            otp_plan_sample_selected(handle, duration, &mut state),
            OtpStatus::Ok
        );
        assert!(state.x > 40.0, "trajectory ends near the goal");

        otp_plan_free(handle);
    }
}

#[test]
fn invalid_scenarios_set_the_error_message() {
    unsafe {
        let bogus = CString::new("{\"obstacles\": []}").unwrap();
        let mut handle: *mut OtpPlan = ptr::null_mut();
        let status = otp_plan_json(bogus.as_ptr(), -1, &mut handle);
        assert_eq!(status, OtpStatus::InvalidScenario);
        assert!(handle.is_null());
        let message = otp_last_error();
        assert!(!message.is_null());
        let text = CStr::from_ptr(message).to_str().unwrap().to_owned();
        otp_string_free(message);
        assert!(
            text.contains("road"),
            "error names the missing field: {text}"
        );
    }
}

#[test]
fn missing_file_reports_invalid_scenario() {
    unsafe {
        let path = CString::new("/nonexistent/scenario.json").unwrap();
        let mut handle: *mut OtpPlan = ptr::null_mut();
        assert_eq!(
            otp_plan_file(path.as_ptr(), -1, &mut handle),
            OtpStatus::InvalidScenario
        );
    }
}

#[test]
fn generated_header_covers_the_surface() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/overtake_planner.h");
    let text = std::fs::read_to_string(header).expect("header generated at build time");
    for symbol in [
        "otp_plan_file",
        "otp_plan_json",
        "otp_plan_free",
        "otp_plan_skeleton_count",
        "otp_plan_sample_selected",
        "otp_last_error",
        "otp_string_free",
        "OtpStatus",
        "OtpState",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from the header");
    }
}
