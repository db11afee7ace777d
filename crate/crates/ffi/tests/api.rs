use std::ffi::{CStr, CString};
use std::ptr;

use canwire_ffi::*;

fn take(s: *mut std::ffi::c_char) -> serde_json::Value {
    assert!(!s.is_null());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    unsafe { cw_string_free(s) };
    v
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cw_last_error()) }.to_string_lossy().into_owned()
}

const SCENARIO: &str = r#"{
  "schema_version": 1, "name": "ffi", "duration_ms": 1000,
  "vehicle": {"ignition": "running", "speed": 70, "rpm": 2200},
  "assertions": [{"at_ms": 1000, "check": "displayed_speed_eq", "value": 70}]
}"#;

#[test]
fn drive_a_bench() {
    let json = CString::new(SCENARIO).unwrap();
    let mut tb = ptr::null_mut();
    assert_eq!(unsafe { cw_testbed_new(json.as_ptr(), &mut tb) }, CwStatus::Ok);
    assert_eq!(unsafe { cw_testbed_advance(tb, 500_000) }, CwStatus::Ok);
    assert_eq!(unsafe { cw_testbed_now(tb) }, 500_000);

    let cmd = CString::new(r#"{"seq": 1, "verb": "set_speed_override", "value": 200}"#).unwrap();
    let mut reply = ptr::null_mut();
    assert_eq!(unsafe { cw_testbed_command(tb, cmd.as_ptr(), &mut reply) }, CwStatus::Ok);
    assert_eq!(take(reply), serde_json::json!({"type": "reply", "seq": 1, "ok": true}));

    let bad = CString::new(r#"{"seq": 2, "verb": "set_rpm_override", "value": 9000}"#).unwrap();
    assert_eq!(unsafe { cw_testbed_command(tb, bad.as_ptr(), &mut reply) }, CwStatus::CommandRejected);
    assert_eq!(take(reply)["error"]["code"], "out_of_range");
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { cw_testbed_advance(tb, 500_000) }, CwStatus::Ok);
    let mut telemetry = ptr::null_mut();
    assert_eq!(unsafe { cw_testbed_telemetry(tb, &mut telemetry) }, CwStatus::Ok);
    assert!(last_error().is_empty());
    let t = take(telemetry);
    assert_eq!(t["type"], "telemetry");
    assert_eq!(t["cluster"]["speed"], 200.0);
    assert_eq!(t["vehicle"]["speed"], 70.0);
    unsafe { cw_testbed_free(tb) };
}

#[test]
fn default_bench_and_null_handling() {
    let mut tb = ptr::null_mut();
    assert_eq!(unsafe { cw_testbed_new(ptr::null(), &mut tb) }, CwStatus::Ok);
    assert!(!tb.is_null());
    unsafe { cw_testbed_free(tb) };
    unsafe { cw_testbed_free(ptr::null_mut()) };
    unsafe { cw_string_free(ptr::null_mut()) };
    assert_eq!(unsafe { cw_testbed_advance(ptr::null_mut(), 1) }, CwStatus::NullArgument);
    assert_eq!(unsafe { cw_testbed_now(ptr::null()) }, 0);
    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { cw_testbed_new(bad.as_ptr(), &mut tb) }, CwStatus::InvalidInput);
    assert!(!last_error().is_empty());
}

#[test]
fn run_scenarios() {
    let json = CString::new(SCENARIO).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { cw_scenario_run(json.as_ptr(), &mut report) }, CwStatus::Ok);
    assert_eq!(take(report)["name"], "ffi");

    let failing = CString::new(SCENARIO.replace(r#""value": 70"#, r#""value": 90"#)).unwrap();
    assert_eq!(unsafe { cw_scenario_run(failing.as_ptr(), &mut report) }, CwStatus::AssertionFailed);
    assert_eq!(take(report)["outcomes"][0]["pass"], false);
}

#[test]
fn frame_bits_and_crc() {
    let data = [0x45u8, 0, 0, 0, 0];
    let mut len = 0usize;
    let status = unsafe { cw_frame_serialize(0x130, false, data.as_ptr(), data.len(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(status, CwStatus::BufferTooSmall);
    let mut bits = vec![0u8; len];
    let status = unsafe { cw_frame_serialize(0x130, false, data.as_ptr(), data.len(), bits.as_mut_ptr(), len, &mut len) };
    assert_eq!(status, CwStatus::Ok);
    let frame = canwire::frame::CanFrame::new(0x130, &data).unwrap();
    let expected: Vec<u8> = canwire::frame::serialize(&frame).into_inner().into_iter().map(u8::from).collect();
    assert_eq!(bits, expected);

    let region: Vec<u8> = canwire::frame::serialize_unstuffed(&frame).into_inner()[..19 + 40]
        .iter()
        .map(|&b| u8::from(b))
        .collect();
    let bools: Vec<bool> = region.iter().map(|&b| b == 1).collect();
    assert_eq!(unsafe { cw_crc15(region.as_ptr(), region.len()) }, canwire::frame::crc15(&bools));

    let status = unsafe { cw_frame_serialize(0x800, false, data.as_ptr(), data.len(), bits.as_mut_ptr(), len, &mut len) };
    assert_eq!(status, CwStatus::InvalidInput);
}

#[test]
fn infer_from_log_text() {
    let mut log = String::new();
    for k in 0..20 {
        log.push_str("can0 130#4500000000\n");
        if k % 2 == 0 {
            log.push_str("can0 3B4#00\n");
        }
    }
    let text = CString::new(log).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cw_infer_periods(text.as_ptr(), 0x130, 100.0, &mut out) }, CwStatus::Ok);
    let estimates = take(out);
    let e = estimates.as_array().unwrap().iter().find(|e| e["id"] == "3B4").unwrap().clone();
    assert_eq!(e["period_ms"], 200.0);
    let none = CString::new("can0 3B4#00\n").unwrap();
    assert_eq!(unsafe { cw_infer_periods(none.as_ptr(), 0x130, 100.0, &mut out) }, CwStatus::InvalidInput);
}
