//! C ABI over the canwire testbed.
//!
//! Handles are opaque. Every call returns a [`CwStatus`]; on failure
//! `cw_last_error` describes what went wrong on the calling thread.
//! Strings returned through `char **` out-parameters are owned by the
//! caller and must be released with [`cw_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use canwire::capture::{infer_periods, read_log};
use canwire::control::protocol::{parse_command, Reply, ServerMessage};
use canwire::frame::{crc15, serialize, CanFrame};
use canwire::scenario::Scenario;
use canwire::testbed::{Testbed, TestbedConfig};

/// Result of every call. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// JSON, scenario, log or frame could not be parsed or was invalid.
    InvalidInput = 3,
    /// A command was understood but refused. The reply carries the code.
    CommandRejected = 4,
    /// Scenario assertions failed. The report is still returned.
    AssertionFailed = 5,
    Simulation = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A simulated bench: vehicle, cluster and, in the mitm topology, the
/// rogue device.
pub struct CwTestbed {
    inner: Testbed,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> Result<CwStatus, (CwStatus, String)>) -> CwStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CwStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, (CwStatus, String)> {
    if s.is_null() {
        return Err((CwStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (CwStatus::InvalidUtf8, e.to_string()))
}

unsafe fn give(out: *mut *mut c_char, s: String) -> Result<(), (CwStatus, String)> {
    if out.is_null() {
        return Err((CwStatus::NullArgument, "null output pointer".into()));
    }
    *out = CString::new(s).map_err(|e| (CwStatus::Panic, e.to_string()))?.into_raw();
    Ok(())
}

fn invalid(e: impl ToString) -> (CwStatus, String) {
    (CwStatus::InvalidInput, e.to_string())
}

/// Message for the last failed call on this thread. Empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn cw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a bench from scenario JSON, or the default bench (mitm, ignition
/// off) when `scenario_json` is null. Only the setup part of the scenario is
/// used; drive it with `cw_testbed_advance` and `cw_testbed_command`.
#[no_mangle]
pub unsafe extern "C" fn cw_testbed_new(scenario_json: *const c_char, out: *mut *mut CwTestbed) -> CwStatus {
    guard(|| {
        if out.is_null() {
            return Err((CwStatus::NullArgument, "null output pointer".into()));
        }
        let inner = if scenario_json.is_null() {
            Testbed::new(TestbedConfig::default()).map_err(invalid)?
        } else {
            let scenario = Scenario::from_json(text(scenario_json)?).map_err(invalid)?;
            scenario.testbed().map_err(invalid)?
        };
        *out = Box::into_raw(Box::new(CwTestbed { inner }));
        Ok(CwStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cw_testbed_free(tb: *mut CwTestbed) {
    if !tb.is_null() {
        drop(Box::from_raw(tb));
    }
}

/// Current virtual time in microseconds, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cw_testbed_now(tb: *const CwTestbed) -> u64 {
    tb.as_ref().map_or(0, |t| t.inner.now())
}

/// Runs the simulation forward by `dt_us` microseconds.
#[no_mangle]
pub unsafe extern "C" fn cw_testbed_advance(tb: *mut CwTestbed, dt_us: u64) -> CwStatus {
    guard(|| {
        let tb = tb.as_mut().ok_or((CwStatus::NullArgument, "null testbed".into()))?;
        tb.inner
            .advance(dt_us)
            .map_err(|e| (CwStatus::Simulation, e.to_string()))?;
        Ok(CwStatus::Ok)
    })
}

/// Applies one command in the control protocol's JSON form and writes the
/// reply JSON to `reply_out`. A reply is written for rejected commands too.
#[no_mangle]
pub unsafe extern "C" fn cw_testbed_command(
    tb: *mut CwTestbed,
    command_json: *const c_char,
    reply_out: *mut *mut c_char,
) -> CwStatus {
    guard(|| {
        let tb = tb.as_mut().ok_or((CwStatus::NullArgument, "null testbed".into()))?;
        let command = text(command_json)?;
        let reply = match parse_command(command) {
            Ok(c) => match tb.inner.apply(&c.action) {
                Ok(()) => Reply::ack(c.seq),
                Err(e) => Reply::error(Some(c.seq), e),
            },
            Err((seq, e)) => Reply::error(seq, e),
        };
        let status = match &reply.error {
            None => CwStatus::Ok,
            Some(e) => {
                set_error(e.message.clone());
                CwStatus::CommandRejected
            }
        };
        give(reply_out, ServerMessage::Reply(reply).to_json())?;
        Ok(status)
    })
}

/// Writes a telemetry message as JSON.
#[no_mangle]
pub unsafe extern "C" fn cw_testbed_telemetry(tb: *const CwTestbed, out: *mut *mut c_char) -> CwStatus {
    guard(|| {
        let tb = tb.as_ref().ok_or((CwStatus::NullArgument, "null testbed".into()))?;
        give(out, ServerMessage::Telemetry(Box::new(tb.inner.telemetry())).to_json())?;
        Ok(CwStatus::Ok)
    })
}

/// Runs a scenario to completion and writes its report as JSON. Returns
/// `CW_STATUS_ASSERTION_FAILED` with the report when any assertion fails.
#[no_mangle]
pub unsafe extern "C" fn cw_scenario_run(scenario_json: *const c_char, report_out: *mut *mut c_char) -> CwStatus {
    guard(|| {
        let scenario = Scenario::from_json(text(scenario_json)?).map_err(invalid)?;
        let report = scenario.run().map_err(|e| {
            if e.is_input_error() {
                invalid(e)
            } else {
                (CwStatus::Simulation, e.to_string())
            }
        })?;
        let json = serde_json::to_string(&report).map_err(|e| (CwStatus::Panic, e.to_string()))?;
        give(report_out, json)?;
        if report.passed() {
            Ok(CwStatus::Ok)
        } else {
            set_error("scenario assertions failed");
            Ok(CwStatus::AssertionFailed)
        }
    })
}

/// Serializes a data frame to wire bits, one bit per byte (0 dominant,
/// 1 recessive), SOF through EOF with stuffing. `bits_len` receives the
/// length even when the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn cw_frame_serialize(
    id: u32,
    extended: bool,
    data: *const u8,
    data_len: usize,
    bits: *mut u8,
    bits_cap: usize,
    bits_len: *mut usize,
) -> CwStatus {
    guard(|| {
        if bits_len.is_null() || (data.is_null() && data_len > 0) {
            return Err((CwStatus::NullArgument, "null argument".into()));
        }
        let payload = if data_len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(data, data_len)
        };
        let frame = CanFrame::make(id, payload, extended, false).map_err(invalid)?;
        let wire = serialize(&frame).into_inner();
        *bits_len = wire.len();
        if bits.is_null() || bits_cap < wire.len() {
            return Err((CwStatus::BufferTooSmall, format!("need {} bytes", wire.len())));
        }
        for (i, b) in wire.into_iter().enumerate() {
            ptr::write(bits.add(i), u8::from(b));
        }
        Ok(CwStatus::Ok)
    })
}

/// CAN CRC-15 over `len` bits, one bit per byte (nonzero is 1).
#[no_mangle]
pub unsafe extern "C" fn cw_crc15(bits: *const u8, len: usize) -> u16 {
    if bits.is_null() || len == 0 {
        return 0;
    }
    let v: Vec<bool> = std::slice::from_raw_parts(bits, len).iter().map(|&b| b != 0).collect();
    crc15(&v)
}

/// Estimates message periods from candump-style log text, timed or not,
/// and writes the estimates as a JSON array.
#[no_mangle]
pub unsafe extern "C" fn cw_infer_periods(
    log_text: *const c_char,
    ref_id: u32,
    ref_period_ms: f64,
    out: *mut *mut c_char,
) -> CwStatus {
    guard(|| {
        let records = read_log(text(log_text)?).map_err(invalid)?;
        let estimates = infer_periods(&records, ref_id, ref_period_ms).map_err(invalid)?;
        give(out, serde_json::to_string(&estimates).map_err(|e| (CwStatus::Panic, e.to_string()))?)?;
        Ok(CwStatus::Ok)
    })
}
