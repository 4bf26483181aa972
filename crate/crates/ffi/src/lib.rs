//! C ABI over the verifide engine.
//!
//! Sessions are opaque handles. Everything structured crosses the boundary
//! as UTF-8 JSON: requests and responses use the editor wire protocol, and
//! replays take a session script and return a report. Strings returned by
//! the library must be released with `vf_string_free`. On failure a status
//! code is returned and `vf_last_error` describes it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use verifide_core::cache::ResultCache;
use verifide_core::orchestrator::Config;
use verifide_core::replay::{run_session, ConfigOverrides, RunOptions, SessionScript};
use verifide_core::service::{interactive_engine, Session};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidConfig = 4,
    Panic = 5,
}

/// An editor session: one engine plus protocol state.
pub struct VfSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VfStatus, msg: impl Into<String>) -> VfStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> VfStatus) -> VfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(VfStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, VfStatus> {
    if p.is_null() {
        return Err(fail(VfStatus::NullArgument, "null string argument"));
    }
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(VfStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn write_str(out: *mut *mut c_char, s: String) -> VfStatus {
    let c = CString::new(s.replace('\0', "\\u0000")).unwrap_or_default();
    // SAFETY: `out` was checked for null by the caller.
    unsafe { *out = c.into_raw() };
    VfStatus::Ok
}

fn config_from(json: Option<&str>) -> Result<Config, VfStatus> {
    let mut config = Config::default();
    if let Some(j) = json {
        let o: ConfigOverrides = serde_json::from_str(j).map_err(|e| fail(VfStatus::InvalidJson, e.to_string()))?;
        o.apply(&mut config);
    }
    config.validate().map_err(|e| fail(VfStatus::InvalidConfig, e))?;
    Ok(config)
}

/// Creates a session. `config_json` may be null for defaults, or a JSON
/// object with the replay script's config fields (`debounceMs`,
/// `maxWorkers`, `timeoutMs`, `bounds`, `prover`, ...).
///
/// # Safety
/// `config_json` must be null or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_session_new(config_json: *const c_char, out: *mut *mut VfSession) -> VfStatus {
    guarded(|| {
        if out.is_null() {
            return fail(VfStatus::NullArgument, "null out pointer");
        }
        let json = if config_json.is_null() {
            None
        } else {
            match unsafe { read_str(config_json) } {
                Ok(s) => Some(s),
                Err(st) => return st,
            }
        };
        let config = match config_from(json) {
            Ok(c) => c,
            Err(st) => return st,
        };
        let cache = Arc::new(ResultCache::new(config.cache_capacity));
        let s = Box::new(VfSession {
            session: Session::new(interactive_engine(config, cache)),
        });
        unsafe { *out = Box::into_raw(s) };
        VfStatus::Ok
    })
}

/// Destroys a session. Null is ignored.
///
/// # Safety
/// `session` must come from `vf_session_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vf_session_free(session: *mut VfSession) {
    if !session.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Handles one protocol request (a JSON object) and returns the response
/// object. Protocol-level problems, such as an unknown message type, are
/// reported inside the response, not as a status.
///
/// # Safety
/// `session` must be live; `request` a valid C string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_session_request(
    session: *mut VfSession,
    request: *const c_char,
    out_json: *mut *mut c_char,
) -> VfStatus {
    guarded(|| {
        if session.is_null() || out_json.is_null() {
            return fail(VfStatus::NullArgument, "null session or out pointer");
        }
        let req = match unsafe { read_str(request) } {
            Ok(s) => s,
            Err(st) => return st,
        };
        let s = unsafe { &*session };
        let resp = s.session.handle_line(req);
        unsafe { write_str(out_json, resp.to_string()) }
    })
}

/// Returns the pushes produced since the previous poll, as a JSON array.
/// Also fires the debounce timer if it is due.
///
/// # Safety
/// `session` must be live; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_session_poll(session: *mut VfSession, out_json: *mut *mut c_char) -> VfStatus {
    guarded(|| {
        if session.is_null() || out_json.is_null() {
            return fail(VfStatus::NullArgument, "null session or out pointer");
        }
        let s = unsafe { &*session };
        s.session.engine().tick();
        let pushes = serde_json::Value::Array(s.session.pump());
        unsafe { write_str(out_json, pushes.to_string()) }
    })
}

/// Blocks until the session has no pending debounce or verification work,
/// or `timeout_ms` elapses. `*out_idle` tells which.
///
/// # Safety
/// `session` must be live; `out_idle` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_session_wait_idle(session: *mut VfSession, timeout_ms: u64, out_idle: *mut bool) -> VfStatus {
    guarded(|| {
        if session.is_null() || out_idle.is_null() {
            return fail(VfStatus::NullArgument, "null session or out pointer");
        }
        let engine = unsafe { &*session }.session.engine();
        let give_up = Instant::now() + Duration::from_millis(timeout_ms);
        let idle = loop {
            engine.tick();
            if engine.is_idle() {
                break true;
            }
            if Instant::now() >= give_up {
                break false;
            }
            engine.wait_idle(Duration::from_millis(5));
        };
        unsafe { *out_idle = idle };
        VfStatus::Ok
    })
}

/// Replays a session script (JSON) and returns the report (JSON).
///
/// # Safety
/// `script_json` must be a valid C string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_replay(script_json: *const c_char, out_json: *mut *mut c_char) -> VfStatus {
    guarded(|| {
        if out_json.is_null() {
            return fail(VfStatus::NullArgument, "null out pointer");
        }
        let json = match unsafe { read_str(script_json) } {
            Ok(s) => s,
            Err(st) => return st,
        };
        let script = match SessionScript::from_json(json) {
            Ok(s) => s,
            Err(e) => return fail(VfStatus::InvalidJson, e.to_string()),
        };
        let mut config = Config::default();
        script.config.apply(&mut config);
        if let Err(e) = config.validate() {
            return fail(VfStatus::InvalidConfig, e);
        }
        let report = run_session(&script, &config, &RunOptions::default());
        match serde_json::to_string(&report) {
            Ok(s) => unsafe { write_str(out_json, s) },
            Err(e) => fail(VfStatus::InvalidJson, e.to_string()),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vf_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by CString::into_raw in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn vf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn vf_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}
