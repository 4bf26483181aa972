use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::PathBuf;
use std::ptr;

use serde_json::{json, Value};

use verifide_ffi::*;

fn core_tests(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests").join(rel)
}

/// Takes ownership of a library string.
fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { vf_string_free(s) };
    out
}

fn last_error() -> Option<String> {
    let p = vf_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn new_session(config: Option<&str>) -> Result<*mut VfSession, VfStatus> {
    let c = config.map(|c| CString::new(c).unwrap());
    let mut s = ptr::null_mut();
    match unsafe { vf_session_new(c.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut s) } {
        VfStatus::Ok => Ok(s),
        st => Err(st),
    }
}

fn request(s: *mut VfSession, msg: &Value) -> Value {
    let c = CString::new(msg.to_string()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vf_session_request(s, c.as_ptr(), &mut out) }, VfStatus::Ok);
    serde_json::from_str(&take(out)).unwrap()
}

fn poll(s: *mut VfSession) -> Vec<Value> {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vf_session_poll(s, &mut out) }, VfStatus::Ok);
    serde_json::from_str(&take(out)).unwrap()
}

#[test]
fn session_round_trip() {
    let s = new_session(Some(r#"{"debounceMs": 20, "maxWorkers": 2}"#)).unwrap();
    let text = std::fs::read_to_string(core_tests("corpus/assert_false.msp")).unwrap();
    let ack = request(s, &json!({"type": "update", "id": 1, "text": text, "editedLines": [2]}));
    assert_eq!(ack, json!({"type": "ack", "id": 1, "snapshotId": 0}));

    let mut idle = false;
    assert_eq!(unsafe { vf_session_wait_idle(s, 60_000, &mut idle) }, VfStatus::Ok);
    assert!(idle);
    let pushes = poll(s);
    assert!(pushes.iter().any(|p| p["type"] == "verified" && p["snapshotId"] == 0));
    let failed = pushes.iter().find(|p| p["type"] == "unitResult" && p["verdict"] == "failed").unwrap();
    let trace = request(s, &json!({"type": "selectError", "id": 2, "errorId": failed["errors"][0]["errorId"]}));
    assert_eq!(trace["states"].as_array().unwrap().len(), 2);
    assert!(poll(s).is_empty());

    let e = request(s, &json!({"type": "nope", "id": 3}));
    assert_eq!(e, json!({"type": "error", "id": 3, "reason": "unknown-type"}));
    unsafe { vf_session_free(s) };
}

#[test]
fn status_codes() {
    assert_eq!(new_session(Some("{")).unwrap_err(), VfStatus::InvalidJson);
    assert!(last_error().is_some());
    assert_eq!(new_session(Some(r#"{"maxWorkers": 0}"#)).unwrap_err(), VfStatus::InvalidConfig);
    assert!(last_error().unwrap().contains("maxWorkers"));
    assert_eq!(unsafe { vf_session_new(ptr::null(), ptr::null_mut()) }, VfStatus::NullArgument);

    let mut out = ptr::null_mut();
    let req = CString::new("{}").unwrap();
    assert_eq!(unsafe { vf_session_request(ptr::null_mut(), req.as_ptr(), &mut out) }, VfStatus::NullArgument);
    assert_eq!(unsafe { vf_session_poll(ptr::null_mut(), &mut out) }, VfStatus::NullArgument);
    assert!(out.is_null());
    let mut idle = false;
    assert_eq!(unsafe { vf_session_wait_idle(ptr::null_mut(), 0, &mut idle) }, VfStatus::NullArgument);
    assert_eq!(unsafe { vf_replay(ptr::null(), &mut out) }, VfStatus::NullArgument);

    let bad_utf8 = [0xffu8, 0xfe, 0];
    let s = new_session(None).unwrap();
    assert_eq!(
        unsafe { vf_session_request(s, bad_utf8.as_ptr().cast(), &mut out) },
        VfStatus::InvalidUtf8
    );
    // Malformed JSON is a protocol answer, not a call failure.
    let junk = CString::new("{oops").unwrap();
    assert_eq!(unsafe { vf_session_request(s, junk.as_ptr(), &mut out) }, VfStatus::Ok);
    let v: Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["reason"], "malformed-json");

    let ok = new_session(None);
    assert!(ok.is_ok());
    unsafe {
        vf_session_free(ok.unwrap());
        vf_session_free(s);
        vf_session_free(ptr::null_mut());
        vf_string_free(ptr::null_mut());
    }
}

#[test]
fn replay_matches_the_cli_numbers() {
    let script = std::fs::read_to_string(core_tests("sessions/three_snapshots.json")).unwrap();
    let c = CString::new(script).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vf_replay(c.as_ptr(), &mut out) }, VfStatus::Ok);
    let report: Value = serde_json::from_str(&take(out)).unwrap();
    let per: Vec<u64> = report["snapshots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["proverInvocations"].as_u64().unwrap())
        .collect();
    assert_eq!(per, [5, 1, 5]);

    let bad = CString::new(r#"{"snapshots": 3}"#).unwrap();
    assert_eq!(unsafe { vf_replay(bad.as_ptr(), &mut out) }, VfStatus::InvalidJson);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(vf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/verifide.h")).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 9);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for (i, status) in ["OK", "NULL_ARGUMENT", "INVALID_UTF8", "INVALID_JSON", "INVALID_CONFIG", "PANIC"].iter().enumerate() {
        assert!(header.contains(&format!("VF_STATUS_{status} = {i},")), "{status}");
    }
    assert!(header.contains("typedef struct VfSession VfSession"));
}

#[test]
fn header_compiles_as_c() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = std::env::temp_dir().join(format!("verifide-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"verifide.h\"\n\
         int main(void) {\n\
           VfSession *s = NULL;\n\
           char *out = NULL;\n\
           if (vf_session_new(NULL, &s) != VF_STATUS_OK) return 1;\n\
           vf_session_request(s, \"{}\", &out);\n\
           vf_string_free(out);\n\
           vf_session_free(s);\n\
           return vf_version() == NULL;\n\
         }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .expect("a C compiler");
    std::fs::remove_dir_all(&dir).ok();
    assert!(status.success());
}
