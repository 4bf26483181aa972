mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value as Json};

use verifide_core::cache::ResultCache;
use verifide_core::lang::analyze;
use verifide_core::orchestrator::Config;
use verifide_core::prover::{verify_all, Bounds};
use verifide_core::service::{interactive_engine, serve_tcp, Session};

fn session() -> Session {
    let config = Config {
        max_workers: 2,
        ..Config::default()
    };
    Session::new(interactive_engine(config, Arc::new(ResultCache::new(64))))
}

fn req(s: &Session, msg: Json) -> Json {
    s.handle_line(&msg.to_string())
}

/// Submits `text`, skips the debounce wait and collects every push up to
/// and including the matching `verified`.
fn update(s: &Session, id: u64, text: &str) -> (u64, Vec<Json>) {
    let ack = req(s, json!({"type": "update", "id": id, "text": text, "editedLines": [0], "atMs": 0}));
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["id"], id);
    let k = ack["snapshotId"].as_u64().unwrap();
    s.engine().flush();
    assert!(s.engine().wait_idle(Duration::from_secs(60)));
    (k, s.pump())
}

fn unit_result<'a>(pushes: &'a [Json], unit: &str) -> &'a Json {
    pushes
        .iter()
        .find(|p| p["type"] == "unitResult" && p["unit"] == unit)
        .unwrap_or_else(|| panic!("no result for {unit}"))
}

#[test]
fn update_pushes_diagnostics_then_verified() {
    let s = session();
    let (k, pushes) = update(&s, 1, common::THREE_SNAP0);
    let kinds: Vec<&str> = pushes.iter().map(|p| p["type"].as_str().unwrap()).collect();
    let diag = kinds.iter().position(|t| *t == "resolutionDiagnostics").unwrap();
    let verified = kinds.iter().position(|t| *t == "verified").unwrap();
    assert!(diag < verified, "{kinds:?}");
    assert_eq!(pushes[diag]["snapshotId"], k);
    assert_eq!(pushes[verified]["snapshotId"], k);
    assert_eq!(kinds.iter().filter(|t| **t == "unitResult").count(), 5);
    assert!(pushes.iter().filter(|p| p["type"] != "margins").all(|p| p["snapshotId"] == k));
    // Margins go edited → verifying → idle.
    let margins: Vec<&Json> = pushes.iter().filter(|p| p["type"] == "margins").collect();
    assert_eq!(margins[0]["lines"], json!([{"line": 0, "state": "edited"}]));
    assert!(margins.iter().any(|m| m["lines"] == json!([{"line": 0, "state": "verifying"}])));
    assert_eq!(margins.last().unwrap()["lines"], json!([]));
}

#[test]
fn broken_text_reports_diagnostics_with_spans() {
    let s = session();
    let (k, pushes) = update(&s, 1, "method M() { x := 1; }");
    let d = pushes.iter().find(|p| p["type"] == "resolutionDiagnostics").unwrap();
    assert_eq!(d["snapshotId"], k);
    let item = &d["items"][0];
    assert_eq!(item["severity"], "error");
    assert_eq!(item["span"], json!({"startLine": 0, "startCol": 13, "endLine": 0, "endCol": 14}));
    assert!(!pushes.iter().any(|p| p["type"] == "verified"));
}

#[test]
fn fill_trace_and_state_values_match_the_prover() {
    let text = common::corpus_file("fill.msp");
    let s = session();
    let (_, pushes) = update(&s, 1, &text);
    let r = unit_result(&pushes, "MethodBody(Fill)");
    assert_eq!(r["verdict"], "failed");
    assert_eq!(r["entity"], "MethodBody(Fill)");
    let err = &r["errors"][0];
    let eid = err["errorId"].as_u64().unwrap();
    let n = err["traceLength"].as_u64().unwrap() as usize;
    assert_eq!(err["span"]["startLine"], 12);

    let trace = req(&s, json!({"type": "selectError", "id": 2, "errorId": eid}));
    assert_eq!(trace["type"], "trace");
    assert_eq!(trace["id"], 2);
    let states = trace["states"].as_array().unwrap();
    assert_eq!(states.len(), n);
    assert_eq!(trace["selectedIndex"], n - 1);
    let lines: Vec<u64> = states.iter().map(|st| st["line"].as_u64().unwrap()).collect();
    assert_eq!(lines.first(), Some(&6));
    assert_eq!(lines.last(), Some(&12));
    assert!(lines.contains(&9) && lines.contains(&10), "{lines:?}");

    // Oracle: the prover's own trace for the same program.
    let p = Arc::new(analyze(&text));
    let vs = verify_all(&p, Bounds::default());
    let want = &vs.iter().find(|(u, _)| u.to_string() == "MethodBody(Fill)").unwrap().1.errors()[0].trace;
    let rendered = |i: usize| -> Vec<(String, String)> {
        want.states[i].bindings.iter().map(|b| (b.name.clone(), b.value.to_string())).collect()
    };

    let last = req(&s, json!({"type": "selectState", "id": 3, "errorId": eid}));
    assert_eq!(last["stateIndex"], n - 1);
    assert!(last["values"].as_array().unwrap().iter().all(|v| v["previous"].is_null()));
    let got: Vec<(String, String)> = last["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (v["name"].as_str().unwrap().into(), v["value"].as_str().unwrap().into()))
        .collect();
    assert_eq!(got, rendered(n - 1));

    // Error state first, then one step earlier: Previous shows the error
    // state's values.
    let earlier = req(
        &s,
        json!({"type": "selectState", "id": 4, "errorId": eid, "stateIndex": n - 2, "previousIndex": n - 1}),
    );
    let prev_of = |name: &str| want.states[n - 1].get(name).map(|v| v.to_string());
    for v in earlier["values"].as_array().unwrap() {
        let name = v["name"].as_str().unwrap();
        assert_eq!(v["value"].as_str().unwrap(), want.states[n - 2].get(name).unwrap().to_string());
        assert_eq!(v["previous"].as_str().map(String::from), prev_of(name));
    }
    assert_eq!(earlier["values"].as_array().unwrap().len(), rendered(n - 2).len());

    // Hovering a variable now also shows its value in the selected state.
    let h = req(&s, json!({"type": "hover", "id": 5, "line": 2, "col": 39}));
    let text_shown = h["text"].as_str().unwrap();
    assert!(text_shown.starts_with("(parameter) v: int"), "{text_shown}");
    let v = want.states[n - 2].get("v").unwrap().to_string();
    assert!(text_shown.ends_with(&format!("\nvalue in selected state: {v}")), "{text_shown}");

    let oob = req(&s, json!({"type": "selectState", "id": 6, "errorId": eid, "stateIndex": n}));
    assert_eq!(oob, json!({"type": "error", "id": 6, "reason": "index-out-of-range"}));
}

#[test]
fn trace_lengths_for_small_bodies() {
    let s = session();
    for (file, unit, len) in [("straight_line.msp", "MethodBody(Straight)", 4), ("assert_false.msp", "MethodBody(Unreachable)", 2)] {
        let (_, pushes) = update(&s, 1, &common::corpus_file(file));
        let err = &unit_result(&pushes, unit)["errors"][0];
        assert_eq!(err["traceLength"], len);
        let t = req(&s, json!({"type": "selectError", "id": 2, "errorId": err["errorId"]}));
        assert_eq!(t["states"].as_array().unwrap().len(), len);
    }
}

#[test]
fn scope_is_respected_in_state_values() {
    let s = session();
    let (_, pushes) = update(&s, 1, &common::corpus_file("straight_line.msp"));
    let eid = &unit_result(&pushes, "MethodBody(Straight)")["errors"][0]["errorId"];
    let first = req(&s, json!({"type": "selectState", "id": 2, "errorId": eid, "stateIndex": 0, "previousIndex": 3}));
    let names: Vec<&str> = first["values"].as_array().unwrap().iter().map(|v| v["name"].as_str().unwrap()).collect();
    // y and z are declared later.
    assert_eq!(names, ["x"]);
    assert_eq!(first["values"][0]["previous"], first["values"][0]["value"]);
}

#[test]
fn error_ids_go_stale_after_a_newer_verification() {
    let s = session();
    let (_, pushes) = update(&s, 1, &common::corpus_file("assert_false.msp"));
    let eid = unit_result(&pushes, "MethodBody(Unreachable)")["errors"][0]["errorId"].clone();
    assert_eq!(req(&s, json!({"type": "selectError", "id": 2, "errorId": eid}))["type"], "trace");
    update(&s, 3, &common::corpus_file("abs.msp"));
    let stale = req(&s, json!({"type": "selectError", "id": 4, "errorId": eid}));
    assert_eq!(stale, json!({"type": "error", "id": 4, "reason": "stale-error"}));
    let stale = req(&s, json!({"type": "selectState", "id": 5, "errorId": eid}));
    assert_eq!(stale["reason"], "stale-error");
    // The selection went with it: hover shows no value.
    let h = req(&s, json!({"type": "hover", "id": 6, "line": 0, "col": 8}));
    assert!(!h["text"].as_str().unwrap().contains("value in selected state"));
}

#[test]
fn bad_requests() {
    let s = session();
    assert_eq!(s.handle_line("{not json"), json!({"type": "error", "id": null, "reason": "malformed-json"}));
    assert_eq!(s.handle_line("[1,2]"), json!({"type": "error", "id": null, "reason": "malformed-json"}));
    assert_eq!(
        req(&s, json!({"type": "launch", "id": 7})),
        json!({"type": "error", "id": 7, "reason": "unknown-type"})
    );
    assert_eq!(req(&s, json!({"id": 8}))["reason"], "unknown-type");
    assert_eq!(
        req(&s, json!({"type": "hover", "id": 9, "line": "x"})),
        json!({"type": "error", "id": 9, "reason": "invalid-message"})
    );
    assert_eq!(req(&s, json!({"type": "selectError", "id": 10, "errorId": 99}))["reason"], "stale-error");
}

#[test]
fn hover_and_tokens() {
    let s = session();
    let text = "method M(x: int)\n{\n  // note\n  assert x == x;\n}\n";
    update(&s, 1, text);
    let h = req(&s, json!({"type": "hover", "id": 2, "line": 0, "col": 9}));
    assert_eq!(h, json!({"type": "hoverResult", "id": 2, "text": "(parameter) x: int"}));
    let none = req(&s, json!({"type": "hover", "id": 3, "line": 1, "col": 0}));
    assert_eq!(none["text"], Json::Null);
    let t = req(&s, json!({"type": "tokens", "id": 4}));
    let items = t["items"].as_array().unwrap();
    assert_eq!(items[0], json!({"kind": "keyword", "span": {"startLine": 0, "startCol": 0, "endLine": 0, "endCol": 6}}));
    assert!(items.iter().any(|i| i["kind"] == "comment" && i["span"]["startLine"] == 2));
}

fn read_until(reader: &mut impl BufRead, mut stop: impl FnMut(&Json) -> bool) -> Vec<Json> {
    let mut seen = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap() == 0 {
            return seen;
        }
        let v: Json = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line}"));
        let done = stop(&v);
        seen.push(v);
        if done {
            return seen;
        }
    }
}

#[test]
fn tcp_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let config = Config {
        debounce_ms: 50,
        max_workers: 2,
        ..Config::default()
    };
    std::thread::spawn(move || serve_tcp(listener, config, Arc::new(ResultCache::new(64))));
    let mut conn = TcpStream::connect(addr).unwrap();
    conn.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let update = json!({"type": "update", "id": 1, "text": common::corpus_file("assert_false.msp"), "editedLines": [2]});
    writeln!(conn, "{update}").unwrap();
    writeln!(conn, "garbage").unwrap();
    let seen = read_until(&mut reader, |v| v["type"] == "verified");
    assert!(seen.iter().any(|v| v["type"] == "ack" && v["id"] == 1));
    assert!(seen.iter().any(|v| *v == json!({"type": "error", "id": null, "reason": "malformed-json"})));
    let err = seen
        .iter()
        .find(|v| v["type"] == "unitResult" && v["verdict"] == "failed")
        .expect("failed unit");
    let eid = err["errors"][0]["errorId"].clone();
    writeln!(conn, "{}", json!({"type": "selectError", "id": 2, "errorId": eid})).unwrap();
    let seen = read_until(&mut reader, |v| v["id"] == 2);
    assert_eq!(seen.last().unwrap()["states"].as_array().unwrap().len(), 2);
}

#[test]
fn stdio_mode_drains_before_exit() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_verifide"))
        .args(["serve", "--stdio", "--workers", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut stdin = child.stdin.take().unwrap();
        writeln!(stdin, "{}", json!({"type": "update", "id": 1, "text": common::THREE_SNAP0, "editedLines": []})).unwrap();
        writeln!(stdin, "{}", json!({"type": "tokens", "id": 2})).unwrap();
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let msgs: Vec<Json> = out.stdout.split(|b| *b == b'\n').filter(|l| !l.is_empty()).map(|l| serde_json::from_slice(l).unwrap()).collect();
    assert!(msgs.iter().any(|m| m["type"] == "ack" && m["id"] == 1));
    assert!(msgs.iter().any(|m| m["type"] == "tokens" && m["id"] == 2));
    assert_eq!(msgs.iter().filter(|m| m["type"] == "unitResult").count(), 5);
    assert_eq!(msgs.iter().filter(|m| m["type"] == "verified").count(), 1);
}
