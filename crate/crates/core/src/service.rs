//! Interactive editor protocol: newline-delimited JSON over TCP or standard
//! streams. One engine per connection.
//!
//! Requests carry a client-chosen `id` that is echoed in the response;
//! pushes (`margins`, `resolutionDiagnostics`, `unitResult`, `verified`,
//! `resync`) are written as engine events arrive.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::cache::ResultCache;
use crate::clock::{Clock, HybridClock};
use crate::orchestrator::{Config, Engine, Event, Execution};
use crate::prover::{TraceState, VerificationError};

pub const DEFAULT_PORT: u16 = 4717;
const PUMP_INTERVAL: Duration = Duration::from_millis(20);
const DRAIN_LIMIT: Duration = Duration::from_secs(120);

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
enum Request {
    #[serde(rename_all = "camelCase")]
    Update {
        text: String,
        #[serde(default)]
        edited_lines: Vec<u32>,
        /// Informational; the server stamps snapshots with its own clock.
        #[serde(default)]
        #[allow(dead_code)]
        at_ms: Option<u64>,
    },
    Hover {
        line: u32,
        col: u32,
    },
    #[serde(rename_all = "camelCase")]
    SelectError {
        error_id: u64,
    },
    #[serde(rename_all = "camelCase")]
    SelectState {
        error_id: u64,
        #[serde(default)]
        state_index: Option<usize>,
        #[serde(default)]
        previous_index: Option<usize>,
    },
    Tokens,
}

const REQUEST_TYPES: &[&str] = &["update", "hover", "selectError", "selectState", "tokens"];

struct ErrorRecord {
    snapshot_id: u64,
    error: VerificationError,
}

#[derive(Default)]
struct SessionState {
    last_seq: u64,
    next_error_id: u64,
    errors: BTreeMap<u64, ErrorRecord>,
    /// (errorId, stateIndex) of the state shown in the variable pane.
    selected: Option<(u64, usize)>,
}

/// Protocol state for one client. Transport-independent: feed it request
/// lines with [`Session::handle_line`] and collect pushes with
/// [`Session::pump`].
pub struct Session {
    engine: Engine,
    state: Mutex<SessionState>,
}

fn error_msg(id: Option<&Json>, reason: &str) -> Json {
    json!({"type": "error", "id": id.cloned().unwrap_or(Json::Null), "reason": reason})
}

impl Session {
    pub fn new(engine: Engine) -> Self {
        Session {
            engine,
            state: Mutex::new(SessionState::default()),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn lock(&self) -> MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Answers one request line. Never fails: bad input yields an error
    /// message.
    pub fn handle_line(&self, line: &str) -> Json {
        let raw: Json = match serde_json::from_str(line) {
            Ok(v @ Json::Object(_)) => v,
            _ => return error_msg(None, "malformed-json"),
        };
        let id = raw.get("id").cloned();
        let ty = raw.get("type").and_then(Json::as_str).unwrap_or_default();
        if !REQUEST_TYPES.contains(&ty) {
            return error_msg(id.as_ref(), "unknown-type");
        }
        let req: Request = match serde_json::from_value(raw) {
            Ok(r) => r,
            Err(_) => return error_msg(id.as_ref(), "invalid-message"),
        };
        let id = id.unwrap_or(Json::Null);
        match req {
            Request::Update { text, edited_lines, .. } => {
                let k = self.engine.submit_text(&text, edited_lines, self.engine.now_ms());
                json!({"type": "ack", "id": id, "snapshotId": k})
            }
            Request::Hover { line, col } => {
                let text = self.engine.hover(line, col).map(|h| {
                    let value = h.variable.as_deref().and_then(|v| self.selected_value(v));
                    match value {
                        Some(v) => format!("{}\nvalue in selected state: {v}", h.text),
                        None => h.text,
                    }
                });
                json!({"type": "hoverResult", "id": id, "text": text})
            }
            Request::SelectError { error_id } => {
                let mut st = self.lock();
                let Some(rec) = st.errors.get(&error_id) else {
                    return error_msg(Some(&id), "stale-error");
                };
                let states: Vec<Json> = rec
                    .error
                    .trace
                    .states
                    .iter()
                    .map(|s| json!({"line": s.location.start_line, "col": s.location.start_col, "span": s.location}))
                    .collect();
                let last = states.len().saturating_sub(1);
                st.selected = Some((error_id, last));
                json!({"type": "trace", "id": id, "errorId": error_id, "states": states, "selectedIndex": last})
            }
            Request::SelectState {
                error_id,
                state_index,
                previous_index,
            } => {
                let mut st = self.lock();
                let Some(rec) = st.errors.get(&error_id) else {
                    return error_msg(Some(&id), "stale-error");
                };
                let states = &rec.error.trace.states;
                let i = state_index.unwrap_or(states.len().saturating_sub(1));
                if i >= states.len() || previous_index.is_some_and(|j| j >= states.len()) {
                    return error_msg(Some(&id), "index-out-of-range");
                }
                let values = state_values(&states[i], previous_index.map(|j| &states[j]));
                st.selected = Some((error_id, i));
                json!({"type": "stateValues", "id": id, "stateIndex": i, "previousIndex": previous_index, "values": values})
            }
            Request::Tokens => {
                let items: Vec<Json> = self
                    .engine
                    .tokens()
                    .iter()
                    .map(|t| json!({"kind": t.kind, "span": t.span}))
                    .collect();
                json!({"type": "tokens", "id": id, "items": items})
            }
        }
    }

    fn selected_value(&self, name: &str) -> Option<String> {
        let st = self.lock();
        let (e, i) = st.selected?;
        let state = st.errors.get(&e)?.error.trace.states.get(i)?;
        state.get(name).map(|v| v.to_string())
    }

    /// Converts engine events since the last pump into push messages.
    pub fn pump(&self) -> Vec<Json> {
        let mut st = self.lock();
        let events = self.engine.poll_events(st.last_seq);
        let mut out = Vec::new();
        for ev in events {
            st.last_seq = ev.seq;
            match ev.event {
                Event::MarginsChanged { margins } => {
                    let lines: Vec<Json> = margins
                        .iter()
                        .map(|(l, s)| json!({"line": l, "state": s.wire_name()}))
                        .collect();
                    out.push(json!({"type": "margins", "lines": lines}));
                }
                Event::ResolutionDiagnostics {
                    snapshot_id,
                    diagnostics,
                    ..
                } => {
                    let items: Vec<Json> = diagnostics
                        .iter()
                        .map(|d| json!({"span": d.span, "severity": d.severity, "message": d.message}))
                        .collect();
                    out.push(json!({"type": "resolutionDiagnostics", "snapshotId": snapshot_id, "items": items}));
                }
                Event::UnitCompleted {
                    snapshot_id,
                    unit,
                    verdict,
                    from_cache,
                    duration_ms,
                    ..
                } => {
                    let mut errors = Vec::new();
                    for e in verdict.errors() {
                        let eid = st.next_error_id;
                        st.next_error_id += 1;
                        errors.push(json!({
                            "errorId": eid,
                            "span": e.error_span,
                            "message": e.message,
                            "relatedSpans": e.related_spans,
                            "traceLength": e.trace.states.len(),
                        }));
                        st.errors.insert(
                            eid,
                            ErrorRecord {
                                snapshot_id,
                                error: e.clone(),
                            },
                        );
                    }
                    out.push(json!({
                        "type": "unitResult",
                        "snapshotId": snapshot_id,
                        "entity": unit.entity.to_string(),
                        "unit": unit.to_string(),
                        "verdict": verdict.label(),
                        "fromCache": from_cache,
                        "durationMs": duration_ms,
                        "errors": errors,
                    }));
                }
                Event::SnapshotVerified { snapshot_id } => {
                    st.errors.retain(|_, r| r.snapshot_id >= snapshot_id);
                    if let Some((e, _)) = st.selected {
                        if !st.errors.contains_key(&e) {
                            st.selected = None;
                        }
                    }
                    out.push(json!({"type": "verified", "snapshotId": snapshot_id}));
                }
                Event::Resync => out.push(json!({"type": "resync"})),
                _ => {}
            }
        }
        out
    }
}

fn state_values(cur: &TraceState, prev: Option<&TraceState>) -> Vec<Json> {
    cur.bindings
        .iter()
        .map(|b| {
            let previous = prev.and_then(|p| p.get(&b.name)).map(|v| v.to_string());
            json!({"name": b.name, "value": b.value.to_string(), "previous": previous})
        })
        .collect()
}

/// Builds a threaded, real-time engine for interactive use.
pub fn interactive_engine(config: Config, cache: Arc<ResultCache>) -> Engine {
    let clock: Arc<dyn Clock> = Arc::new(HybridClock::new());
    Engine::new(config, clock, cache, Execution::Threaded)
}

fn write_line(out: &Mutex<Box<dyn Write + Send>>, msg: &Json) -> io::Result<()> {
    let mut w = out.lock().unwrap_or_else(|e| e.into_inner());
    let mut line = serde_json::to_vec(msg).map_err(io::Error::other)?;
    line.push(b'\n');
    w.write_all(&line)?;
    w.flush()
}

/// Runs one session until the input stream closes.
pub fn serve_stream(session: Arc<Session>, input: impl BufRead, output: Box<dyn Write + Send>) -> io::Result<()> {
    let out = Arc::new(Mutex::new(output));
    let stop = Arc::new(AtomicBool::new(false));
    let pusher = {
        let (session, out, stop) = (session.clone(), out.clone(), stop.clone());
        std::thread::spawn(move || -> io::Result<()> {
            loop {
                let done = stop.load(Ordering::SeqCst);
                let since = session.lock().last_seq;
                session.engine.wait_events(since, PUMP_INTERVAL);
                session.engine.tick();
                for msg in session.pump() {
                    write_line(&out, &msg)?;
                }
                if done {
                    return Ok(());
                }
            }
        })
    };
    let mut result = Ok(());
    for line in input.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                result = Err(e);
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let resp = session.handle_line(&line);
        if let Err(e) = write_line(&out, &resp) {
            result = Err(e);
            break;
        }
    }
    // Let work already submitted finish so its results reach the client.
    let give_up = std::time::Instant::now() + DRAIN_LIMIT;
    while result.is_ok() && !session.engine.is_idle() && std::time::Instant::now() < give_up {
        std::thread::sleep(PUMP_INTERVAL);
    }
    stop.store(true, Ordering::SeqCst);
    let pushed = pusher.join().unwrap_or(Ok(()));
    result.and(pushed)
}

/// Serves standard input/output.
pub fn serve_stdio(config: Config, cache: Arc<ResultCache>) -> io::Result<()> {
    let session = Arc::new(Session::new(interactive_engine(config, cache)));
    serve_stream(session, io::stdin().lock(), Box::new(io::stdout()))
}

/// Accepts connections forever, one session and thread per connection.
pub fn serve_tcp(listener: TcpListener, config: Config, cache: Arc<ResultCache>) -> io::Result<()> {
    for conn in listener.incoming() {
        let conn = conn?;
        let (config, cache) = (config.clone(), cache.clone());
        std::thread::spawn(move || {
            let Ok(reader) = conn.try_clone() else { return };
            let session = Arc::new(Session::new(interactive_engine(config, cache)));
            let _ = serve_stream(session, BufReader::new(reader), Box::new(conn));
        });
    }
    Ok(())
}
