//! Batch replay of recorded edit sessions.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffTag};

use crate::cache::{Priority, ResultCache};
use crate::clock::{Clock, HybridClock, VirtualClock};
use crate::fingerprint::Checksum;
use crate::lang::{Diagnostic, Span};
use crate::orchestrator::{Config, Engine, Event, Execution, ProverKind};
use crate::prover::{Bounds, Obligation, ScriptedProver, UnitId, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionScript {
    #[serde(default)]
    pub file: String,
    pub snapshots: Vec<ScriptSnapshot>,
    #[serde(default)]
    pub config: ConfigOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScriptSnapshot {
    pub at_ms: u64,
    /// Inline source text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Source file, relative to the script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConfigOverrides {
    pub debounce_ms: Option<u64>,
    pub max_workers: Option<usize>,
    pub timeout_ms: Option<u64>,
    pub bounds: Option<Bounds>,
    pub cache_capacity: Option<usize>,
    pub use_cache: Option<bool>,
    pub prover: Option<ProverSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ProverSpec {
    Bounded,
    Scripted(ScriptedProver),
}

impl ConfigOverrides {
    pub fn apply(&self, c: &mut Config) {
        if let Some(v) = self.debounce_ms {
            c.debounce_ms = v;
        }
        if let Some(v) = self.max_workers {
            c.max_workers = v;
        }
        if let Some(v) = self.timeout_ms {
            c.timeout_ms = v;
        }
        if let Some(v) = self.bounds {
            c.bounds = v;
        }
        if let Some(v) = self.cache_capacity {
            c.cache_capacity = v;
        }
        if let Some(v) = self.use_cache {
            c.use_cache = v;
        }
        match &self.prover {
            Some(ProverSpec::Bounded) => c.prover_kind = ProverKind::Bounded,
            Some(ProverSpec::Scripted(s)) => c.prover_kind = ProverKind::Scripted(s.clone()),
            None => {}
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid script: {0}")]
    Invalid(String),
}

impl SessionScript {
    pub fn from_json(json: &str) -> Result<Self, ScriptError> {
        let s: SessionScript = serde_json::from_str(json).map_err(|source| ScriptError::Json {
            path: PathBuf::from("<script>"),
            source,
        })?;
        s.check()?;
        Ok(s)
    }

    /// Reads a script and inlines any `textFile` snapshots.
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let json = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s: SessionScript = serde_json::from_str(&json).map_err(|source| ScriptError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for snap in &mut s.snapshots {
            if let (None, Some(f)) = (&snap.text, &snap.text_file) {
                let p = base.join(f);
                let text = std::fs::read_to_string(&p).map_err(|source| ScriptError::Io { path: p, source })?;
                snap.text = Some(text);
            }
        }
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ScriptError> {
        for (i, s) in self.snapshots.iter().enumerate() {
            if s.text.is_none() {
                return Err(ScriptError::Invalid(format!("snapshot {i} has no text")));
            }
            if i > 0 && s.at_ms <= self.snapshots[i - 1].at_ms {
                return Err(ScriptError::Invalid(format!("snapshot {i}: atMs must strictly increase")));
            }
        }
        Ok(())
    }

    /// A script whose snapshots are `gap_ms` apart.
    pub fn from_texts<S: Into<String>>(file: &str, texts: impl IntoIterator<Item = S>, gap_ms: u64) -> Self {
        SessionScript {
            file: file.into(),
            snapshots: texts
                .into_iter()
                .enumerate()
                .map(|(i, t)| ScriptSnapshot {
                    at_ms: i as u64 * gap_ms,
                    text: Some(t.into()),
                    text_file: None,
                })
                .collect(),
            config: ConfigOverrides::default(),
        }
    }
}

/// Lines of `new` that are not part of a longest common subsequence with
/// `old`, i.e. the changed or inserted lines (0-based).
pub fn diff_lines(old: &str, new: &str) -> BTreeSet<u32> {
    let a: Vec<&str> = old.lines().collect();
    let b: Vec<&str> = new.lines().collect();
    capture_diff_slices(Algorithm::Lcs, &a, &b)
        .iter()
        .filter(|op| op.tag() != DiffTag::Equal)
        .flat_map(|op| op.new_range())
        .map(|i| i as u32)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Proved,
    CacheHit,
    /// Abandoned because a newer snapshot made it stale.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorSummary {
    pub message: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UnitReport {
    /// "Kind(Name)".
    pub entity_id: String,
    pub obligation: Obligation,
    pub priority: Priority,
    pub action: Action,
    /// verified / failed / timeout; absent for skipped units.
    pub verdict: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<ErrorSummary>,
    pub duration_ms: u64,
    pub entity_checksum: Checksum,
    pub dependency_checksum: Checksum,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SnapshotReport {
    pub snapshot_id: u64,
    pub at_ms: u64,
    pub resolution_ms: u64,
    pub diagnostics: Vec<Diagnostic>,
    /// False if resolution failed or a newer snapshot superseded this one
    /// before it was verified.
    pub verified: bool,
    pub prover_invocations: u64,
    pub cache_hits: u64,
    pub units: Vec<UnitReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Totals {
    pub wall_ms: u64,
    pub prover_invocations: u64,
    pub cache_hits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub file: String,
    pub snapshots: Vec<SnapshotReport>,
    pub totals: Totals,
}

impl Report {
    pub fn has_resolution_errors(&self) -> bool {
        self.snapshots.iter().any(|s| !s.diagnostics.is_empty())
    }

    pub fn invocations_per_snapshot(&self) -> Vec<u64> {
        self.snapshots.iter().map(|s| s.prover_invocations).collect()
    }

    pub fn hits_per_snapshot(&self) -> Vec<u64> {
        self.snapshots.iter().map(|s| s.cache_hits).collect()
    }

    /// Wall time with the final timing field zeroed; what remains is
    /// deterministic under a scripted prover and one worker.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        r.totals.wall_ms = 0;
        r
    }
}

#[derive(Clone)]
pub struct RunOptions {
    /// Real sleeps and real wall time; otherwise everything runs on a
    /// virtual clock.
    pub real_time: bool,
    pub cache: Option<Arc<ResultCache>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            real_time: false,
            cache: None,
        }
    }
}

/// Replays `script` through a fresh engine. Snapshots are submitted at their
/// `atMs`; between submissions the engine fires debounce timers and, with a
/// single worker, runs queued units until the clock reaches the next
/// submission, so overlapping edits exercise latest-wins scheduling.
pub fn run_session(script: &SessionScript, config: &Config, opts: &RunOptions) -> Report {
    let clock: Arc<dyn Clock> = if opts.real_time {
        Arc::new(HybridClock::new())
    } else {
        Arc::new(VirtualClock::new())
    };
    let cache = opts
        .cache
        .clone()
        .unwrap_or_else(|| Arc::new(ResultCache::new(config.cache_capacity)));
    let execution = if config.max_workers <= 1 {
        Execution::Inline
    } else {
        Execution::Threaded
    };
    let engine = Engine::new(config.clone(), clock.clone(), cache, execution);
    let wall = Instant::now();
    let start_ms = clock.now_ms();
    let mut prev = String::new();
    let mut at = HashMap::new();
    for snap in &script.snapshots {
        let text = snap.text.as_deref().unwrap_or_default();
        drive_until(&engine, execution, start_ms + snap.at_ms);
        let id = engine.submit_text(text, diff_lines(&prev, text), start_ms + snap.at_ms);
        at.insert(id, snap.at_ms);
        prev = text.to_string();
    }
    while !engine.is_idle() {
        engine.flush();
        engine.run_until_idle();
    }
    let wall_ms = if opts.real_time {
        wall.elapsed().as_millis() as u64
    } else {
        clock.now_ms() - start_ms
    };
    build_report(&script.file, &engine, &at, wall_ms)
}

fn drive_until(engine: &Engine, execution: Execution, t: u64) {
    loop {
        let now = engine.now_ms();
        match engine.debounce_deadline() {
            Some(d) if d <= now => engine.advance_to(now),
            _ if now < t && execution == Execution::Inline && engine.step() => {}
            Some(d) if d <= t => engine.advance_to(d),
            _ => break,
        }
    }
    engine.advance_to(t);
}

fn build_report(file: &str, engine: &Engine, at: &HashMap<u64, u64>, wall_ms: u64) -> Report {
    let mut snaps: Vec<SnapshotReport> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut slot: HashMap<(u64, UnitId), usize> = HashMap::new();
    for ev in engine.poll_events(0) {
        let Some(id) = ev.event.snapshot_id() else { continue };
        let i = *index.entry(id).or_insert_with(|| {
            snaps.push(SnapshotReport {
                snapshot_id: id,
                at_ms: at.get(&id).copied().unwrap_or(0),
                resolution_ms: 0,
                diagnostics: vec![],
                verified: false,
                prover_invocations: 0,
                cache_hits: 0,
                units: vec![],
            });
            snaps.len() - 1
        });
        let s = &mut snaps[i];
        let unit_row = |unit: &UnitId, priority, action, ec, dc| UnitReport {
            entity_id: unit.entity.to_string(),
            obligation: unit.obligation,
            priority,
            action,
            verdict: None,
            errors: vec![],
            duration_ms: 0,
            entity_checksum: ec,
            dependency_checksum: dc,
        };
        match ev.event {
            Event::ResolutionDiagnostics {
                diagnostics,
                resolution_ms,
                ..
            } => {
                s.diagnostics = diagnostics;
                s.resolution_ms = resolution_ms;
            }
            Event::UnitScheduled { unit, priority, .. } => {
                slot.insert((id, unit.clone()), s.units.len());
                s.units
                    .push(unit_row(&unit, priority, Action::Skipped, Checksum(0), Checksum(0)));
            }
            Event::UnitAbandoned {
                unit,
                entity_checksum,
                dependency_checksum,
                ..
            } => {
                if let Some(&k) = slot.get(&(id, unit)) {
                    s.units[k].entity_checksum = entity_checksum;
                    s.units[k].dependency_checksum = dependency_checksum;
                }
            }
            Event::UnitCompleted {
                unit,
                priority,
                verdict,
                from_cache,
                duration_ms,
                entity_checksum,
                dependency_checksum,
                ..
            } => {
                let action = if from_cache { Action::CacheHit } else { Action::Proved };
                if from_cache {
                    s.cache_hits += 1;
                } else {
                    s.prover_invocations += 1;
                }
                let k = match slot.get(&(id, unit.clone())) {
                    Some(&k) => k,
                    None => {
                        s.units.push(unit_row(&unit, priority, action, entity_checksum, dependency_checksum));
                        s.units.len() - 1
                    }
                };
                let row = &mut s.units[k];
                row.action = action;
                row.verdict = Some(verdict.label().to_string());
                row.errors = summarize(&verdict);
                row.duration_ms = duration_ms;
                row.entity_checksum = entity_checksum;
                row.dependency_checksum = dependency_checksum;
            }
            Event::SnapshotVerified { .. } => s.verified = true,
            _ => {}
        }
    }
    let totals = Totals {
        wall_ms,
        prover_invocations: snaps.iter().map(|s| s.prover_invocations).sum(),
        cache_hits: snaps.iter().map(|s| s.cache_hits).sum(),
    };
    Report {
        file: file.to_string(),
        snapshots: snaps,
        totals,
    }
}

fn summarize(v: &Verdict) -> Vec<ErrorSummary> {
    v.errors()
        .iter()
        .map(|e| ErrorSummary {
            message: e.message.clone(),
            span: e.error_span,
        })
        .collect()
}
