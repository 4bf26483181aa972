//! The totally ordered event stream consumed by the CLI and the service.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Serialize;

use super::margins::MarginState;
use crate::cache::Priority;
use crate::fingerprint::Checksum;
use crate::lang::Diagnostic;
use crate::prover::{UnitId, Verdict};

pub const EVENT_CAPACITY: usize = 65_536;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Event {
    #[serde(rename_all = "camelCase")]
    SnapshotAccepted { snapshot_id: u64 },
    #[serde(rename_all = "camelCase")]
    ResolutionDiagnostics {
        snapshot_id: u64,
        diagnostics: Vec<Diagnostic>,
        resolution_ms: u64,
    },
    #[serde(rename_all = "camelCase")]
    UnitScheduled {
        snapshot_id: u64,
        unit: UnitId,
        priority: Priority,
    },
    /// A worker handed the unit to the prover.
    #[serde(rename_all = "camelCase")]
    UnitStarted {
        snapshot_id: u64,
        unit: UnitId,
        priority: Priority,
    },
    #[serde(rename_all = "camelCase")]
    UnitCompleted {
        snapshot_id: u64,
        unit: UnitId,
        priority: Priority,
        verdict: Verdict,
        from_cache: bool,
        duration_ms: u64,
        entity_checksum: Checksum,
        dependency_checksum: Checksum,
    },
    /// A queued unit dropped because a newer snapshot made its result
    /// stale before it started.
    #[serde(rename_all = "camelCase")]
    UnitAbandoned {
        snapshot_id: u64,
        unit: UnitId,
        priority: Priority,
        entity_checksum: Checksum,
        dependency_checksum: Checksum,
    },
    #[serde(rename_all = "camelCase")]
    SnapshotVerified { snapshot_id: u64 },
    /// Lines not listed are idle.
    MarginsChanged { margins: BTreeMap<u32, MarginState> },
    /// The requested range was overwritten; refetch full state.
    Resync,
}

impl Event {
    pub fn snapshot_id(&self) -> Option<u64> {
        match self {
            Event::SnapshotAccepted { snapshot_id }
            | Event::ResolutionDiagnostics { snapshot_id, .. }
            | Event::UnitScheduled { snapshot_id, .. }
            | Event::UnitStarted { snapshot_id, .. }
            | Event::UnitCompleted { snapshot_id, .. }
            | Event::UnitAbandoned { snapshot_id, .. }
            | Event::SnapshotVerified { snapshot_id } => Some(*snapshot_id),
            Event::MarginsChanged { .. } | Event::Resync => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SeqEvent {
    pub seq: u64,
    pub at_ms: u64,
    pub event: Event,
}

/// Bounded log. Sequence numbers start at 1.
pub struct EventLog {
    inner: Mutex<LogInner>,
    cond: Condvar,
    capacity: usize,
}

struct LogInner {
    events: VecDeque<SeqEvent>,
    last_seq: u64,
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new(EVENT_CAPACITY)
    }
}

impl EventLog {
    pub fn new(capacity: usize) -> Self {
        EventLog {
            inner: Mutex::new(LogInner {
                events: VecDeque::new(),
                last_seq: 0,
            }),
            cond: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&self, at_ms: u64, event: Event) -> u64 {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        g.last_seq += 1;
        let seq = g.last_seq;
        if g.events.len() == self.capacity {
            g.events.pop_front();
        }
        g.events.push_back(SeqEvent { seq, at_ms, event });
        self.cond.notify_all();
        seq
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).last_seq
    }

    /// Events with sequence number greater than `since`. If some of them
    /// were already overwritten, a single `Resync` carrying the latest
    /// sequence number is returned instead.
    pub fn poll(&self, since: u64) -> Vec<SeqEvent> {
        let g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        Self::collect(&g, since)
    }

    fn collect(g: &LogInner, since: u64) -> Vec<SeqEvent> {
        let first = g.events.front().map(|e| e.seq).unwrap_or(g.last_seq + 1);
        if since + 1 < first {
            return vec![SeqEvent {
                seq: g.last_seq,
                at_ms: g.events.back().map(|e| e.at_ms).unwrap_or(0),
                event: Event::Resync,
            }];
        }
        let skip = (since + 1 - first) as usize;
        g.events.iter().skip(skip).cloned().collect()
    }

    /// Like `poll`, but blocks up to `timeout` for at least one event.
    pub fn wait(&self, since: u64, timeout: Duration) -> Vec<SeqEvent> {
        let g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let (g, _) = self
            .cond
            .wait_timeout_while(g, timeout, |g| g.last_seq <= since)
            .unwrap_or_else(|e| e.into_inner());
        Self::collect(&g, since)
    }
}
