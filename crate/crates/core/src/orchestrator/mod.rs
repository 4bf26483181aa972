//! The continuous-processing engine.
//!
//! Text snapshots come in through [`Engine::submit_text`]. After the
//! debounce interval the latest one is parsed and resolved; a clean snapshot
//! is fingerprinted and its units are either served from the cache or queued
//! by priority for a pool of workers. Everything observable is reported as
//! events in one totally ordered log.
//!
//! Time is whatever the injected [`Clock`] says, and the debounce timer only
//! fires from [`Engine::advance_to`] (or [`Engine::tick`]), so with a
//! virtual clock and [`Execution::Inline`] the whole engine is deterministic.

pub mod events;
pub mod margins;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::cache::{CacheEntry, Priority, ResultCache, DEFAULT_CAPACITY};
use crate::clock::Clock;
use crate::fingerprint::{fingerprint, EntityFingerprint};
use crate::lang::{analyze, lex_scan, Diagnostic, EntityId, HoverInfo, Program, Token};
use crate::prover::anchor::SpanIndex;
use crate::prover::{
    extract_units, Binding, BoundedProver, Bounds, ProveCtx, ProveOutcome, Prover, ScriptedProver, Trace,
    TraceState, UnitId, VerificationError, VerificationUnit, Verdict, DEFAULT_ERROR_CAP, DEFAULT_TIMEOUT_MS,
    PROVER_STACK_BYTES,
};

pub use events::{Event, EventLog, SeqEvent, EVENT_CAPACITY};
pub use margins::{MarginState, Margins};

#[derive(Clone, Debug, PartialEq)]
pub enum ProverKind {
    Bounded,
    Scripted(ScriptedProver),
}

impl ProverKind {
    pub fn build(&self) -> Arc<dyn Prover> {
        match self {
            ProverKind::Bounded => Arc::new(BoundedProver),
            ProverKind::Scripted(s) => Arc::new(s.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub debounce_ms: u64,
    pub max_workers: usize,
    pub timeout_ms: u64,
    pub bounds: Bounds,
    pub cache_capacity: usize,
    pub prover_kind: ProverKind,
    pub error_cap: usize,
    /// With the cache off every unit is proved and nothing is stored.
    pub use_cache: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            debounce_ms: 500,
            max_workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            bounds: Bounds::default(),
            cache_capacity: DEFAULT_CAPACITY,
            prover_kind: ProverKind::Bounded,
            error_cap: DEFAULT_ERROR_CAP,
            use_cache: true,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_workers == 0 {
            return Err("maxWorkers must be at least 1".into());
        }
        if self.error_cap == 0 {
            return Err("error cap must be at least 1".into());
        }
        self.bounds.validate()
    }
}

/// How many workers a queue of `pending` units warrants.
pub fn pool_size(max_workers: usize, pending: usize) -> usize {
    max_workers.min(pending)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    /// Units run only when the caller invokes [`Engine::step`] or
    /// [`Engine::run_until_idle`], one at a time, on the calling side.
    Inline,
    /// Units run on a pool of background threads sized by [`pool_size`].
    Threaded,
}

/// A parsed, resolved, error-free snapshot.
#[derive(Debug)]
pub struct ResolvedSnapshot {
    pub id: u64,
    pub text: Arc<str>,
    pub program: Arc<Program>,
    pub fingerprints: BTreeMap<EntityId, EntityFingerprint>,
    pub spans: SpanIndex,
}

impl ResolvedSnapshot {
    pub fn new(id: u64, text: Arc<str>, program: Program) -> Self {
        let fingerprints = fingerprint(&program);
        let spans = SpanIndex::new(&program);
        ResolvedSnapshot {
            id,
            text,
            program: Arc::new(program),
            fingerprints,
            spans,
        }
    }
}

struct Job {
    snapshot: Arc<ResolvedSnapshot>,
    unit: VerificationUnit,
    priority: Priority,
    order: usize,
    fp: EntityFingerprint,
}

impl Job {
    fn key(&self) -> (Priority, Reverse<usize>) {
        (self.priority, Reverse(self.order))
    }
}

impl PartialEq for Job {
    fn eq(&self, o: &Self) -> bool {
        self.key() == o.key()
    }
}
impl Eq for Job {}
impl PartialOrd for Job {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Job {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.key().cmp(&o.key())
    }
}

struct Run {
    snapshot: Arc<ResolvedSnapshot>,
    queue: BinaryHeap<Job>,
    in_flight: usize,
    started: HashSet<UnitId>,
}

struct State {
    next_snapshot: u64,
    latest: Option<(u64, Arc<str>)>,
    deadline: Option<u64>,
    margins: Margins,
    tokens: Arc<Vec<Token>>,
    current: Option<Arc<ResolvedSnapshot>>,
    run: Option<Run>,
    pending: Option<Arc<ResolvedSnapshot>>,
    active_workers: usize,
}

struct Inner {
    config: Config,
    clock: Arc<dyn Clock>,
    prover: Arc<dyn Prover>,
    cache: Arc<ResultCache>,
    events: EventLog,
    execution: Execution,
    state: Mutex<State>,
    idle: Condvar,
    shutdown: AtomicBool,
    parses: AtomicU64,
    invocations: AtomicU64,
}

/// Handle to a running engine. Dropping it cancels outstanding prover work.
pub struct Engine {
    inner: Arc<Inner>,
}

impl Engine {
    pub fn new(config: Config, clock: Arc<dyn Clock>, cache: Arc<ResultCache>, execution: Execution) -> Self {
        let prover = config.prover_kind.build();
        Self::with_prover(config, clock, cache, prover, execution)
    }

    pub fn with_prover(
        config: Config,
        clock: Arc<dyn Clock>,
        cache: Arc<ResultCache>,
        prover: Arc<dyn Prover>,
        execution: Execution,
    ) -> Self {
        Engine {
            inner: Arc::new(Inner {
                config,
                clock,
                prover,
                cache,
                events: EventLog::default(),
                execution,
                state: Mutex::new(State {
                    next_snapshot: 0,
                    latest: None,
                    deadline: None,
                    margins: Margins::default(),
                    tokens: Arc::new(Vec::new()),
                    current: None,
                    run: None,
                    pending: None,
                    active_workers: 0,
                }),
                idle: Condvar::new(),
                shutdown: AtomicBool::new(false),
                parses: AtomicU64::new(0),
                invocations: AtomicU64::new(0),
            }),
        }
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    pub fn cache(&self) -> &Arc<ResultCache> {
        &self.inner.cache
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.inner.clock
    }

    pub fn now_ms(&self) -> u64 {
        self.inner.clock.now_ms()
    }

    /// Records a new buffer snapshot and re-arms the debounce timer.
    pub fn submit_text(&self, text: &str, edited_lines: impl IntoIterator<Item = u32>, at_ms: u64) -> u64 {
        self.advance_to(at_ms);
        let inner = &self.inner;
        let mut st = inner.lock();
        let id = st.next_snapshot;
        st.next_snapshot += 1;
        st.latest = Some((id, Arc::from(text)));
        st.tokens = Arc::new(lex_scan(text));
        st.margins.edit(edited_lines);
        st.deadline = Some(at_ms.max(inner.clock.now_ms()) + inner.config.debounce_ms);
        inner.emit(Event::SnapshotAccepted { snapshot_id: id });
        inner.emit_margins(&st);
        id
    }

    /// Moves time to `t`, firing the debounce timer if it expires by then.
    pub fn advance_to(&self, t: u64) {
        let inner = &self.inner;
        let mut st = inner.lock();
        if let Some(d) = st.deadline.filter(|d| *d <= t) {
            inner.clock.advance_to(d);
            st.deadline = None;
            st = Inner::on_debounce_expired(inner, st);
        }
        drop(st);
        inner.clock.advance_to(t);
    }

    /// Fires the debounce timer if it has expired on the engine clock.
    pub fn tick(&self) {
        let now = self.now_ms();
        let fire = self.inner.lock().deadline.is_some_and(|d| d <= now);
        if fire {
            self.advance_to(now);
        }
    }

    pub fn debounce_deadline(&self) -> Option<u64> {
        self.inner.lock().deadline
    }

    /// Skips ahead to the pending debounce expiry, if any.
    pub fn flush(&self) {
        if let Some(d) = self.debounce_deadline() {
            self.advance_to(d);
        }
    }

    /// Runs one queued unit on the calling side. Returns false if nothing
    /// was queued. Only meaningful in inline mode.
    pub fn step(&self) -> bool {
        if self.inner.execution != Execution::Inline {
            return false;
        }
        let Some(job) = Inner::take_job(&self.inner) else {
            return false;
        };
        let inner = self.inner.clone();
        let outcome = std::thread::scope(|s| {
            std::thread::Builder::new()
                .stack_size(PROVER_STACK_BYTES)
                .spawn_scoped(s, || inner.prove(&job))
                .expect("spawn prover thread")
                .join()
                .unwrap_or_else(|e| std::panic::resume_unwind(e))
        });
        Inner::complete(&self.inner, job, outcome);
        true
    }

    /// Waits until no verification is running or pending. In inline mode
    /// this drives the queue itself.
    pub fn run_until_idle(&self) {
        match self.inner.execution {
            Execution::Inline => while self.step() {},
            Execution::Threaded => {
                let mut st = self.inner.lock();
                while st.run.is_some() || st.pending.is_some() || st.active_workers > 0 {
                    st = self.inner.idle.wait(st).unwrap_or_else(|e| e.into_inner());
                }
            }
        }
    }

    /// Like `run_until_idle` for threaded mode, but gives up after
    /// `timeout`. Returns whether the engine is idle.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let st = self.inner.lock();
        let (st, _) = self
            .inner
            .idle
            .wait_timeout_while(st, timeout, |st| {
                st.run.is_some() || st.pending.is_some() || st.active_workers > 0
            })
            .unwrap_or_else(|e| e.into_inner());
        st.run.is_none() && st.pending.is_none() && st.active_workers == 0
    }

    pub fn is_idle(&self) -> bool {
        let st = self.inner.lock();
        st.deadline.is_none() && st.run.is_none() && st.pending.is_none()
    }

    pub fn poll_events(&self, since: u64) -> Vec<SeqEvent> {
        self.inner.events.poll(since)
    }

    pub fn wait_events(&self, since: u64, timeout: Duration) -> Vec<SeqEvent> {
        self.inner.events.wait(since, timeout)
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.events.last_seq()
    }

    pub fn margin_states(&self) -> BTreeMap<u32, MarginState> {
        self.inner.lock().margins.snapshot()
    }

    pub fn margin_state(&self, line: u32) -> MarginState {
        self.inner.lock().margins.state(line)
    }

    /// Token classes of the latest submitted text.
    pub fn tokens(&self) -> Arc<Vec<Token>> {
        self.inner.lock().tokens.clone()
    }

    /// The latest error-free resolved snapshot.
    pub fn current_snapshot(&self) -> Option<Arc<ResolvedSnapshot>> {
        self.inner.lock().current.clone()
    }

    pub fn hover(&self, line: u32, col: u32) -> Option<HoverInfo> {
        self.current_snapshot()?.program.hover_info(line, col).cloned()
    }

    /// Parses performed so far.
    pub fn parse_count(&self) -> u64 {
        self.inner.parses.load(Ordering::SeqCst)
    }

    /// Units handed to the prover so far.
    pub fn prover_invocations(&self) -> u64 {
        self.inner.invocations.load(Ordering::SeqCst)
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
    }
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn emit(&self, e: Event) {
        self.events.push(self.clock.now_ms(), e);
    }

    fn emit_margins(&self, st: &State) {
        self.emit(Event::MarginsChanged {
            margins: st.margins.snapshot(),
        });
    }

    fn on_debounce_expired<'a>(this: &'a Arc<Inner>, mut st: MutexGuard<'a, State>) -> MutexGuard<'a, State> {
        let Some((id, text)) = st.latest.clone() else {
            return st;
        };
        this.parses.fetch_add(1, Ordering::SeqCst);
        let t0 = this.clock.now_ms();
        let program = analyze(&text);
        let resolution_ms = this.clock.now_ms().saturating_sub(t0);
        let diagnostics: Vec<Diagnostic> = program.diagnostics.clone();
        let clean = !program.has_errors();
        this.emit(Event::ResolutionDiagnostics {
            snapshot_id: id,
            diagnostics,
            resolution_ms,
        });
        if !clean {
            return st;
        }
        let snap = Arc::new(ResolvedSnapshot::new(id, text, program));
        st.current = Some(snap.clone());
        if st.run.is_some() {
            Self::abandon_stale(this, &mut st, &snap);
            st.pending = Some(snap);
            if st.run.as_ref().is_some_and(|r| r.queue.is_empty() && r.in_flight == 0) {
                st = Self::finish_run(this, st);
            }
            st
        } else {
            Self::start_verification(this, st, snap)
        }
    }

    /// Drops queued units whose results would be stale for `newer`.
    fn abandon_stale(this: &Arc<Inner>, st: &mut State, newer: &ResolvedSnapshot) {
        let Some(run) = st.run.as_mut() else { return };
        let jobs = std::mem::take(&mut run.queue).into_sorted_vec();
        let mut keep = BinaryHeap::new();
        let mut dropped = Vec::new();
        for j in jobs.into_iter().rev() {
            let same = newer
                .fingerprints
                .get(&j.unit.id.entity)
                .is_some_and(|f| f.dependency_checksum == j.fp.dependency_checksum);
            if same {
                keep.push(j);
            } else {
                dropped.push(j);
            }
        }
        run.queue = keep;
        for j in dropped {
            this.emit(Event::UnitAbandoned {
                snapshot_id: j.snapshot.id,
                unit: j.unit.id.clone(),
                priority: j.priority,
                entity_checksum: j.fp.entity_checksum,
                dependency_checksum: j.fp.dependency_checksum,
            });
        }
    }

    fn start_verification<'a>(
        this: &'a Arc<Inner>,
        mut st: MutexGuard<'a, State>,
        snap: Arc<ResolvedSnapshot>,
    ) -> MutexGuard<'a, State> {
        st.margins.start();
        this.emit_margins(&st);
        let mut run = Run {
            snapshot: snap.clone(),
            queue: BinaryHeap::new(),
            in_flight: 0,
            started: HashSet::new(),
        };
        for (order, unit) in extract_units(&snap.program).into_iter().enumerate() {
            let fp = snap.fingerprints[&unit.id.entity];
            let mut priority = if this.config.use_cache {
                this.cache
                    .priority_of(&unit.id.entity, fp.entity_checksum, fp.dependency_checksum)
            } else {
                Priority::High
            };
            if priority == Priority::Highest {
                let hit = this
                    .cache
                    .lookup(&unit.id.entity, fp.dependency_checksum)
                    .and_then(|v| snap.spans.resolve_verdict(&v));
                match hit {
                    Some(verdict) => {
                        this.emit(Event::UnitCompleted {
                            snapshot_id: snap.id,
                            unit: unit.id.clone(),
                            priority,
                            verdict,
                            from_cache: true,
                            duration_ms: 0,
                            entity_checksum: fp.entity_checksum,
                            dependency_checksum: fp.dependency_checksum,
                        });
                        continue;
                    }
                    // The stored locations no longer fit; treat as unknown.
                    None => priority = Priority::High,
                }
            }
            this.emit(Event::UnitScheduled {
                snapshot_id: snap.id,
                unit: unit.id.clone(),
                priority,
            });
            run.queue.push(Job {
                snapshot: snap.clone(),
                unit,
                priority,
                order,
                fp,
            });
        }
        let empty = run.queue.is_empty();
        st.run = Some(run);
        if empty {
            return Self::finish_run(this, st);
        }
        Self::spawn_workers(this, &mut st);
        st
    }

    fn finish_run<'a>(this: &'a Arc<Inner>, mut st: MutexGuard<'a, State>) -> MutexGuard<'a, State> {
        let Some(run) = st.run.take() else { return st };
        let done = run.snapshot.id;
        this.emit(Event::SnapshotVerified { snapshot_id: done });
        st.margins.finish();
        this.emit_margins(&st);
        match st.pending.take() {
            Some(next) if next.id != done => Self::start_verification(this, st, next),
            _ => {
                this.idle.notify_all();
                st
            }
        }
    }

    fn spawn_workers(this: &Arc<Inner>, st: &mut State) {
        if this.execution != Execution::Threaded {
            return;
        }
        let queued = st.run.as_ref().map_or(0, |r| r.queue.len());
        let target = pool_size(this.config.max_workers, queued + st.run.as_ref().map_or(0, |r| r.in_flight));
        while st.active_workers < target {
            st.active_workers += 1;
            let inner = this.clone();
            let spawned = std::thread::Builder::new()
                .name("verifier".into())
                .stack_size(PROVER_STACK_BYTES)
                .spawn(move || Inner::worker(inner));
            if spawned.is_err() {
                st.active_workers -= 1;
                break;
            }
        }
    }

    fn worker(this: Arc<Inner>) {
        while let Some(job) = Self::take_job(&this) {
            let outcome = this.prove(&job);
            Self::complete(&this, job, outcome);
        }
    }

    /// Pops the best queued unit. A worker that finds the queue empty
    /// retires, which is how the pool shrinks.
    fn take_job(this: &Arc<Inner>) -> Option<Job> {
        let mut st = this.lock();
        let job = if this.shutdown.load(Ordering::SeqCst) {
            None
        } else {
            st.run.as_mut().and_then(|r| {
                let j = r.queue.pop()?;
                r.in_flight += 1;
                Some(j)
            })
        };
        match &job {
            Some(j) => {
                let fresh = st.run.as_mut().is_some_and(|r| r.started.insert(j.unit.id.clone()));
                debug_assert!(fresh, "unit proved twice in one run");
                this.invocations.fetch_add(1, Ordering::SeqCst);
                this.emit(Event::UnitStarted {
                    snapshot_id: j.snapshot.id,
                    unit: j.unit.id.clone(),
                    priority: j.priority,
                });
            }
            None if this.execution == Execution::Threaded => {
                st.active_workers -= 1;
                this.idle.notify_all();
            }
            None => {}
        }
        job
    }

    fn prove(&self, job: &Job) -> (ProveOutcome, u64) {
        let ctx = ProveCtx {
            bounds: self.config.bounds,
            timeout_ms: job.unit.timeout_ms(self.config.timeout_ms),
            error_cap: self.config.error_cap,
            cancel: &self.shutdown,
            clock: &*self.clock,
        };
        let t0 = self.clock.now_ms();
        let outcome = catch_unwind(AssertUnwindSafe(|| self.prover.verify(&job.unit, &ctx)))
            .unwrap_or_else(|p| ProveOutcome::Done(internal_failure(&job.unit, panic_message(&p))));
        (outcome, self.clock.now_ms().saturating_sub(t0))
    }

    fn complete(this: &Arc<Inner>, job: Job, (outcome, duration_ms): (ProveOutcome, u64)) {
        let mut st = this.lock();
        if let Some(r) = st.run.as_mut() {
            r.in_flight -= 1;
        }
        if let ProveOutcome::Done(verdict) = outcome {
            if this.config.use_cache {
                if let Some(anchored) = job.snapshot.spans.anchor_verdict(&verdict) {
                    this.cache.store(CacheEntry {
                        entity_id: job.unit.id.entity.clone(),
                        entity_checksum: job.fp.entity_checksum,
                        dependency_checksum: job.fp.dependency_checksum,
                        verdict: anchored,
                        verified_at_snapshot: job.snapshot.id,
                        duration_ms,
                    });
                }
            }
            this.emit(Event::UnitCompleted {
                snapshot_id: job.snapshot.id,
                unit: job.unit.id,
                priority: job.priority,
                verdict,
                from_cache: false,
                duration_ms,
                entity_checksum: job.fp.entity_checksum,
                dependency_checksum: job.fp.dependency_checksum,
            });
        }
        let finished = st.run.as_ref().is_some_and(|r| r.queue.is_empty() && r.in_flight == 0);
        if finished && !this.shutdown.load(Ordering::SeqCst) {
            let mut st = Self::finish_run(this, st);
            Self::spawn_workers(this, &mut st);
        }
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn internal_failure(unit: &VerificationUnit, why: String) -> Verdict {
    let span = unit.entity().span;
    Verdict::Failed {
        errors: vec![VerificationError {
            message: format!("internal prover error: {why}"),
            error_span: span,
            related_spans: vec![],
            trace: Trace {
                states: vec![TraceState {
                    location: span,
                    bindings: Vec::<Binding>::new(),
                }],
                choices: vec![],
            },
        }],
    }
}
