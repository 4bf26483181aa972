//! Modular bounded verification.
//!
//! Each entity yields one verification unit. Units are checked by
//! exhaustive execution over bounded inputs; calls to methods are replaced
//! by their specifications, so a unit's verdict depends only on the
//! entities it depends on — which is what makes checksum caching sound.

pub mod anchor;
mod interp;
pub mod scripted;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::lang::ast::int_attribute;
use crate::lang::{EntityId, EntityKind, Program, Span};

pub use interp::{bounded_inputs, execute_concrete, precondition_holds, Outcome};
pub use scripted::{ScriptedProver, ScriptedVerdict, UnitScript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bounds {
    pub int_low: i64,
    pub int_high: i64,
    pub max_array_len: usize,
    pub max_steps: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            int_low: -3,
            int_high: 3,
            max_array_len: 3,
            max_steps: 10_000,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<(), String> {
        if self.int_low > self.int_high {
            return Err(format!("empty int range {}..{}", self.int_low, self.int_high));
        }
        if self.max_steps == 0 {
            return Err("maxSteps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Obligation {
    FunctionWF,
    MethodSpecWF,
    MethodBody,
}

impl Obligation {
    pub fn of(kind: EntityKind) -> Self {
        match kind {
            EntityKind::FunctionDef => Obligation::FunctionWF,
            EntityKind::MethodSpec => Obligation::MethodSpecWF,
            EntityKind::MethodBody => Obligation::MethodBody,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Obligation::FunctionWF => "FunctionWF",
            Obligation::MethodSpecWF => "MethodSpecWF",
            Obligation::MethodBody => "MethodBody",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitId {
    pub entity: EntityId,
    pub obligation: Obligation,
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.obligation.as_str(), self.entity.name)
    }
}

/// One checkable obligation plus the program it lives in.
#[derive(Clone, Debug)]
pub struct VerificationUnit {
    pub id: UnitId,
    pub program: Arc<Program>,
    /// Index into `program.entities`.
    pub entity_index: usize,
}

impl VerificationUnit {
    pub fn entity(&self) -> &crate::lang::Entity {
        &self.program.entities[self.entity_index]
    }

    /// The unit's time limit: `{:timeLimit n}` (seconds) on the declaration
    /// overrides the default.
    pub fn timeout_ms(&self, default_ms: u64) -> u64 {
        self.program
            .decl(&self.id.entity.name)
            .and_then(|d| int_attribute(d.attrs(), "timeLimit"))
            .filter(|n| *n > 0)
            .map(|n| n as u64 * 1000)
            .unwrap_or(default_ms)
    }
}

/// One unit per entity, in source order. The program must be error free.
pub fn extract_units(program: &Arc<Program>) -> Vec<VerificationUnit> {
    program
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| VerificationUnit {
            id: UnitId {
                entity: e.id.clone(),
                obligation: Obligation::of(e.id.kind),
            },
            program: program.clone(),
            entity_index: i,
        })
        .collect()
}

/// A fully concrete runtime value as shown to users.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Array(Vec<i64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Array(xs) => {
                f.write_str("[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub name: String,
    pub value: Value,
}

/// A program state on the failing path. `L` is the location type: a
/// source span, or an anchor while stored in the cache.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceState<L = Span> {
    pub location: L,
    pub bindings: Vec<Binding>,
}

impl TraceState {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings
            .iter()
            .find(|b| b.name == name)
            .map(|b| &b.value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace<L = Span> {
    pub states: Vec<TraceState<L>>,
    /// Branch taken at each call site on the path; with the entry bindings
    /// this is enough to re-execute the path.
    pub choices: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationError<L = Span> {
    pub message: String,
    pub error_span: L,
    pub related_spans: Vec<L>,
    pub trace: Trace<L>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Verdict<L = Span> {
    Verified,
    Failed { errors: Vec<VerificationError<L>> },
    Timeout,
}

impl<L> Verdict<L> {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Failed { .. } => "failed",
            Verdict::Timeout => "timeout",
        }
    }

    pub fn errors(&self) -> &[VerificationError<L>] {
        match self {
            Verdict::Failed { errors } => errors,
            _ => &[],
        }
    }

    /// Rewrites every location. Fails if any location cannot be mapped.
    pub fn try_map<M>(&self, f: &mut impl FnMut(&L) -> Option<M>) -> Option<Verdict<M>> {
        Some(match self {
            Verdict::Verified => Verdict::Verified,
            Verdict::Timeout => Verdict::Timeout,
            Verdict::Failed { errors } => Verdict::Failed {
                errors: errors
                    .iter()
                    .map(|e| {
                        Some(VerificationError {
                            message: e.message.clone(),
                            error_span: f(&e.error_span)?,
                            related_spans: e.related_spans.iter().map(&mut *f).collect::<Option<_>>()?,
                            trace: Trace {
                                states: e
                                    .trace
                                    .states
                                    .iter()
                                    .map(|s| {
                                        Some(TraceState {
                                            location: f(&s.location)?,
                                            bindings: s.bindings.clone(),
                                        })
                                    })
                                    .collect::<Option<_>>()?,
                                choices: e.trace.choices.clone(),
                            },
                        })
                    })
                    .collect::<Option<_>>()?,
            },
        })
    }
}

/// What a prover run produced. Cancelled runs are discarded by the caller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProveOutcome {
    Done(Verdict),
    Cancelled,
}

pub struct ProveCtx<'a> {
    pub bounds: Bounds,
    pub timeout_ms: u64,
    pub error_cap: usize,
    pub cancel: &'a AtomicBool,
    pub clock: &'a dyn Clock,
}

impl ProveCtx<'_> {
    pub fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }
}

pub trait Prover: Send + Sync {
    fn verify(&self, unit: &VerificationUnit, ctx: &ProveCtx<'_>) -> ProveOutcome;
}

pub const DEFAULT_ERROR_CAP: usize = 8;
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

/// The exhaustive bounded checker.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundedProver;

impl Prover for BoundedProver {
    fn verify(&self, unit: &VerificationUnit, ctx: &ProveCtx<'_>) -> ProveOutcome {
        let deadline = Instant::now().checked_add(Duration::from_millis(ctx.timeout_ms));
        interp::verify(unit, ctx, deadline)
    }
}

/// Convenience wrapper: checks a unit with a private cancellation flag on a
/// thread with a large stack (function evaluation is recursive).
pub fn verify_unit(unit: &VerificationUnit, bounds: Bounds, timeout_ms: u64) -> Verdict {
    let cancel = AtomicBool::new(false);
    let clock = crate::clock::HybridClock::new();
    let ctx = ProveCtx {
        bounds,
        timeout_ms,
        error_cap: DEFAULT_ERROR_CAP,
        cancel: &cancel,
        clock: &clock,
    };
    match with_big_stack(|| BoundedProver.verify(unit, &ctx)) {
        ProveOutcome::Done(v) => v,
        ProveOutcome::Cancelled => unreachable!("private cancel flag never set"),
    }
}

/// Stack size for threads that run the interpreter.
pub const PROVER_STACK_BYTES: usize = 256 << 20;

/// Runs `f` on a scoped thread with a large stack.
pub fn with_big_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(PROVER_STACK_BYTES)
            .spawn_scoped(s, f)
            .expect("spawn prover thread")
            .join()
            .unwrap_or_else(|e| std::panic::resume_unwind(e))
    })
}

/// Re-executes the path a trace describes and returns the fault it hits,
/// as (span, message). `None` if the path completes.
pub fn replay_trace(unit: &VerificationUnit, trace: &Trace, bounds: Bounds) -> Option<(Span, String)> {
    interp::replay(unit, trace, bounds)
}

/// Verifies every unit sequentially; handy for tests and the soundness
/// sweep.
pub fn verify_all(program: &Arc<Program>, bounds: Bounds) -> HashMap<UnitId, Verdict> {
    with_big_stack(|| {
        let cancel = AtomicBool::new(false);
        let clock = crate::clock::HybridClock::new();
        let ctx = ProveCtx {
            bounds,
            timeout_ms: u64::MAX / 4,
            error_cap: DEFAULT_ERROR_CAP,
            cancel: &cancel,
            clock: &clock,
        };
        extract_units(program)
            .into_iter()
            .map(|u| {
                let v = match BoundedProver.verify(&u, &ctx) {
                    ProveOutcome::Done(v) => v,
                    ProveOutcome::Cancelled => Verdict::Timeout,
                };
                (u.id, v)
            })
            .collect()
    })
}
