//! A prover with scripted latency, for timing experiments. It sleeps on the
//! engine clock and then returns a scripted verdict, or defers to the
//! bounded prover for the real one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    Binding, BoundedProver, ProveCtx, ProveOutcome, Prover, Trace, TraceState, VerificationError,
    VerificationUnit, Verdict,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScriptedVerdict {
    Verified,
    Failed,
    /// Whatever the bounded prover says.
    #[default]
    Actual,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UnitScript {
    #[serde(default)]
    pub delay_ms: Option<u64>,
    #[serde(default)]
    pub verdict: Option<ScriptedVerdict>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScriptedProver {
    #[serde(default)]
    pub default_delay_ms: u64,
    #[serde(default)]
    pub default_verdict: ScriptedVerdict,
    /// Overrides keyed by unit ("MethodBody(Bar)", "FunctionWF(P)"),
    /// entity ("FunctionDef(P)") or bare declaration name.
    #[serde(default)]
    pub units: BTreeMap<String, UnitScript>,
}

const SLICE_MS: u64 = 5;

impl ScriptedProver {
    pub fn with_delay(ms: u64) -> Self {
        ScriptedProver {
            default_delay_ms: ms,
            ..Self::default()
        }
    }

    fn script_for(&self, unit: &VerificationUnit) -> (u64, ScriptedVerdict) {
        let keys = [
            unit.id.to_string(),
            unit.id.entity.to_string(),
            unit.id.entity.name.clone(),
        ];
        let s = keys.iter().find_map(|k| self.units.get(k));
        (
            s.and_then(|s| s.delay_ms).unwrap_or(self.default_delay_ms),
            s.and_then(|s| s.verdict).unwrap_or(self.default_verdict),
        )
    }
}

/// Sleeps `ms` in slices so cancellation is noticed promptly. Returns false
/// if cancelled.
fn sleep_cancellable(ctx: &ProveCtx<'_>, ms: u64) -> bool {
    let mut left = ms;
    while left > 0 {
        if ctx.cancelled() {
            return false;
        }
        let step = left.min(SLICE_MS);
        ctx.clock.sleep_ms(step);
        left -= step;
    }
    !ctx.cancelled()
}

impl Prover for ScriptedProver {
    fn verify(&self, unit: &VerificationUnit, ctx: &ProveCtx<'_>) -> ProveOutcome {
        let (delay, verdict) = self.script_for(unit);
        if delay > ctx.timeout_ms {
            return if sleep_cancellable(ctx, ctx.timeout_ms) {
                ProveOutcome::Done(Verdict::Timeout)
            } else {
                ProveOutcome::Cancelled
            };
        }
        if !sleep_cancellable(ctx, delay) {
            return ProveOutcome::Cancelled;
        }
        match verdict {
            ScriptedVerdict::Verified => ProveOutcome::Done(Verdict::Verified),
            ScriptedVerdict::Failed => {
                let e = unit.entity();
                let name = e.id.name.clone();
                ProveOutcome::Done(Verdict::Failed {
                    errors: vec![VerificationError {
                        message: format!("scripted failure in {name}"),
                        error_span: e.span,
                        related_spans: vec![],
                        trace: Trace {
                            states: vec![TraceState {
                                location: e.span,
                                bindings: Vec::<Binding>::new(),
                            }],
                            choices: vec![],
                        },
                    }],
                })
            }
            ScriptedVerdict::Actual => BoundedProver.verify(unit, ctx),
        }
    }
}
