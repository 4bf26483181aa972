#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use verifide_core::cache::ResultCache;
use verifide_core::clock::{Clock, HybridClock, VirtualClock};
use verifide_core::orchestrator::{Config, Engine, Execution, ProverKind};
use verifide_core::prover::ScriptedProver;

pub const THREE_SNAP0: &str = "method Foo()\n  ensures P();\n{ }\n\nmethod Bar() { }\n\nfunction P(): bool { true }\n";

pub fn three_snapshots() -> [String; 3] {
    let s1 = THREE_SNAP0.replace("method Bar() { }", "method Bar() { Foo(); }");
    let s2 = s1.replace("{ true }", "{ false }");
    [THREE_SNAP0.to_string(), s1, s2]
}

pub fn dir(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

/// (file name, source) for every corpus program, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir("corpus"))
        .expect("corpus dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "msp"))
        .map(|p| {
            let text = std::fs::read_to_string(&p).expect("read corpus file");
            (p.file_name().unwrap().to_string_lossy().into_owned(), text)
        })
        .collect();
    out.sort();
    out
}

pub fn corpus_file(name: &str) -> String {
    std::fs::read_to_string(dir("corpus").join(name)).expect("corpus file")
}

pub fn scripted(delay_ms: u64) -> ProverKind {
    ProverKind::Scripted(ScriptedProver::with_delay(delay_ms))
}

/// Deterministic engine: one worker, virtual clock, inline execution.
pub fn inline_engine(prover: ProverKind) -> Engine {
    let config = Config {
        max_workers: 1,
        prover_kind: prover,
        ..Config::default()
    };
    Engine::new(
        config,
        Arc::new(VirtualClock::new()),
        Arc::new(ResultCache::new(256)),
        Execution::Inline,
    )
}

pub fn threaded_engine(prover: ProverKind, workers: usize) -> Engine {
    let config = Config {
        max_workers: workers,
        prover_kind: prover,
        ..Config::default()
    };
    let clock: Arc<dyn Clock> = Arc::new(HybridClock::new());
    Engine::new(config, clock, Arc::new(ResultCache::new(256)), Execution::Threaded)
}
