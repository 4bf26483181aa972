mod common;

use std::collections::BTreeMap;
use std::process::{Command, Output};

use proptest::prelude::*;

use verifide_core::orchestrator::Config;
use verifide_core::replay::{diff_lines, run_session, Action, Report, RunOptions, SessionScript};

fn verifide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verifide")).args(args).output().expect("run verifide")
}

fn session(name: &str) -> String {
    common::dir("sessions").join(name).to_string_lossy().into_owned()
}

fn report_of(out: &Output) -> Report {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr));
    })
}

#[test]
fn three_snapshots_replay_through_the_cli() {
    let out = verifide(&["replay", &session("three_snapshots.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report_of(&out);
    assert_eq!(r.invocations_per_snapshot(), [5, 1, 5]);
    assert_eq!(r.hits_per_snapshot(), [0, 4, 0]);
    let foo = r.snapshots[2].units.iter().find(|u| u.entity_id == "MethodBody(Foo)").unwrap();
    assert_eq!(foo.verdict.as_deref(), Some("failed"));
    assert_eq!(foo.errors[0].message, "ensures clause might not hold");
    assert_eq!(r.totals.prover_invocations, 11);
    assert_eq!(r.totals.cache_hits, 4);
}

#[test]
fn exit_codes() {
    let broken = verifide(&["replay", &session("broken.json")]);
    assert_eq!(broken.status.code(), Some(2));
    let r = report_of(&broken);
    assert!(r.snapshots[1].diagnostics.iter().any(|d| d.message.contains("'y'")));
    assert!(!r.snapshots[1].verified);
    // The repaired third snapshot is served from the first one's results.
    assert_eq!(r.snapshots[2].prover_invocations, 0);

    let missing = verifide(&["replay", "/nonexistent/script.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("verifide: "));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"snapshots": [], "surprise": 1}"#).unwrap();
    assert_eq!(verifide(&["replay", bad.to_str().unwrap()]).status.code(), Some(1));
    let bad_bounds = verifide(&["replay", &session("abs.json"), "--bounds", "3,1,2"]);
    assert_eq!(bad_bounds.status.code(), Some(1));
    assert_eq!(verifide(&["replay"]).status.code(), Some(1));
    assert_eq!(verifide(&["--help"]).status.code(), Some(0));
}

#[test]
fn persistent_cache_file_skips_all_work_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("one.json");
    let text = serde_json::to_string(&common::corpus_file("minmax.msp")).unwrap();
    std::fs::write(&script, format!(r#"{{"snapshots": [{{"atMs": 0, "text": {text}}}]}}"#)).unwrap();
    let cache = dir.path().join("results.cache");
    let args = ["replay", script.to_str().unwrap(), "--cache-file", cache.to_str().unwrap()];
    let first = report_of(&verifide(&args));
    assert_eq!(first.totals.prover_invocations, 4);
    assert!(cache.exists());
    let second = report_of(&verifide(&args));
    assert_eq!(second.totals.prover_invocations, 0);
    assert_eq!(second.totals.cache_hits, 4);
    assert_eq!(verdicts(&first), verdicts(&second));
}

#[test]
fn persistent_cache_carries_over_between_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("results.cache");
    let args = ["replay", &session("loops.json"), "--cache-file", cache.to_str().unwrap()].map(String::from);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let first = report_of(&verifide(&args));
    let second = report_of(&verifide(&args));
    // One entry per entity: only versions overwritten later in the session
    // have to be proved again.
    assert!(second.totals.prover_invocations < first.totals.prover_invocations);
    assert_eq!(verdicts(&first), verdicts(&second));
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for i in 0..2 {
        let p = dir.path().join(format!("r{i}.json"));
        let out = verifide(&["replay", &session("burst.json"), "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
        outs.push(std::fs::read(p).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn burst_abandons_stale_work() {
    let out = verifide(&["replay", &session("burst.json")]);
    let r = report_of(&out);
    let skipped = r.snapshots.iter().flat_map(|s| &s.units).filter(|u| u.action == Action::Skipped).count();
    assert!(skipped > 0);
    // Every skipped row belongs to a snapshot that was superseded.
    for s in &r.snapshots {
        if s.units.iter().any(|u| u.action == Action::Skipped) {
            assert!(s.verified, "a snapshot with abandoned units still finishes its run");
        }
    }
    assert!(r.snapshots.last().unwrap().verified);
}

#[test]
fn cli_flags_override_script_config() {
    let out = verifide(&["replay", &session("three_snapshots.json"), "--no-cache"]);
    let r = report_of(&out);
    assert_eq!(r.invocations_per_snapshot(), [5, 5, 5]);
    let out = verifide(&["replay", &session("three_snapshots.json"), "--debounce-ms", "3000"]);
    let r = report_of(&out);
    // Snapshots 2 s apart now fall into one debounce window.
    assert_eq!(r.snapshots.iter().filter(|s| s.verified).count(), 1);
}

type Verdicts = BTreeMap<String, (Option<String>, Vec<String>)>;

/// Final verdict of every unit in every verified snapshot.
fn verdicts(r: &Report) -> BTreeMap<u64, Verdicts> {
    r.snapshots
        .iter()
        .filter(|s| s.verified)
        .map(|s| {
            let units = s
                .units
                .iter()
                .filter(|u| u.action != Action::Skipped)
                .map(|u| {
                    let errors = u.errors.iter().map(|e| format!("{} @ {}", e.message, e.span)).collect();
                    (format!("{}/{:?}", u.entity_id, u.obligation), (u.verdict.clone(), errors))
                })
                .collect();
            (s.snapshot_id, units)
        })
        .collect()
}

#[test]
fn caching_is_invisible_in_results() {
    for name in ["three_snapshots.json", "abs.json", "inc.json", "div.json", "loops.json", "broken.json"] {
        let script = SessionScript::load(&common::dir("sessions").join(name)).unwrap();
        let mut on = Config::default();
        script.config.apply(&mut on);
        let off = Config {
            use_cache: false,
            ..on.clone()
        };
        let a = run_session(&script, &on, &RunOptions::default());
        let b = run_session(&script, &off, &RunOptions::default());
        assert_eq!(verdicts(&a), verdicts(&b), "{name}");
        assert!(a.totals.prover_invocations <= b.totals.prover_invocations);
    }
}

#[test]
fn scripts_from_texts_match_files() {
    let texts = common::three_snapshots();
    let script = SessionScript::from_texts("three_snapshots.msp", texts.clone(), 2000);
    let loaded = SessionScript::load(&common::dir("sessions").join("three_snapshots.json")).unwrap();
    assert_eq!(script.snapshots, loaded.snapshots);
    assert!(SessionScript::from_json(r#"{"snapshots":[{"atMs":5,"text":"a"},{"atMs":5,"text":"b"}]}"#).is_err());
    assert!(SessionScript::from_json(r#"{"snapshots":[{"atMs":5}]}"#).is_err());
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            dp[i][j] = if a[i] == b[j] { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
        }
    }
    dp[0][0]
}

fn is_subsequence(xs: &[&str], of: &[&str]) -> bool {
    let mut it = of.iter();
    xs.iter().all(|x| it.any(|y| y == x))
}

proptest! {
    #[test]
    fn changed_lines_are_the_complement_of_a_longest_common_subsequence(
        old in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "{", "}"]), 0..12),
        new in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "{", "}"]), 0..12),
    ) {
        let (o, n) = (old.join("\n"), new.join("\n"));
        let changed = diff_lines(&o, &n);
        let lines_new: Vec<&str> = n.lines().collect();
        let lines_old: Vec<&str> = o.lines().collect();
        prop_assert!(changed.iter().all(|&l| (l as usize) < lines_new.len()));
        let kept: Vec<&str> = lines_new
            .iter()
            .enumerate()
            .filter(|(i, _)| !changed.contains(&(*i as u32)))
            .map(|(_, l)| *l)
            .collect();
        prop_assert!(is_subsequence(&kept, &lines_old));
        prop_assert_eq!(kept.len(), lcs_len(&lines_old, &lines_new));
    }
}

#[test]
fn diff_examples() {
    assert!(diff_lines("a\nb\n", "a\nb\n").is_empty());
    assert_eq!(diff_lines("a\nb\n", "a\nx\nb\n").into_iter().collect::<Vec<_>>(), [1]);
    assert_eq!(diff_lines("", "a\nb").into_iter().collect::<Vec<_>>(), [0, 1]);
    assert!(diff_lines("a\nb\n", "a\n").is_empty());
}

#[test]
fn three_snapshots_edit_touches_only_the_bar_line() {
    let [s0, s1, _] = common::three_snapshots();
    let bar = s1.lines().position(|l| l.contains("Foo();")).unwrap() as u32;
    assert_eq!(diff_lines(&s0, &s1).into_iter().collect::<Vec<_>>(), [bar]);
}

#[test]
fn report_totals_are_consistent() {
    for name in ["three_snapshots.json", "abs.json", "inc.json", "div.json", "loops.json", "broken.json", "burst.json", "fill.json"] {
        let script = SessionScript::load(&common::dir("sessions").join(name)).unwrap();
        let mut config = Config::default();
        script.config.apply(&mut config);
        let r = run_session(&script, &config, &RunOptions::default());
        for s in &r.snapshots {
            let proved = s.units.iter().filter(|u| u.action == Action::Proved).count() as u64;
            let hits = s.units.iter().filter(|u| u.action == Action::CacheHit).count() as u64;
            assert_eq!((s.prover_invocations, s.cache_hits), (proved, hits), "{name}");
            if s.verified && s.units.iter().all(|u| u.action != Action::Skipped) {
                assert_eq!(proved + hits, s.units.len() as u64, "{name}");
            }
        }
        let sum: u64 = r.snapshots.iter().map(|s| s.prover_invocations).sum();
        assert_eq!(r.totals.prover_invocations, sum, "{name}");
        assert_eq!(r.totals.cache_hits, r.snapshots.iter().map(|s| s.cache_hits).sum::<u64>(), "{name}");
    }
}
