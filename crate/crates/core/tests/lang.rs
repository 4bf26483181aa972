mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use regex::Regex;

use verifide_core::fingerprint::{canonicalize, fingerprint};
use verifide_core::lang::ast::Decl;
use verifide_core::lang::pretty::program_to_string;
use verifide_core::lang::{analyze, lex_scan, DiagnosticKind, EntityId, EntityKind, Program, Span, TokenKind};

/// Independent tokenizer: one leftmost-first regex, alternatives in the
/// lexer's priority order.
fn reference_tokens(text: &str) -> Vec<(TokenKind, String)> {
    let re = Regex::new(concat!(
        r"\A(?:(?P<ws>\s+)",
        r"|(?P<line>//[^\n]*)",
        r"|(?P<block>(?s:/\*.*?(?:\*/|\z)))",
        r"|(?P<num>[0-9]+)",
        r"|(?P<word>[A-Za-z_][A-Za-z0-9_']*)",
        r#"|(?P<str>"(?:\\[^\n]?|[^"\\\n])*"?)"#,
        r"|(?P<op>==>|\{:|:=|::|==|!=|<=|>=|&&|\|\||[(){}\[\],;:.+\-*/%<>!])",
        r"|(?P<err>(?s:.)))"
    ))
    .unwrap();
    let keywords = [
        "method", "function", "returns", "requires", "ensures", "decreases", "invariant", "var", "if", "else",
        "while", "assert", "assume", "return", "true", "false", "old", "forall", "int", "bool", "array",
    ];
    let mut rest = text;
    let mut out = Vec::new();
    while !rest.is_empty() {
        let c = re.captures(rest).expect("reference always matches");
        let (kind, m) = [
            ("ws", TokenKind::Whitespace),
            ("line", TokenKind::Comment),
            ("block", TokenKind::Comment),
            ("num", TokenKind::Number),
            ("word", TokenKind::Ident),
            ("str", TokenKind::StringLit),
            ("op", TokenKind::Operator),
            ("err", TokenKind::Error),
        ]
        .into_iter()
        .find_map(|(g, k)| c.name(g).map(|m| (k, m)))
        .unwrap();
        let kind = if kind == TokenKind::Ident && keywords.contains(&m.as_str()) {
            TokenKind::Keyword
        } else {
            kind
        };
        out.push((kind, m.as_str().to_string()));
        rest = &rest[m.end()..];
    }
    out
}

fn lexy_text() -> impl Strategy<Value = String> {
    let atoms = prop::sample::select(vec![
        "a", "Z", "_", "x1", "'", "0", "42", " ", "\n", "\t", "/", "*", "//", "/*", "*/", "\"", "\\", "=", "==>", ":",
        "=", "<", ">", "!", "&", "|", "{", "}", "(", ")", "[", "]", ";", ",", ".", "+", "-", "%", "é", "\u{2028}",
        "#", "method", "ensures", "old",
    ]);
    prop::collection::vec(atoms, 0..40).prop_map(|v| v.concat())
}

/// Spans recomputed from token texts: 0-based lines and columns in chars.
fn expected_spans(texts: &[String]) -> Vec<Span> {
    let (mut line, mut col) = (0u32, 0u32);
    texts
        .iter()
        .map(|t| {
            let (sl, sc) = (line, col);
            for ch in t.chars() {
                if ch == '\n' {
                    line += 1;
                    col = 0;
                } else {
                    col += 1;
                }
            }
            Span {
                start_line: sl,
                start_col: sc,
                end_line: line,
                end_col: col,
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn lexer_matches_reference(text in lexy_text()) {
        let toks = lex_scan(&text);
        let got: Vec<(TokenKind, String)> = toks.iter().map(|t| (t.kind, t.text.clone())).collect();
        prop_assert_eq!(&got, &reference_tokens(&text));
        let texts: Vec<String> = toks.iter().map(|t| t.text.clone()).collect();
        let spans: Vec<Span> = toks.iter().map(|t| t.span).collect();
        prop_assert_eq!(spans, expected_spans(&texts));
    }

    #[test]
    fn lexer_reassembles_any_input(text in any::<String>()) {
        let joined: String = lex_scan(&text).into_iter().map(|t| t.text).collect();
        prop_assert_eq!(joined, text);
    }
}

#[test]
fn comment_then_keyword() {
    let got: Vec<(TokenKind, String)> = lex_scan("// c\nmethod").into_iter().map(|t| (t.kind, t.text)).collect();
    assert_eq!(
        got,
        vec![
            (TokenKind::Comment, "// c".to_string()),
            (TokenKind::Whitespace, "\n".to_string()),
            (TokenKind::Keyword, "method".to_string()),
        ]
    );
    assert_eq!(reference_tokens("// c\nmethod"), got);
}

#[test]
fn missing_method_name_is_a_syntax_error() {
    let p = analyze("method {");
    let d = p.diagnostics.first().expect("diagnostic");
    assert_eq!(d.kind, DiagnosticKind::SyntaxError);
    assert_eq!(d.span.start_line, 0);
}

#[test]
fn three_snapshots_entities() {
    let p = analyze(common::THREE_SNAP0);
    assert!(!p.has_errors());
    let ids: BTreeSet<EntityId> = p.entities.iter().map(|e| e.id.clone()).collect();
    let want: BTreeSet<EntityId> = [
        EntityId::method_spec("Foo"),
        EntityId::method_body("Foo"),
        EntityId::method_spec("Bar"),
        EntityId::method_body("Bar"),
        EntityId::function("P"),
    ]
    .into_iter()
    .collect();
    assert_eq!(ids, want);
}

#[test]
fn corpus_resolves_cleanly() {
    let c = common::corpus();
    assert!(c.len() >= 20, "corpus has {} programs", c.len());
    for (name, text) in &c {
        let p = analyze(text);
        assert!(!p.has_errors(), "{name}: {:?}", p.diagnostics);
    }
}

fn canon_map(p: &Program) -> BTreeMap<EntityId, Vec<u8>> {
    p.entities.iter().map(|e| (e.id.clone(), canonicalize(e))).collect()
}

#[test]
fn pretty_print_round_trip_on_corpus() {
    let mut texts: Vec<String> = common::corpus().into_iter().map(|(_, t)| t).collect();
    texts.extend(common::three_snapshots());
    for text in texts {
        let p1 = analyze(&text);
        let s1 = program_to_string(&p1.decls);
        let p2 = analyze(&s1);
        assert!(!p2.has_errors(), "reparse of\n{s1}\n{:?}", p2.diagnostics);
        assert_eq!(canon_map(&p1), canon_map(&p2), "{s1}");
        assert_eq!(program_to_string(&p2.decls), s1);
    }
}

/// Rebuilds `text` with extra trivia before the tokens at `cuts`.
fn with_trivia(text: &str, cuts: &[(usize, usize)]) -> String {
    const TRIVIA: [&str; 5] = [" ", "\n", "  \n\t", " // note\n", " /* c */ "];
    let toks = lex_scan(text);
    let mut out = String::new();
    for (i, t) in toks.iter().enumerate() {
        for &(at, which) in cuts {
            if at % (toks.len() + 1) == i {
                out.push_str(TRIVIA[which % TRIVIA.len()]);
            }
        }
        out.push_str(&t.text);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trivia_does_not_change_entities_or_checksums(
        pick in any::<prop::sample::Index>(),
        cuts in prop::collection::vec((0usize..400, 0usize..5), 0..12),
    ) {
        let corpus = common::corpus();
        let (_, text) = &corpus[pick.index(corpus.len())];
        let edited = with_trivia(text, &cuts);
        let (a, b) = (analyze(text), analyze(&edited));
        prop_assert!(!b.has_errors(), "{}", edited);
        prop_assert_eq!(canon_map(&a), canon_map(&b));
        prop_assert_eq!(fingerprint(&a), fingerprint(&b));
    }
}

/// Direct dependencies found by scanning identifier tokens inside each
/// entity's source region.
fn scanned_call_graph(text: &str, p: &Program) -> BTreeMap<EntityId, BTreeSet<EntityId>> {
    let functions: BTreeSet<&str> = p
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Function(f) => Some(f.name.name.as_str()),
            _ => None,
        })
        .collect();
    let methods: BTreeSet<&str> = p
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Method(m) => Some(m.name.name.as_str()),
            _ => None,
        })
        .collect();
    let toks = lex_scan(text);
    let mut g = BTreeMap::new();
    for e in &p.entities {
        let mut deps = BTreeSet::new();
        if e.id.kind == EntityKind::MethodBody {
            deps.insert(EntityId::method_spec(&e.id.name));
        }
        let idents = toks
            .iter()
            .filter(|t| t.kind == TokenKind::Ident && e.span.contains(&t.span));
        // A function's own name in its header is a declaration, not a use.
        let skip = usize::from(e.id.kind == EntityKind::FunctionDef);
        for t in idents.skip(skip) {
            let name = t.text.as_str();
            if functions.contains(name) {
                deps.insert(EntityId::function(name));
            } else if methods.contains(name) && e.id.kind == EntityKind::MethodBody {
                deps.insert(EntityId::method_spec(name));
            }
        }
        g.insert(e.id.clone(), deps);
    }
    g
}

#[test]
fn call_graph_matches_occurrence_scan() {
    let mut texts: Vec<String> = common::corpus().into_iter().map(|(_, t)| t).collect();
    texts.extend(common::three_snapshots());
    for text in texts {
        let p = analyze(&text);
        let mut got = p.call_graph.clone();
        for e in &p.entities {
            got.entry(e.id.clone()).or_default();
        }
        assert_eq!(got, scanned_call_graph(&text, &p), "{text}");
    }
}

#[test]
fn second_snapshot_edges() {
    let p = analyze(&common::three_snapshots()[1]);
    assert!(p.call_graph[&EntityId::method_body("Bar")].contains(&EntityId::method_spec("Foo")));
    assert!(p.call_graph[&EntityId::method_spec("Foo")].contains(&EntityId::function("P")));
}

#[test]
fn every_identifier_has_hover() {
    for (name, text) in common::corpus() {
        let p = analyze(&text);
        for t in lex_scan(&text).iter().filter(|t| t.kind == TokenKind::Ident) {
            let (l, c) = (t.span.start_line, t.span.start_col);
            assert!(p.hover_info(l, c).is_some(), "{name}: no hover for {} at {l}:{c}", t.text);
        }
    }
}

proptest! {
    #[test]
    fn hover_span_contains_query(pick in any::<prop::sample::Index>(), line in 0u32..30, col in 0u32..70) {
        let corpus = common::corpus();
        let (_, text) = &corpus[pick.index(corpus.len())];
        let p = analyze(text);
        if let Some(h) = p.hover_info(line, col) {
            let holder = p.hover.entries().iter().any(|(s, info)| std::ptr::eq(info, h) && s.contains_pos(line, col));
            prop_assert!(holder);
        }
    }
}

#[test]
fn hover_texts() {
    let p = analyze("method M(x: int)\n  decreases x\n{\n  if x > 0 {\n    M(x - 1);\n  }\n}\n");
    assert_eq!(p.hover_info(0, 9).unwrap().text, "(parameter) x: int");
    assert!(p.hover_info(4, 4).unwrap().text.contains("tail-recursive call"));
    let q = analyze("method R(n: int, b: bool, k: int)\n{\n  if n > 0 {\n    R(n - 1, b, k);\n  }\n}\n");
    assert!(q.hover_info(0, 7).unwrap().text.contains("decreases (default): n, k"));
}
