//! Position-independent locations.
//!
//! A cached verdict may be served for a later snapshot in which the entity
//! moved (lines inserted above it, a comment added inside it). Its spans are
//! therefore stored as (declaration, node index) anchors: the index of the
//! span in a fixed pre-order walk of the declaration's syntax. An unchanged
//! entity checksum guarantees the walk yields the same nodes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::interp::entry_point;
use super::Verdict;
use crate::lang::ast::*;
use crate::lang::{Program, Span};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub decl: String,
    pub index: u32,
}

#[derive(Debug, Default)]
pub struct SpanIndex {
    decls: Vec<(String, Span, Vec<Span>)>,
    by_name: HashMap<String, usize>,
}

fn exprs(out: &mut Vec<Span>, es: &[Expr]) {
    for e in es {
        e.walk(&mut |x| out.push(x.span));
    }
}

fn params(out: &mut Vec<Span>, ps: &[Param]) {
    for p in ps {
        out.push(p.span);
        out.push(p.name.span);
    }
}

fn block(out: &mut Vec<Span>, b: &Block) {
    out.push(b.span);
    out.push(entry_point(b));
    b.walk_stmts(&mut |s| {
        out.push(s.span);
        for e in s.exprs() {
            e.walk(&mut |x| out.push(x.span));
        }
        match &s.kind {
            StmtKind::While {
                decreases, body, ..
            } => {
                if let Some(j) = decreases.iter().map(|d| d.span).reduce(Span::join) {
                    out.push(j);
                }
                out.push(body.span);
                out.push(body.close);
            }
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                out.push(then_branch.span);
                out.push(then_branch.close);
                if let Some(Else::Block(b)) = else_branch {
                    out.push(b.span);
                    out.push(b.close);
                }
            }
            _ => {}
        }
    });
    out.push(b.close);
}

/// Spec nodes come before body nodes, so body edits never shift the
/// indices of spec locations.
fn decl_spans(d: &Decl) -> Vec<Span> {
    let mut out = vec![d.span(), d.name().span];
    for a in d.attrs() {
        out.push(a.span);
        exprs(&mut out, &a.args);
    }
    match d {
        Decl::Function(f) => {
            params(&mut out, &f.params);
            exprs(&mut out, &f.requires);
            exprs(&mut out, &f.decreases);
            exprs(&mut out, std::slice::from_ref(&f.body));
        }
        Decl::Method(m) => {
            params(&mut out, &m.params);
            params(&mut out, &m.returns);
            exprs(&mut out, &m.requires);
            exprs(&mut out, &m.ensures);
            exprs(&mut out, &m.decreases);
            block(&mut out, &m.body);
        }
    }
    out
}

impl SpanIndex {
    pub fn new(program: &Program) -> Self {
        let mut idx = SpanIndex::default();
        for d in &program.decls {
            let name = &d.name().name;
            // Entity regions first: their count per declaration is fixed.
            let mut spans: Vec<Span> = program
                .entities
                .iter()
                .filter(|e| &e.id.name == name)
                .map(|e| e.span)
                .collect();
            spans.extend(decl_spans(d));
            idx.by_name.insert(name.clone(), idx.decls.len());
            idx.decls.push((name.clone(), d.span(), spans));
        }
        idx
    }

    pub fn anchor(&self, span: &Span) -> Option<Anchor> {
        let (name, _, spans) = self.decls.iter().find(|(_, ds, _)| ds.contains(span))?;
        let i = spans.iter().position(|s| s == span)?;
        Some(Anchor {
            decl: name.clone(),
            index: i as u32,
        })
    }

    pub fn resolve(&self, a: &Anchor) -> Option<Span> {
        let &i = self.by_name.get(&a.decl)?;
        self.decls[i].2.get(a.index as usize).copied()
    }

    pub fn anchor_verdict(&self, v: &Verdict) -> Option<Verdict<Anchor>> {
        v.try_map(&mut |s| self.anchor(s))
    }

    pub fn resolve_verdict(&self, v: &Verdict<Anchor>) -> Option<Verdict> {
        v.try_map(&mut |a| self.resolve(a))
    }
}
