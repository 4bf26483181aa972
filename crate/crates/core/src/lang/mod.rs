//! The MiniSpec front end: lexing, parsing, resolution, type checking and
//! hover information.

pub mod ast;
pub mod diagnostic;
pub mod hover;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod resolve;
pub mod span;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use ast::{Decl, Function, Method};
pub use diagnostic::{Diagnostic, DiagnosticKind, Severity};
pub use hover::{HoverInfo, HoverMap};
pub use lexer::{lex_scan, Token, TokenKind};
pub use span::{Pos, Span};

/// A full copy of the buffer at one moment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceText {
    pub content: String,
    pub snapshot_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    FunctionDef,
    MethodSpec,
    MethodBody,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::FunctionDef => "FunctionDef",
            EntityKind::MethodSpec => "MethodSpec",
            EntityKind::MethodBody => "MethodBody",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            EntityKind::FunctionDef => 0,
            EntityKind::MethodSpec => 1,
            EntityKind::MethodBody => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => EntityKind::FunctionDef,
            1 => EntityKind::MethodSpec,
            2 => EntityKind::MethodBody,
            _ => return None,
        })
    }
}

/// Identity of an entity across snapshots. A rename is a delete plus an add.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId {
    pub name: String,
    pub kind: EntityKind,
}

impl EntityId {
    pub fn new(name: impl Into<String>, kind: EntityKind) -> Self {
        EntityId {
            name: name.into(),
            kind,
        }
    }

    pub fn function(name: &str) -> Self {
        Self::new(name, EntityKind::FunctionDef)
    }

    pub fn method_spec(name: &str) -> Self {
        Self::new(name, EntityKind::MethodSpec)
    }

    pub fn method_body(name: &str) -> Self {
        Self::new(name, EntityKind::MethodBody)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind.as_str(), self.name)
    }
}

/// The syntax an entity covers. Method specs and bodies share the method
/// declaration but canonicalize different parts of it.
#[derive(Clone, Debug)]
pub enum EntityAst {
    Function(Arc<Function>),
    MethodSpec(Arc<Method>),
    MethodBody(Arc<Method>),
}

#[derive(Clone, Debug)]
pub struct Entity {
    pub id: EntityId,
    pub ast: EntityAst,
    /// Region of the source this entity owns. Errors reported against the
    /// entity lie inside it.
    pub span: Span,
}

pub type CallGraph = BTreeMap<EntityId, BTreeSet<EntityId>>;

#[derive(Clone, Debug, Default)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub entities: Vec<Entity>,
    pub call_graph: CallGraph,
    pub hover: HoverMap,
    pub diagnostics: Vec<Diagnostic>,
    pub resolved: bool,
}

impl Program {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.severity == Severity::Error)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.iter().find(|e| &e.id == id)
    }

    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name().name == name)
    }

    pub fn function(&self, name: &str) -> Option<&Arc<Function>> {
        self.decls.iter().find_map(|d| match d {
            Decl::Function(f) if f.name.name == name => Some(f),
            _ => None,
        })
    }

    pub fn method(&self, name: &str) -> Option<&Arc<Method>> {
        self.decls.iter().find_map(|d| match d {
            Decl::Method(m) if m.name.name == name => Some(m),
            _ => None,
        })
    }

    /// Innermost hover entry whose span contains the position.
    pub fn hover_info(&self, line: u32, col: u32) -> Option<&HoverInfo> {
        self.hover.lookup(line, col)
    }
}

/// Entities of a list of declarations, in source order.
pub fn entities_of(decls: &[Decl]) -> Vec<Entity> {
    let mut out = Vec::new();
    for d in decls {
        match d {
            Decl::Function(f) => out.push(Entity {
                id: EntityId::function(&f.name.name),
                ast: EntityAst::Function(f.clone()),
                span: f.span,
            }),
            Decl::Method(m) => {
                let spec_end = m
                    .requires
                    .iter()
                    .chain(&m.ensures)
                    .chain(&m.decreases)
                    .map(|e| e.span)
                    .chain(m.returns.iter().map(|p| p.span))
                    .chain(m.params.iter().map(|p| p.span))
                    .fold(m.name.span, Span::join);
                out.push(Entity {
                    id: EntityId::method_spec(&m.name.name),
                    ast: EntityAst::MethodSpec(m.clone()),
                    span: Span::new(m.span.start(), spec_end.end()),
                });
                out.push(Entity {
                    id: EntityId::method_body(&m.name.name),
                    ast: EntityAst::MethodBody(m.clone()),
                    span: m.body.span,
                });
            }
        }
    }
    out
}

/// Parses a buffer into an unresolved program. Syntax errors are recorded as
/// diagnostics; declarations that parsed are kept.
pub fn parse(text: &str) -> Program {
    let (decls, diagnostics) = parser::parse_decls(text);
    Program {
        entities: entities_of(&decls),
        decls,
        diagnostics,
        ..Program::default()
    }
}

/// Parses and resolves in one step.
pub fn analyze(text: &str) -> Program {
    resolve::resolve(parse(text))
}
