use serde::{Deserialize, Serialize};

use super::span::Span;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoverInfo {
    pub text: String,
    /// Set when the hovered identifier denotes a program variable, so that
    /// clients can add its value in a selected counterexample state.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variable: Option<String>,
}

impl HoverInfo {
    pub fn text(text: impl Into<String>) -> Self {
        HoverInfo {
            text: text.into(),
            variable: None,
        }
    }

    pub fn variable(text: impl Into<String>, name: &str) -> Self {
        HoverInfo {
            text: text.into(),
            variable: Some(name.to_string()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct HoverMap {
    entries: Vec<(Span, HoverInfo)>,
}

impl HoverMap {
    pub fn insert(&mut self, span: Span, info: HoverInfo) {
        self.entries.push((span, info));
    }

    pub fn entries(&self) -> &[(Span, HoverInfo)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The innermost entry containing (line, col). Among nested spans the
    /// innermost starts last and, on a tie, ends first.
    pub fn lookup(&self, line: u32, col: u32) -> Option<&HoverInfo> {
        self.entries
            .iter()
            .filter(|(s, _)| s.contains_pos(line, col))
            .max_by(|(a, _), (b, _)| a.start().cmp(&b.start()).then(b.end().cmp(&a.end())))
            .map(|(_, h)| h)
    }
}
