//! Total lexical scanner. Used both for syntax highlighting (without
//! invoking the parser) and as the parser's token source.

use serde::{Deserialize, Serialize};

use super::span::{Pos, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TokenKind {
    Keyword,
    Ident,
    Number,
    Operator,
    Comment,
    Whitespace,
    StringLit,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
    pub text: String,
}

impl Token {
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Whitespace | TokenKind::Comment)
    }
}

pub const KEYWORDS: &[&str] = &[
    "method", "function", "returns", "requires", "ensures", "decreases", "invariant", "var", "if",
    "else", "while", "assert", "assume", "return", "true", "false", "old", "forall", "int", "bool",
    "array",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

// Longest first so that maximal munch works by linear probing.
const OPERATORS: &[&str] = &[
    "==>", "{:", ":=", "::", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",",
    ";", ":", ".", "+", "-", "*", "/", "%", "<", ">", "!",
];

struct Scanner {
    chars: Vec<char>,
    idx: usize,
    line: u32,
    col: u32,
}

impl Scanner {
    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.idx + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.idx).copied()?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 0;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }
}

/// Scans `text` into classified tokens. Never fails: characters outside the
/// language become `Error` tokens, and the concatenated token texts always
/// reproduce the input.
pub fn lex_scan(text: &str) -> Vec<Token> {
    let mut sc = Scanner {
        chars: text.chars().collect(),
        idx: 0,
        line: 0,
        col: 0,
    };
    let mut out = Vec::new();
    while let Some(c) = sc.peek(0) {
        let start = sc.pos();
        let start_idx = sc.idx;
        let kind = if c.is_whitespace() {
            while sc.peek(0).is_some_and(char::is_whitespace) {
                sc.bump();
            }
            TokenKind::Whitespace
        } else if sc.starts_with("//") {
            while sc.peek(0).is_some_and(|c| c != '\n') {
                sc.bump();
            }
            TokenKind::Comment
        } else if sc.starts_with("/*") {
            sc.bump();
            sc.bump();
            // Unterminated block comments run to end of input.
            while sc.peek(0).is_some() && !sc.starts_with("*/") {
                sc.bump();
            }
            if sc.starts_with("*/") {
                sc.bump();
                sc.bump();
            }
            TokenKind::Comment
        } else if c.is_ascii_digit() {
            while sc.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                sc.bump();
            }
            TokenKind::Number
        } else if c.is_ascii_alphabetic() || c == '_' {
            while sc
                .peek(0)
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
            {
                sc.bump();
            }
            let word: String = sc.chars[start_idx..sc.idx].iter().collect();
            if is_keyword(&word) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if c == '"' {
            sc.bump();
            loop {
                match sc.peek(0) {
                    None | Some('\n') => break,
                    Some('\\') => {
                        sc.bump();
                        if sc.peek(0).is_some_and(|c| c != '\n') {
                            sc.bump();
                        }
                    }
                    Some('"') => {
                        sc.bump();
                        break;
                    }
                    Some(_) => {
                        sc.bump();
                    }
                }
            }
            TokenKind::StringLit
        } else if let Some(op) = OPERATORS.iter().find(|op| sc.starts_with(op)) {
            for _ in 0..op.chars().count() {
                sc.bump();
            }
            TokenKind::Operator
        } else {
            sc.bump();
            TokenKind::Error
        };
        let text: String = sc.chars[start_idx..sc.idx].iter().collect();
        out.push(Token {
            kind,
            span: Span::new(start, sc.pos()),
            text,
        });
    }
    out
}
