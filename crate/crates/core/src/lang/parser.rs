//! Recursive-descent parser. A syntax error abandons the current
//! declaration and resumes at the next `method` or `function` keyword, so an
//! ill-formed declaration never hides the ones after it.

use std::sync::Arc;

use super::ast::*;
use super::diagnostic::Diagnostic;
use super::lexer::{lex_scan, Token, TokenKind};
use super::span::{Pos, Span};

type PResult<T> = Result<T, Diagnostic>;

pub struct Parser {
    toks: Vec<Token>,
    idx: usize,
    eof: Span,
}

pub fn parse_decls(text: &str) -> (Vec<Decl>, Vec<Diagnostic>) {
    let all = lex_scan(text);
    let eof = all
        .last()
        .map(|t| Span::new(t.span.end(), t.span.end()))
        .unwrap_or_default();
    let mut diags = Vec::new();
    let mut toks = Vec::new();
    for t in all {
        match t.kind {
            TokenKind::Whitespace | TokenKind::Comment => {}
            TokenKind::Error => diags.push(Diagnostic::syntax(
                t.span,
                format!("unexpected character '{}'", t.text),
            )),
            TokenKind::StringLit => {
                diags.push(Diagnostic::syntax(t.span, "string literals are not supported"))
            }
            _ => toks.push(t),
        }
    }
    let mut p = Parser { toks, idx: 0, eof };
    let mut decls = Vec::new();
    while !p.at_end() {
        let res = if p.at_kw("method") {
            p.method().map(|m| Decl::Method(Arc::new(m)))
        } else if p.at_kw("function") {
            p.function().map(|f| Decl::Function(Arc::new(f)))
        } else {
            Err(Diagnostic::syntax(
                p.span(),
                format!("expected 'method' or 'function', found '{}'", p.text()),
            ))
        };
        match res {
            Ok(d) => decls.push(d),
            Err(d) => {
                diags.push(d);
                p.recover();
            }
        }
    }
    diags.sort_by_key(|d| d.span);
    (decls, diags)
}

impl Parser {
    fn at_end(&self) -> bool {
        self.idx >= self.toks.len()
    }

    fn peek_tok(&self, ahead: usize) -> Option<&Token> {
        self.toks.get(self.idx + ahead)
    }

    fn text(&self) -> &str {
        self.peek_tok(0).map(|t| t.text.as_str()).unwrap_or("end of input")
    }

    fn span(&self) -> Span {
        self.peek_tok(0).map(|t| t.span).unwrap_or(self.eof)
    }

    fn prev_span(&self) -> Span {
        if self.idx == 0 {
            return self.eof;
        }
        self.toks[self.idx - 1].span
    }

    fn at(&self, text: &str) -> bool {
        self.peek_tok(0)
            .is_some_and(|t| t.text == text && t.kind == TokenKind::Operator)
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek_tok(0)
            .is_some_and(|t| t.text == kw && t.kind == TokenKind::Keyword)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.idx].clone();
        self.idx += 1;
        t
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<Span> {
        if self.at(text) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("'{text}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.at_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("'{kw}'")))
        }
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::syntax(self.span(), format!("expected {what}, found '{}'", self.text()))
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek_tok(0) {
            Some(t) if t.kind == TokenKind::Ident => {
                let t = self.bump();
                Ok(Ident {
                    name: t.text,
                    span: t.span,
                })
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn recover(&mut self) {
        if !self.at_end() {
            self.idx += 1;
        }
        while !self.at_end() && !self.at_kw("method") && !self.at_kw("function") {
            self.idx += 1;
        }
    }

    fn attributes(&mut self) -> PResult<Vec<Attribute>> {
        let mut attrs = Vec::new();
        while self.at("{:") {
            let start = self.bump().span;
            let name = self.ident()?;
            let mut args = Vec::new();
            while !self.at("}") {
                args.push(self.expr()?);
                if !self.eat(",") {
                    break;
                }
            }
            let end = self.expect("}")?;
            attrs.push(Attribute {
                name,
                args,
                span: start.join(end),
            });
        }
        Ok(attrs)
    }

    fn ty(&mut self) -> PResult<Type> {
        if self.eat_kw("int") {
            Ok(Type::Int)
        } else if self.eat_kw("bool") {
            Ok(Type::Bool)
        } else if self.eat_kw("array") {
            self.expect("<")?;
            self.expect_kw("int")?;
            self.expect(">")?;
            Ok(Type::IntArray)
        } else {
            Err(self.unexpected("a type"))
        }
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.at(")") {
            loop {
                let name = self.ident()?;
                self.expect(":")?;
                let ty = self.ty()?;
                let span = name.span.join(self.prev_span());
                params.push(Param { name, ty, span });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(params)
    }

    fn expr_list(&mut self) -> PResult<Vec<Expr>> {
        let mut v = vec![self.expr()?];
        while self.eat(",") {
            v.push(self.expr()?);
        }
        Ok(v)
    }

    fn method(&mut self) -> PResult<Method> {
        let start = self.expect_kw("method")?;
        let attrs = self.attributes()?;
        let name = self.ident()?;
        let params = self.params()?;
        let returns = if self.eat_kw("returns") {
            self.params()?
        } else {
            Vec::new()
        };
        let (mut requires, mut ensures, mut decreases) = (Vec::new(), Vec::new(), Vec::new());
        loop {
            if self.eat_kw("requires") {
                requires.push(self.expr()?);
            } else if self.eat_kw("ensures") {
                ensures.push(self.expr()?);
            } else if self.eat_kw("decreases") {
                decreases.extend(self.expr_list()?);
            } else {
                break;
            }
            self.eat(";");
        }
        let body = self.block()?;
        Ok(Method {
            span: start.join(body.span),
            name,
            attrs,
            params,
            returns,
            requires,
            ensures,
            decreases,
            body,
        })
    }

    fn function(&mut self) -> PResult<Function> {
        let start = self.expect_kw("function")?;
        let attrs = self.attributes()?;
        let name = self.ident()?;
        let params = self.params()?;
        self.expect(":")?;
        let ret = self.ty()?;
        let (mut requires, mut decreases) = (Vec::new(), Vec::new());
        loop {
            if self.eat_kw("requires") {
                requires.push(self.expr()?);
            } else if self.eat_kw("decreases") {
                decreases.extend(self.expr_list()?);
            } else {
                break;
            }
            self.eat(";");
        }
        self.expect("{")?;
        let body = self.expr()?;
        let end = self.expect("}")?;
        Ok(Function {
            span: start.join(end),
            name,
            attrs,
            params,
            ret,
            requires,
            decreases,
            body,
        })
    }

    fn block(&mut self) -> PResult<Block> {
        let open = self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.at_end() || self.at_kw("method") || self.at_kw("function") {
                return Err(self.unexpected("'}'"));
            }
            stmts.push(self.stmt()?);
        }
        let close = self.expect("}")?;
        Ok(Block {
            stmts,
            span: open.join(close),
            close,
        })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = if self.eat_kw("var") {
            let name = self.ident()?;
            let ty = if self.eat(":") { Some(self.ty()?) } else { None };
            self.expect(":=")?;
            let init = self.expr()?;
            self.expect(";")?;
            StmtKind::VarDecl { name, ty, init }
        } else if self.at_kw("if") {
            return self.if_stmt();
        } else if self.eat_kw("while") {
            let cond = self.expr()?;
            let (mut invariants, mut decreases) = (Vec::new(), Vec::new());
            loop {
                if self.eat_kw("invariant") {
                    invariants.push(self.expr()?);
                } else if self.eat_kw("decreases") {
                    decreases.extend(self.expr_list()?);
                } else {
                    break;
                }
                self.eat(";");
            }
            let body = self.block()?;
            StmtKind::While {
                cond,
                invariants,
                decreases,
                body,
            }
        } else if self.eat_kw("assert") {
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Assert(e)
        } else if self.eat_kw("assume") {
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Assume(e)
        } else if self.eat_kw("return") {
            self.expect(";")?;
            StmtKind::Return
        } else if self.peek_tok(0).is_some_and(|t| t.kind == TokenKind::Ident) {
            self.ident_stmt()?
        } else {
            return Err(self.unexpected("a statement"));
        };
        Ok(Stmt {
            kind,
            span: start.join(self.prev_span()),
        })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.expect_kw("if")?;
        let cond = self.expr()?;
        let then_branch = self.block()?;
        let else_branch = if self.eat_kw("else") {
            if self.at_kw("if") {
                Some(Else::If(Box::new(self.if_stmt()?)))
            } else {
                Some(Else::Block(self.block()?))
            }
        } else {
            None
        };
        Ok(Stmt {
            kind: StmtKind::If {
                cond,
                then_branch,
                else_branch,
            },
            span: start.join(self.prev_span()),
        })
    }

    /// Statements starting with an identifier: assignment, array update,
    /// or method call with zero or more targets.
    fn ident_stmt(&mut self) -> PResult<StmtKind> {
        let first = self.ident()?;
        if self.at("(") {
            let args = self.call_args()?;
            self.expect(";")?;
            return Ok(StmtKind::Call {
                targets: Vec::new(),
                callee: first,
                args,
            });
        }
        if self.eat("[") {
            let index = self.expr()?;
            self.expect("]")?;
            self.expect(":=")?;
            let value = self.expr()?;
            self.expect(";")?;
            return Ok(StmtKind::ArrayAssign {
                array: first,
                index,
                value,
            });
        }
        let mut targets = vec![first];
        while self.eat(",") {
            targets.push(self.ident()?);
        }
        self.expect(":=")?;
        if targets.len() > 1 {
            let callee = self.ident()?;
            let args = self.call_args()?;
            self.expect(";")?;
            return Ok(StmtKind::Call {
                targets,
                callee,
                args,
            });
        }
        let value = self.expr()?;
        self.expect(";")?;
        Ok(StmtKind::Assign {
            target: targets.pop().expect("one target"),
            value,
        })
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect("(")?;
        let args = if self.at(")") {
            Vec::new()
        } else {
            self.expr_list()?
        };
        self.expect(")")?;
        Ok(args)
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if self.eat("==>") {
            let rhs = self.expr()?;
            let span = lhs.span.join(rhs.span);
            return Ok(Expr::new(
                ExprKind::Binary(BinOp::Implies, Box::new(lhs), Box::new(rhs)),
                span,
            ));
        }
        Ok(lhs)
    }

    fn left_assoc(
        &mut self,
        ops: &[(&str, BinOp)],
        next: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (text, op) in ops {
                if self.eat(text) {
                    let rhs = next(self)?;
                    let span = lhs.span.join(rhs.span);
                    lhs = Expr::new(ExprKind::Binary(*op, Box::new(lhs), Box::new(rhs)), span);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[("||", BinOp::Or)], Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[("&&", BinOp::And)], Self::cmp_expr)
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        let t = self.peek_tok(0)?;
        if t.kind != TokenKind::Operator {
            return None;
        }
        Some(match t.text.as_str() {
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let first = self.add_expr()?;
        let mut operands = vec![first];
        let mut ops = Vec::new();
        while let Some(op) = self.cmp_op() {
            self.bump();
            ops.push(op);
            operands.push(self.add_expr()?);
        }
        if ops.is_empty() {
            return Ok(operands.pop().expect("one operand"));
        }
        let span = operands[0].span.join(operands.last().expect("operands").span);
        Ok(Expr::new(ExprKind::Compare { operands, ops }, span))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::mul_expr)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Mod)],
            Self::unary_expr,
        )
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        let op = if self.eat("!") {
            UnOp::Not
        } else if self.eat("-") {
            UnOp::Neg
        } else {
            return self.postfix_expr();
        };
        let e = self.unary_expr()?;
        let span = start.join(e.span);
        Ok(Expr::new(ExprKind::Unary(op, Box::new(e)), span))
    }

    fn postfix_expr(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat("[") {
                let idx = self.expr()?;
                let close = self.expect("]")?;
                let span = e.span.join(close);
                e = Expr::new(ExprKind::Index(Box::new(e), Box::new(idx)), span);
            } else if self.at(".") {
                self.bump();
                let field = self.ident()?;
                if field.name != "Length" {
                    return Err(Diagnostic::syntax(
                        field.span,
                        format!("unknown member '{}'; only 'Length' is supported", field.name),
                    ));
                }
                let span = e.span.join(field.span);
                e = Expr::new(ExprKind::Length(Box::new(e), field.span), span);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek_tok(0).cloned() else {
            return Err(self.unexpected("an expression"));
        };
        match tok.kind {
            TokenKind::Number => {
                self.bump();
                let n = tok.text.parse::<i64>().map_err(|_| {
                    Diagnostic::syntax(tok.span, "integer literal out of range")
                })?;
                Ok(Expr::new(ExprKind::Int(n), tok.span))
            }
            TokenKind::Keyword if tok.text == "true" || tok.text == "false" => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(tok.text == "true"), tok.span))
            }
            TokenKind::Keyword if tok.text == "old" => {
                self.bump();
                self.expect("(")?;
                let e = self.expr()?;
                let close = self.expect(")")?;
                Ok(Expr::new(ExprKind::Old(Box::new(e)), tok.span.join(close)))
            }
            TokenKind::Keyword if tok.text == "forall" => self.forall(),
            TokenKind::Ident => {
                let id = self.ident()?;
                if self.at("(") {
                    let args = self.call_args()?;
                    let span = id.span.join(self.prev_span());
                    Ok(Expr::new(ExprKind::Call { callee: id, args }, span))
                } else {
                    let span = id.span;
                    Ok(Expr::new(ExprKind::Var(id.name), span))
                }
            }
            TokenKind::Operator if tok.text == "(" => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn forall(&mut self) -> PResult<Expr> {
        let start = self.expect_kw("forall")?;
        let var = self.ident()?;
        if self.eat(":") {
            self.expect_kw("int")?;
        }
        self.expect("::")?;
        let e = self.expr()?;
        let span = start.join(e.span);
        let shape_err = || {
            Diagnostic::syntax(
                span,
                format!(
                    "quantifier must have the form 'forall {0} :: L <= {0} < H ==> E'",
                    var.name
                ),
            )
        };
        let ExprKind::Binary(BinOp::Implies, range, body) = e.kind else {
            return Err(shape_err());
        };
        let ExprKind::Compare { mut operands, ops } = range.kind else {
            return Err(shape_err());
        };
        let is_upward = |op: &CmpOp| matches!(op, CmpOp::Lt | CmpOp::Le);
        if ops.len() != 2
            || !ops.iter().all(is_upward)
            || !matches!(&operands[1].kind, ExprKind::Var(v) if *v == var.name)
        {
            return Err(shape_err());
        }
        let upper = operands.pop().expect("three operands");
        let var_use = operands.pop().expect("three operands").span;
        let lower = operands.pop().expect("three operands");
        Ok(Expr::new(
            ExprKind::Forall {
                var,
                var_use,
                lower: Box::new(lower),
                lower_op: ops[0],
                upper: Box::new(upper),
                upper_op: ops[1],
                body,
            },
            span,
        ))
    }
}

/// Parses a standalone expression; used by tests and tooling.
pub fn parse_expr(text: &str) -> Result<Expr, Diagnostic> {
    let toks: Vec<Token> = lex_scan(text).into_iter().filter(|t| !t.is_trivia()).collect();
    let mut p = Parser {
        toks,
        idx: 0,
        eof: Span::new(Pos::default(), Pos::default()),
    };
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}
