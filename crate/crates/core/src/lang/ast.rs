//! MiniSpec abstract syntax. Every node carries its source span as side
//! metadata; spans never participate in canonical forms or checksums.

use std::fmt;
use std::sync::Arc;

use super::span::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Bool,
    IntArray,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::IntArray => "array<int>",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: Ident,
    pub ty: Type,
    pub span: Span,
}

/// `{:name args}`
#[derive(Clone, Debug)]
pub struct Attribute {
    pub name: Ident,
    pub args: Vec<Expr>,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Function {
    pub name: Ident,
    pub attrs: Vec<Attribute>,
    pub params: Vec<Param>,
    pub ret: Type,
    pub requires: Vec<Expr>,
    pub decreases: Vec<Expr>,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Method {
    pub name: Ident,
    pub attrs: Vec<Attribute>,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
    pub requires: Vec<Expr>,
    pub ensures: Vec<Expr>,
    pub decreases: Vec<Expr>,
    pub body: Block,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum Decl {
    Function(Arc<Function>),
    Method(Arc<Method>),
}

impl Decl {
    pub fn name(&self) -> &Ident {
        match self {
            Decl::Function(f) => &f.name,
            Decl::Method(m) => &m.name,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Decl::Function(f) => f.span,
            Decl::Method(m) => m.span,
        }
    }

    pub fn attrs(&self) -> &[Attribute] {
        match self {
            Decl::Function(f) => &f.attrs,
            Decl::Method(m) => &m.attrs,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    /// Span of the braces and everything between them.
    pub span: Span,
    /// Span of the closing brace; the implicit return point of a body.
    pub close: Span,
}

#[derive(Clone, Debug)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum StmtKind {
    VarDecl {
        name: Ident,
        ty: Option<Type>,
        init: Expr,
    },
    Assign {
        target: Ident,
        value: Expr,
    },
    ArrayAssign {
        array: Ident,
        index: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then_branch: Block,
        else_branch: Option<Else>,
    },
    While {
        cond: Expr,
        invariants: Vec<Expr>,
        decreases: Vec<Expr>,
        body: Block,
    },
    Call {
        targets: Vec<Ident>,
        callee: Ident,
        args: Vec<Expr>,
    },
    Assert(Expr),
    Assume(Expr),
    Return,
}

#[derive(Clone, Debug)]
pub enum Else {
    Block(Block),
    If(Box<Stmt>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    And,
    Or,
    Implies,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Not => "!",
            UnOp::Neg => "-",
        }
    }
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "==>",
        }
    }
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `a op b op c ...`, meaning the conjunction of adjacent comparisons.
    Compare {
        operands: Vec<Expr>,
        ops: Vec<CmpOp>,
    },
    Index(Box<Expr>, Box<Expr>),
    /// `e.Length`; the span of the `Length` field name is kept for hover.
    Length(Box<Expr>, Span),
    Call {
        callee: Ident,
        args: Vec<Expr>,
    },
    Old(Box<Expr>),
    /// `forall var :: lower lower_op var upper_op upper ==> body`
    Forall {
        var: Ident,
        /// The bound variable's occurrence between the range operators.
        var_use: Span,
        lower: Box<Expr>,
        lower_op: CmpOp,
        upper: Box<Expr>,
        upper_op: CmpOp,
        body: Box<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Visits this expression and all subexpressions in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
            ExprKind::Unary(_, e) | ExprKind::Old(e) | ExprKind::Length(e, _) => e.walk(f),
            ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Compare { operands, .. } => operands.iter().for_each(|e| e.walk(f)),
            ExprKind::Call { args, .. } => args.iter().for_each(|e| e.walk(f)),
            ExprKind::Forall {
                lower, upper, body, ..
            } => {
                lower.walk(f);
                upper.walk(f);
                body.walk(f);
            }
        }
    }
}

impl Block {
    /// Visits every statement, including nested ones, in pre-order.
    pub fn walk_stmts<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        for s in &self.stmts {
            s.walk(f);
        }
    }
}

impl Stmt {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk_stmts(f);
                match else_branch {
                    Some(Else::Block(b)) => b.walk_stmts(f),
                    Some(Else::If(s)) => s.walk(f),
                    None => {}
                }
            }
            StmtKind::While { body, .. } => body.walk_stmts(f),
            _ => {}
        }
    }

    /// Expressions appearing directly in this statement (not in nested
    /// statements).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::VarDecl { init, .. } => vec![init],
            StmtKind::Assign { value, .. } => vec![value],
            StmtKind::ArrayAssign { index, value, .. } => vec![index, value],
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::While {
                cond,
                invariants,
                decreases,
                ..
            } => std::iter::once(cond)
                .chain(invariants)
                .chain(decreases)
                .collect(),
            StmtKind::Call { args, .. } => args.iter().collect(),
            StmtKind::Assert(e) | StmtKind::Assume(e) => vec![e],
            StmtKind::Return => vec![],
        }
    }
}

/// An attribute lookup such as `{:timeLimit 5}`.
pub fn int_attribute(attrs: &[Attribute], name: &str) -> Option<i64> {
    attrs
        .iter()
        .find(|a| a.name.name == name)
        .and_then(|a| match a.args.first().map(|e| &e.kind) {
            Some(ExprKind::Int(n)) => Some(*n),
            _ => None,
        })
}
