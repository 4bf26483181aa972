//! Canonical byte serialization of entity syntax trees.
//!
//! Prefix notation: every node is a one-byte tag followed by a u32 length
//! and its children. Leaves (names, integers) are tagged and
//! length-prefixed too, which keeps the encoding injective. Source spans
//! and comments never reach the output.

use crate::lang::ast::*;
use crate::lang::{Entity, EntityAst};

mod tag {
    pub const ENTITY: u8 = 0x01;
    pub const NAME: u8 = 0x02;
    pub const INT: u8 = 0x03;
    pub const LIST: u8 = 0x04;
    pub const PARAM: u8 = 0x05;
    pub const TYPE: u8 = 0x06;
    pub const ATTR: u8 = 0x07;
    pub const BLOCK: u8 = 0x08;
    pub const NONE: u8 = 0x09;

    pub const S_VAR: u8 = 0x20;
    pub const S_ASSIGN: u8 = 0x21;
    pub const S_ARRAY_ASSIGN: u8 = 0x22;
    pub const S_IF: u8 = 0x23;
    pub const S_WHILE: u8 = 0x24;
    pub const S_CALL: u8 = 0x25;
    pub const S_ASSERT: u8 = 0x26;
    pub const S_ASSUME: u8 = 0x27;
    pub const S_RETURN: u8 = 0x28;

    pub const E_INT: u8 = 0x40;
    pub const E_BOOL: u8 = 0x41;
    pub const E_VAR: u8 = 0x42;
    pub const E_UNARY: u8 = 0x43;
    pub const E_BINARY: u8 = 0x44;
    pub const E_COMPARE: u8 = 0x45;
    pub const E_INDEX: u8 = 0x46;
    pub const E_LENGTH: u8 = 0x47;
    pub const E_CALL: u8 = 0x48;
    pub const E_OLD: u8 = 0x49;
    pub const E_FORALL: u8 = 0x4a;
}

struct Writer<'a> {
    buf: Vec<u8>,
    /// Qualifier for variable names: the enclosing declaration.
    scope: &'a str,
}

impl<'a> Writer<'a> {
    fn node(&mut self, tag: u8, children: impl FnOnce(&mut Self)) {
        self.buf.push(tag);
        let at = self.buf.len();
        self.buf.extend_from_slice(&[0; 4]);
        children(self);
        let len = (self.buf.len() - at - 4) as u32;
        self.buf[at..at + 4].copy_from_slice(&len.to_le_bytes());
    }

    fn name(&mut self, s: &str) {
        self.node(tag::NAME, |w| w.buf.extend_from_slice(s.as_bytes()));
    }

    fn var(&mut self, s: &str) {
        let q = format!("{}.{}", self.scope, s);
        self.name(&q);
    }

    fn int(&mut self, n: i64) {
        self.node(tag::INT, |w| w.buf.extend_from_slice(&n.to_le_bytes()));
    }

    fn byte(&mut self, b: u8) {
        self.buf.push(b);
    }

    fn list<T>(&mut self, items: &[T], mut each: impl FnMut(&mut Self, &T)) {
        self.node(tag::LIST, |w| {
            for it in items {
                each(w, it);
            }
        });
    }

    fn ty(&mut self, t: Type) {
        let b = match t {
            Type::Int => 0,
            Type::Bool => 1,
            Type::IntArray => 2,
        };
        self.node(tag::TYPE, |w| w.byte(b));
    }

    fn params(&mut self, ps: &[Param]) {
        self.list(ps, |w, p| {
            w.node(tag::PARAM, |w| {
                w.var(&p.name.name);
                w.ty(p.ty);
            })
        });
    }

    fn attrs(&mut self, attrs: &[Attribute]) {
        self.list(attrs, |w, a| {
            w.node(tag::ATTR, |w| {
                w.name(&a.name.name);
                w.exprs(&a.args);
            })
        });
    }

    fn exprs(&mut self, es: &[Expr]) {
        self.list(es, |w, e| w.expr(e));
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Int(n) => self.node(tag::E_INT, |w| w.int(*n)),
            ExprKind::Bool(b) => self.node(tag::E_BOOL, |w| w.byte(*b as u8)),
            ExprKind::Var(v) => self.node(tag::E_VAR, |w| w.var(v)),
            ExprKind::Unary(op, a) => self.node(tag::E_UNARY, |w| {
                w.byte(*op as u8);
                w.expr(a);
            }),
            ExprKind::Binary(op, a, b) => self.node(tag::E_BINARY, |w| {
                w.byte(*op as u8);
                w.expr(a);
                w.expr(b);
            }),
            ExprKind::Compare { operands, ops } => self.node(tag::E_COMPARE, |w| {
                w.list(ops, |w, op| w.byte(*op as u8));
                w.exprs(operands);
            }),
            ExprKind::Index(a, i) => self.node(tag::E_INDEX, |w| {
                w.expr(a);
                w.expr(i);
            }),
            ExprKind::Length(a, _) => self.node(tag::E_LENGTH, |w| w.expr(a)),
            ExprKind::Call { callee, args } => self.node(tag::E_CALL, |w| {
                w.name(&callee.name);
                w.exprs(args);
            }),
            ExprKind::Old(a) => self.node(tag::E_OLD, |w| w.expr(a)),
            ExprKind::Forall {
                var,
                lower,
                lower_op,
                upper,
                upper_op,
                body,
                ..
            } => self.node(tag::E_FORALL, |w| {
                w.var(&var.name);
                w.expr(lower);
                w.byte(*lower_op as u8);
                w.byte(*upper_op as u8);
                w.expr(upper);
                w.expr(body);
            }),
        }
    }

    fn block(&mut self, b: &Block) {
        self.node(tag::BLOCK, |w| w.list(&b.stmts, |w, s| w.stmt(s)));
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => self.node(tag::S_VAR, |w| {
                w.var(&name.name);
                match ty {
                    Some(t) => w.ty(*t),
                    None => w.node(tag::NONE, |_| {}),
                }
                w.expr(init);
            }),
            StmtKind::Assign { target, value } => self.node(tag::S_ASSIGN, |w| {
                w.var(&target.name);
                w.expr(value);
            }),
            StmtKind::ArrayAssign {
                array,
                index,
                value,
            } => self.node(tag::S_ARRAY_ASSIGN, |w| {
                w.var(&array.name);
                w.expr(index);
                w.expr(value);
            }),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => self.node(tag::S_IF, |w| {
                w.expr(cond);
                w.block(then_branch);
                match else_branch {
                    None => w.node(tag::NONE, |_| {}),
                    Some(Else::Block(b)) => w.block(b),
                    Some(Else::If(s)) => w.stmt(s),
                }
            }),
            StmtKind::While {
                cond,
                invariants,
                decreases,
                body,
            } => self.node(tag::S_WHILE, |w| {
                w.expr(cond);
                w.exprs(invariants);
                w.exprs(decreases);
                w.block(body);
            }),
            StmtKind::Call {
                targets,
                callee,
                args,
            } => self.node(tag::S_CALL, |w| {
                w.list(targets, |w, t| w.var(&t.name));
                w.name(&callee.name);
                w.exprs(args);
            }),
            StmtKind::Assert(e) => self.node(tag::S_ASSERT, |w| w.expr(e)),
            StmtKind::Assume(e) => self.node(tag::S_ASSUME, |w| w.expr(e)),
            StmtKind::Return => self.node(tag::S_RETURN, |_| {}),
        }
    }
}

/// Deterministic serialization of an entity, including its kind and name.
pub fn canonicalize(entity: &Entity) -> Vec<u8> {
    let mut w = Writer {
        buf: Vec::new(),
        scope: &entity.id.name,
    };
    w.node(tag::ENTITY, |w| {
        w.byte(entity.id.kind.tag());
        w.name(&entity.id.name);
        match &entity.ast {
            EntityAst::Function(f) => {
                w.attrs(&f.attrs);
                w.params(&f.params);
                w.ty(f.ret);
                w.exprs(&f.requires);
                w.exprs(&f.decreases);
                w.expr(&f.body);
            }
            EntityAst::MethodSpec(m) => {
                w.attrs(&m.attrs);
                w.params(&m.params);
                w.params(&m.returns);
                w.exprs(&m.requires);
                w.exprs(&m.ensures);
                w.exprs(&m.decreases);
            }
            EntityAst::MethodBody(m) => {
                w.attrs(&m.attrs);
                w.params(&m.params);
                w.params(&m.returns);
                w.block(&m.body);
            }
        }
    });
    w.buf
}
