//! Canonical pretty printer. Output re-parses to a structurally identical
//! program; comments are not preserved.

use std::fmt::Write;

use super::ast::*;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Forall { .. } => 0,
        ExprKind::Binary(BinOp::Implies, ..) => 1,
        ExprKind::Binary(BinOp::Or, ..) => 2,
        ExprKind::Binary(BinOp::And, ..) => 3,
        ExprKind::Compare { .. } => 4,
        ExprKind::Binary(BinOp::Add | BinOp::Sub, ..) => 5,
        ExprKind::Binary(BinOp::Mul | BinOp::Div | BinOp::Mod, ..) => 6,
        ExprKind::Unary(..) => 7,
        _ => 8,
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_sub(out: &mut String, e: &Expr, min: u8) {
    if prec(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Var(v) => out.push_str(v),
        ExprKind::Unary(op, inner) => {
            out.push_str(op.symbol());
            write_sub(out, inner, 7);
        }
        ExprKind::Binary(op, a, b) => {
            let p = prec(e);
            // Implication associates to the right, everything else to the left.
            let (lmin, rmin) = if *op == BinOp::Implies { (p + 1, p) } else { (p, p + 1) };
            write_sub(out, a, lmin);
            let _ = write!(out, " {} ", op.symbol());
            write_sub(out, b, rmin);
        }
        ExprKind::Compare { operands, ops } => {
            write_sub(out, &operands[0], 5);
            for (op, rhs) in ops.iter().zip(&operands[1..]) {
                let _ = write!(out, " {} ", op.symbol());
                write_sub(out, rhs, 5);
            }
        }
        ExprKind::Index(a, i) => {
            write_sub(out, a, 8);
            out.push('[');
            write_expr(out, i);
            out.push(']');
        }
        ExprKind::Length(a, _) => {
            write_sub(out, a, 8);
            out.push_str(".Length");
        }
        ExprKind::Call { callee, args } => {
            out.push_str(&callee.name);
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
        ExprKind::Old(inner) => {
            out.push_str("old(");
            write_expr(out, inner);
            out.push(')');
        }
        ExprKind::Forall {
            var,
            lower,
            lower_op,
            upper,
            upper_op,
            body,
            ..
        } => {
            let _ = write!(out, "forall {} :: ", var.name);
            write_sub(out, lower, 5);
            let _ = write!(out, " {} {} {} ", lower_op.symbol(), var.name, upper_op.symbol());
            write_sub(out, upper, 5);
            out.push_str(" ==> ");
            write_sub(out, body, 1);
        }
    }
}

fn write_list(out: &mut String, es: &[Expr]) {
    for (i, e) in es.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, e);
    }
}

fn write_params(out: &mut String, ps: &[Param]) {
    out.push('(');
    for (i, p) in ps.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}: {}", p.name.name, p.ty);
    }
    out.push(')');
}

fn write_attrs(out: &mut String, attrs: &[Attribute]) {
    for a in attrs {
        let _ = write!(out, "{{:{}", a.name.name);
        for (i, e) in a.args.iter().enumerate() {
            out.push_str(if i == 0 { " " } else { ", " });
            write_expr(out, e);
        }
        out.push_str("} ");
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_block(out: &mut String, b: &Block, depth: usize) {
    out.push_str("{\n");
    for s in &b.stmts {
        write_stmt(out, s, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    write_stmt_inline(out, s, depth);
    out.push('\n');
}

fn write_stmt_inline(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::VarDecl { name, ty, init } => {
            let _ = write!(out, "var {}", name.name);
            if let Some(t) = ty {
                let _ = write!(out, ": {t}");
            }
            out.push_str(" := ");
            write_expr(out, init);
            out.push(';');
        }
        StmtKind::Assign { target, value } => {
            let _ = write!(out, "{} := ", target.name);
            write_expr(out, value);
            out.push(';');
        }
        StmtKind::ArrayAssign {
            array,
            index,
            value,
        } => {
            let _ = write!(out, "{}[", array.name);
            write_expr(out, index);
            out.push_str("] := ");
            write_expr(out, value);
            out.push(';');
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push_str("if ");
            write_expr(out, cond);
            out.push(' ');
            write_block(out, then_branch, depth);
            match else_branch {
                Some(Else::Block(b)) => {
                    out.push_str(" else ");
                    write_block(out, b, depth);
                }
                Some(Else::If(s)) => {
                    out.push_str(" else ");
                    write_stmt_inline(out, s, depth);
                }
                None => {}
            }
        }
        StmtKind::While {
            cond,
            invariants,
            decreases,
            body,
        } => {
            out.push_str("while ");
            write_expr(out, cond);
            out.push('\n');
            for inv in invariants {
                indent(out, depth + 1);
                out.push_str("invariant ");
                write_expr(out, inv);
                out.push('\n');
            }
            if !decreases.is_empty() {
                indent(out, depth + 1);
                out.push_str("decreases ");
                write_list(out, decreases);
                out.push('\n');
            }
            indent(out, depth);
            write_block(out, body, depth);
        }
        StmtKind::Call {
            targets,
            callee,
            args,
        } => {
            if !targets.is_empty() {
                let names: Vec<&str> = targets.iter().map(|t| t.name.as_str()).collect();
                let _ = write!(out, "{} := ", names.join(", "));
            }
            let _ = write!(out, "{}(", callee.name);
            write_list(out, args);
            out.push_str(");");
        }
        StmtKind::Assert(e) => {
            out.push_str("assert ");
            write_expr(out, e);
            out.push(';');
        }
        StmtKind::Assume(e) => {
            out.push_str("assume ");
            write_expr(out, e);
            out.push(';');
        }
        StmtKind::Return => out.push_str("return;"),
    }
}

pub fn decl_to_string(d: &Decl) -> String {
    let mut out = String::new();
    match d {
        Decl::Function(f) => {
            out.push_str("function ");
            write_attrs(&mut out, &f.attrs);
            out.push_str(&f.name.name);
            write_params(&mut out, &f.params);
            let _ = writeln!(out, ": {}", f.ret);
            for r in &f.requires {
                out.push_str("  requires ");
                write_expr(&mut out, r);
                out.push('\n');
            }
            if !f.decreases.is_empty() {
                out.push_str("  decreases ");
                write_list(&mut out, &f.decreases);
                out.push('\n');
            }
            out.push_str("{\n  ");
            write_expr(&mut out, &f.body);
            out.push_str("\n}\n");
        }
        Decl::Method(m) => {
            out.push_str("method ");
            write_attrs(&mut out, &m.attrs);
            out.push_str(&m.name.name);
            write_params(&mut out, &m.params);
            if !m.returns.is_empty() {
                out.push_str(" returns ");
                write_params(&mut out, &m.returns);
            }
            out.push('\n');
            for r in &m.requires {
                out.push_str("  requires ");
                write_expr(&mut out, r);
                out.push('\n');
            }
            for e in &m.ensures {
                out.push_str("  ensures ");
                write_expr(&mut out, e);
                out.push('\n');
            }
            if !m.decreases.is_empty() {
                out.push_str("  decreases ");
                write_list(&mut out, &m.decreases);
                out.push('\n');
            }
            write_block(&mut out, &m.body, 0);
            out.push('\n');
        }
    }
    out
}

pub fn program_to_string(decls: &[Decl]) -> String {
    decls
        .iter()
        .map(decl_to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_expr;
    use super::*;

    fn roundtrip(src: &str) -> String {
        expr_to_string(&parse_expr(src).unwrap())
    }

    #[test]
    fn parenthesizes_by_precedence() {
        assert_eq!(roundtrip("(a + b) * c"), "(a + b) * c");
        assert_eq!(roundtrip("a + b * c"), "a + b * c");
        assert_eq!(roundtrip("a - (b - c)"), "a - (b - c)");
        assert_eq!(roundtrip("(a ==> b) ==> c"), "(a ==> b) ==> c");
        assert_eq!(roundtrip("a ==> b ==> c"), "a ==> b ==> c");
        assert_eq!(roundtrip("!(a && b)"), "!(a && b)");
        assert_eq!(roundtrip("-(-x)"), "--x");
    }

    #[test]
    fn comparisons_inside_comparisons_keep_parens() {
        assert_eq!(roundtrip("(a < b) == c"), "(a < b) == c");
        assert_eq!(roundtrip("a < b == c"), "a < b == c");
    }

    #[test]
    fn forall_body_keeps_implication() {
        let s = "forall i :: 0 <= i < n ==> (a[i] == 0 ==> b)";
        assert_eq!(roundtrip(s), "forall i :: 0 <= i < n ==> a[i] == 0 ==> b");
    }
}
