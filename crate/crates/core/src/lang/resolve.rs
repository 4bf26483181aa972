//! Name resolution and type checking. Produces the direct-dependency call
//! graph between entities and the hover map.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use super::ast::*;
use super::diagnostic::Diagnostic;
use super::hover::{HoverInfo, HoverMap};
use super::span::Span;
use super::{entities_of, CallGraph, EntityId, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarKind {
    Param,
    OutParam,
    Local,
    Bound,
}

impl VarKind {
    fn label(self) -> &'static str {
        match self {
            VarKind::Param => "parameter",
            VarKind::OutParam => "out parameter",
            VarKind::Local => "local variable",
            VarKind::Bound => "bound variable",
        }
    }
}

#[derive(Clone, Debug)]
struct Var {
    name: String,
    ty: Type,
    kind: VarKind,
}

#[derive(Clone, Copy, Default)]
struct ExprCtx {
    allow_old: bool,
    in_old: bool,
}

/// Signature text shown when hovering a declaration or a call.
pub fn signature(decl: &Decl) -> String {
    let params = |ps: &[Param]| {
        ps.iter()
            .map(|p| format!("{}: {}", p.name.name, p.ty))
            .collect::<Vec<_>>()
            .join(", ")
    };
    match decl {
        Decl::Function(f) => format!("function {}({}): {}", f.name.name, params(&f.params), f.ret),
        Decl::Method(m) if m.returns.is_empty() => {
            format!("method {}({})", m.name.name, params(&m.params))
        }
        Decl::Method(m) => format!(
            "method {}({}) returns ({})",
            m.name.name,
            params(&m.params),
            params(&m.returns)
        ),
    }
}

/// Default termination measure: the integer parameters in declaration order.
pub fn default_decreases(params: &[Param]) -> Vec<&Param> {
    params.iter().filter(|p| p.ty == Type::Int).collect()
}

struct Resolver<'a> {
    functions: HashMap<&'a str, &'a Function>,
    methods: HashMap<&'a str, &'a Method>,
    diags: Vec<Diagnostic>,
    hover: HoverMap,
    scopes: Vec<Vec<Var>>,
    /// Entity whose dependencies are currently being collected.
    current: Option<EntityId>,
    graph: CallGraph,
    /// Method whose body is being checked, for call classification.
    current_method: Option<&'a str>,
    /// Self-calls in method bodies: (method, callee span, tail position).
    self_calls: Vec<(String, Span, bool)>,
    /// Function-to-function call sites: (caller, callee, callee span).
    function_calls: Vec<(String, String, Span)>,
}

pub fn resolve(mut program: Program) -> Program {
    let mut diags = std::mem::take(&mut program.diagnostics);

    // Unique names across functions and methods; later duplicates are dropped.
    let mut seen = HashSet::new();
    let mut decls = Vec::new();
    for d in program.decls.drain(..) {
        let name = d.name();
        if !seen.insert(name.name.clone()) {
            diags.push(Diagnostic::name(
                name.span,
                format!("duplicate declaration of '{}'", name.name),
            ));
            continue;
        }
        decls.push(d);
    }

    // `x := M(args)` parses as an assignment; when M is a method it is a call.
    let method_names: HashSet<String> = decls
        .iter()
        .filter_map(|d| match d {
            Decl::Method(m) => Some(m.name.name.clone()),
            _ => None,
        })
        .collect();
    let decls: Vec<Decl> = decls
        .into_iter()
        .map(|d| match d {
            Decl::Method(m) if block_needs_rewrite(&m.body, &method_names) => {
                let mut m = (*m).clone();
                rewrite_block(&mut m.body, &method_names);
                Decl::Method(Arc::new(m))
            }
            d => d,
        })
        .collect();

    let mut r = Resolver {
        functions: HashMap::new(),
        methods: HashMap::new(),
        diags: Vec::new(),
        hover: HoverMap::default(),
        scopes: Vec::new(),
        current: None,
        graph: BTreeMap::new(),
        current_method: None,
        self_calls: Vec::new(),
        function_calls: Vec::new(),
    };
    for d in &decls {
        match d {
            Decl::Function(f) => {
                r.functions.insert(&f.name.name, f);
            }
            Decl::Method(m) => {
                r.methods.insert(&m.name.name, m);
            }
        }
    }
    for d in &decls {
        match d {
            Decl::Function(f) => r.function(f),
            Decl::Method(m) => r.method(m),
        }
    }
    r.decl_hovers(&decls);

    let Resolver {
        diags: found,
        graph,
        hover,
        ..
    } = r;
    diags.extend(found);
    diags.sort_by_key(|d| d.span);
    Program {
        entities: entities_of(&decls),
        decls,
        call_graph: graph,
        hover,
        diagnostics: diags,
        resolved: true,
    }
}

fn block_needs_rewrite(b: &Block, methods: &HashSet<String>) -> bool {
    let mut found = false;
    b.walk_stmts(&mut |s| {
        if let StmtKind::Assign { value, .. } = &s.kind {
            if matches!(&value.kind, ExprKind::Call { callee, .. } if methods.contains(&callee.name))
            {
                found = true;
            }
        }
    });
    found
}

fn rewrite_block(b: &mut Block, methods: &HashSet<String>) {
    for s in &mut b.stmts {
        rewrite_stmt(s, methods);
    }
}

fn rewrite_stmt(s: &mut Stmt, methods: &HashSet<String>) {
    match &mut s.kind {
        StmtKind::Assign { target, value } => {
            if let ExprKind::Call { callee, args } = &value.kind {
                if methods.contains(&callee.name) {
                    s.kind = StmtKind::Call {
                        targets: vec![target.clone()],
                        callee: callee.clone(),
                        args: args.clone(),
                    };
                }
            }
        }
        StmtKind::If {
            then_branch,
            else_branch,
            ..
        } => {
            rewrite_block(then_branch, methods);
            match else_branch {
                Some(Else::Block(b)) => rewrite_block(b, methods),
                Some(Else::If(s)) => rewrite_stmt(s, methods),
                None => {}
            }
        }
        StmtKind::While { body, .. } => rewrite_block(body, methods),
        _ => {}
    }
}

impl<'a> Resolver<'a> {
    fn err(&mut self, d: Diagnostic) {
        self.diags.push(d);
    }

    fn edge(&mut self, to: EntityId) {
        if let Some(from) = &self.current {
            self.graph.entry(from.clone()).or_default().insert(to);
        }
    }

    fn enter(&mut self, id: EntityId) {
        self.graph.entry(id.clone()).or_default();
        self.current = Some(id);
    }

    fn lookup(&self, name: &str) -> Option<&Var> {
        self.scopes.iter().rev().flat_map(|s| s.iter()).find(|v| v.name == name)
    }

    fn declare(&mut self, id: &Ident, ty: Type, kind: VarKind) {
        if self.lookup(&id.name).is_some() {
            self.err(Diagnostic::name(
                id.span,
                format!("'{}' is already declared", id.name),
            ));
        }
        self.hover.insert(
            id.span,
            HoverInfo::variable(format!("({}) {}: {}", kind.label(), id.name, ty), &id.name),
        );
        self.scopes
            .last_mut()
            .expect("scope")
            .push(Var {
                name: id.name.clone(),
                ty,
                kind,
            });
    }

    fn declare_use(&mut self, id: &Ident, at: Span) {
        if let Some(v) = self.lookup(&id.name).cloned() {
            self.hover.insert(
                at,
                HoverInfo::variable(format!("({}) {}: {}", v.kind.label(), v.name, v.ty), &v.name),
            );
        }
    }

    fn attributes(&mut self, attrs: &[Attribute]) {
        for a in attrs {
            self.hover
                .insert(a.name.span, HoverInfo::text(format!("(attribute) {}", a.name.name)));
            for arg in &a.args {
                if !matches!(arg.kind, ExprKind::Int(_) | ExprKind::Bool(_)) {
                    self.err(Diagnostic::ty(arg.span, "attribute arguments must be literals"));
                }
            }
            if a.name.name == "timeLimit"
                && !matches!(a.args.as_slice(), [Expr { kind: ExprKind::Int(n), .. }] if *n > 0)
            {
                self.err(Diagnostic::ty(
                    a.span,
                    "timeLimit expects one positive integer (seconds)",
                ));
            }
        }
    }

    fn function(&mut self, f: &'a Function) {
        self.enter(EntityId::function(&f.name.name));
        self.current_method = None;
        self.attributes(&f.attrs);
        if f.ret == Type::IntArray {
            self.err(Diagnostic::ty(f.name.span, "functions cannot return arrays"));
        }
        self.scopes = vec![Vec::new()];
        for p in &f.params {
            self.declare(&p.name, p.ty, VarKind::Param);
        }
        let ctx = ExprCtx::default();
        for e in &f.requires {
            self.expect_type(e, Type::Bool, ctx, "requires clause");
        }
        for e in &f.decreases {
            self.expect_type(e, Type::Int, ctx, "decreases expression");
        }
        self.expect_type(&f.body, f.ret, ctx, "function body");
        self.scopes.clear();
    }

    fn method(&mut self, m: &'a Method) {
        let name = m.name.name.as_str();
        self.enter(EntityId::method_spec(name));
        self.current_method = Some(name);
        self.attributes(&m.attrs);
        self.scopes = vec![Vec::new()];
        for p in &m.params {
            self.declare(&p.name, p.ty, VarKind::Param);
        }
        let plain = ExprCtx::default();
        for e in &m.requires {
            self.expect_type(e, Type::Bool, plain, "requires clause");
        }
        for e in &m.decreases {
            self.expect_type(e, Type::Int, plain, "decreases expression");
        }
        self.scopes.push(Vec::new());
        for p in &m.returns {
            if p.ty == Type::IntArray {
                self.err(Diagnostic::ty(p.span, "array results are not supported"));
            }
            self.declare(&p.name, p.ty, VarKind::OutParam);
        }
        let post = ExprCtx {
            allow_old: true,
            in_old: false,
        };
        for e in &m.ensures {
            self.expect_type(e, Type::Bool, post, "ensures clause");
        }

        self.enter(EntityId::method_body(name));
        self.edge(EntityId::method_spec(name));
        self.block(&m.body, true);
        self.scopes.clear();
        self.current_method = None;
    }

    fn block(&mut self, b: &Block, tail: bool) {
        self.scopes.push(Vec::new());
        for (i, s) in b.stmts.iter().enumerate() {
            let last = i + 1 == b.stmts.len();
            let before_return = matches!(b.stmts.get(i + 1), Some(Stmt { kind: StmtKind::Return, .. }));
            self.stmt(s, (tail && last) || before_return);
        }
        self.scopes.pop();
    }

    fn assignable(&mut self, target: &Ident) -> Option<Type> {
        let Some(v) = self.lookup(&target.name).cloned() else {
            self.err(Diagnostic::name(
                target.span,
                format!("unknown identifier '{}'", target.name),
            ));
            return None;
        };
        self.hover.insert(
            target.span,
            HoverInfo::variable(
                format!("({}) {}: {}", v.kind.label(), v.name, v.ty),
                &v.name,
            ),
        );
        match v.kind {
            VarKind::Local | VarKind::OutParam => Some(v.ty),
            _ => {
                self.err(Diagnostic::ty(
                    target.span,
                    format!("cannot assign to {} '{}'", v.kind.label(), v.name),
                ));
                None
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, tail: bool) {
        let ctx = ExprCtx::default();
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => {
                if let ExprKind::Call { callee, .. } = &init.kind {
                    if self.methods.contains_key(callee.name.as_str()) {
                        self.err(Diagnostic::ty(
                            init.span,
                            "method calls cannot initialize a 'var'; declare the variable first",
                        ));
                    }
                }
                let t = self.expr(init, ctx);
                let declared = match (ty, t) {
                    (Some(d), Some(t)) if *d != t => {
                        self.err(Diagnostic::ty(
                            init.span,
                            format!("expected {d}, found {t}"),
                        ));
                        *d
                    }
                    (Some(d), _) => *d,
                    (None, Some(t)) => t,
                    (None, None) => Type::Int,
                };
                self.declare(name, declared, VarKind::Local);
            }
            StmtKind::Assign { target, value } => {
                let vt = self.expr(value, ctx);
                if let (Some(tt), Some(vt)) = (self.assignable(target), vt) {
                    if tt != vt {
                        self.err(Diagnostic::ty(value.span, format!("expected {tt}, found {vt}")));
                    }
                }
            }
            StmtKind::ArrayAssign {
                array,
                index,
                value,
            } => {
                match self.lookup(&array.name).cloned() {
                    None => self.err(Diagnostic::name(
                        array.span,
                        format!("unknown identifier '{}'", array.name),
                    )),
                    Some(v) => {
                        self.hover.insert(
                            array.span,
                            HoverInfo::variable(
                                format!("({}) {}: {}", v.kind.label(), v.name, v.ty),
                                &v.name,
                            ),
                        );
                        if v.ty != Type::IntArray {
                            self.err(Diagnostic::ty(
                                array.span,
                                format!("'{}' is not an array", v.name),
                            ));
                        }
                    }
                }
                self.expect_type(index, Type::Int, ctx, "array index");
                self.expect_type(value, Type::Int, ctx, "array element");
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expect_type(cond, Type::Bool, ctx, "condition");
                self.block(then_branch, tail);
                match else_branch {
                    Some(Else::Block(b)) => self.block(b, tail),
                    Some(Else::If(s)) => self.stmt(s, tail),
                    None => {}
                }
            }
            StmtKind::While {
                cond,
                invariants,
                decreases,
                body,
            } => {
                self.expect_type(cond, Type::Bool, ctx, "loop condition");
                for e in invariants {
                    self.expect_type(e, Type::Bool, ctx, "loop invariant");
                }
                for e in decreases {
                    self.expect_type(e, Type::Int, ctx, "decreases expression");
                }
                self.block(body, false);
            }
            StmtKind::Call {
                targets,
                callee,
                args,
            } => self.call_stmt(targets, callee, args, tail),
            StmtKind::Assert(e) | StmtKind::Assume(e) => {
                self.expect_type(e, Type::Bool, ctx, "assertion");
            }
            StmtKind::Return => {}
        }
    }

    fn call_stmt(&mut self, targets: &[Ident], callee: &Ident, args: &[Expr], tail: bool) {
        let arg_types: Vec<Option<Type>> =
            args.iter().map(|a| self.expr(a, ExprCtx::default())).collect();
        let Some(&m) = self.methods.get(callee.name.as_str()) else {
            if self.functions.contains_key(callee.name.as_str()) {
                self.err(Diagnostic::ty(
                    callee.span,
                    format!("function '{}' cannot be called as a statement", callee.name),
                ));
            } else {
                self.err(Diagnostic::name(
                    callee.span,
                    format!("unknown method '{}'", callee.name),
                ));
            }
            for t in targets {
                self.assignable(t);
            }
            return;
        };
        self.edge(EntityId::method_spec(&m.name.name));
        let is_self = self.current_method == Some(m.name.name.as_str());
        let hover = if is_self {
            self.self_calls.push((m.name.name.clone(), callee.span, tail));
            if tail {
                "tail-recursive call".to_string()
            } else {
                "recursive call".to_string()
            }
        } else {
            signature(&Decl::Method(Arc::new(m.clone())))
        };
        self.hover.insert(callee.span, HoverInfo::text(hover));
        self.check_args(callee, &m.params, args, &arg_types);
        if targets.len() != m.returns.len() {
            self.err(Diagnostic::ty(
                callee.span,
                format!(
                    "method '{}' returns {} value(s) but {} target(s) are given",
                    m.name.name,
                    m.returns.len(),
                    targets.len()
                ),
            ));
        }
        let mut seen = HashSet::new();
        for (i, t) in targets.iter().enumerate() {
            if !seen.insert(&t.name) {
                self.err(Diagnostic::ty(t.span, format!("'{}' is assigned twice", t.name)));
            }
            if let (Some(tt), Some(r)) = (self.assignable(t), m.returns.get(i)) {
                if tt != r.ty {
                    self.err(Diagnostic::ty(t.span, format!("expected {}, found {}", tt, r.ty)));
                }
            }
        }
    }

    fn check_args(&mut self, callee: &Ident, params: &[Param], args: &[Expr], types: &[Option<Type>]) {
        if params.len() != args.len() {
            self.err(Diagnostic::ty(
                callee.span,
                format!(
                    "'{}' expects {} argument(s), found {}",
                    callee.name,
                    params.len(),
                    args.len()
                ),
            ));
            return;
        }
        for ((p, a), t) in params.iter().zip(args).zip(types) {
            if let Some(t) = t {
                if *t != p.ty {
                    self.err(Diagnostic::ty(a.span, format!("expected {}, found {}", p.ty, t)));
                }
            }
        }
    }

    fn expect_type(&mut self, e: &Expr, want: Type, ctx: ExprCtx, what: &str) {
        if let Some(t) = self.expr(e, ctx) {
            if t != want {
                self.err(Diagnostic::ty(e.span, format!("{what} must be {want}, found {t}")));
            }
        }
    }

    fn expr(&mut self, e: &Expr, ctx: ExprCtx) -> Option<Type> {
        match &e.kind {
            ExprKind::Int(_) => Some(Type::Int),
            ExprKind::Bool(_) => Some(Type::Bool),
            ExprKind::Var(name) => match self.lookup(name).cloned() {
                Some(v) => {
                    self.hover.insert(
                        e.span,
                        HoverInfo::variable(
                            format!("({}) {}: {}", v.kind.label(), v.name, v.ty),
                            &v.name,
                        ),
                    );
                    Some(v.ty)
                }
                None => {
                    self.err(Diagnostic::name(e.span, format!("unknown identifier '{name}'")));
                    None
                }
            },
            ExprKind::Unary(op, inner) => {
                let want = match op {
                    UnOp::Not => Type::Bool,
                    UnOp::Neg => Type::Int,
                };
                self.expect_type(inner, want, ctx, &format!("operand of '{}'", op.symbol()));
                Some(want)
            }
            ExprKind::Binary(op, a, b) => {
                let (operand, result) = match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                        (Type::Int, Type::Int)
                    }
                    BinOp::And | BinOp::Or | BinOp::Implies => (Type::Bool, Type::Bool),
                };
                let what = format!("operand of '{}'", op.symbol());
                self.expect_type(a, operand, ctx, &what);
                self.expect_type(b, operand, ctx, &what);
                Some(result)
            }
            ExprKind::Compare { operands, ops } => {
                let types: Vec<Option<Type>> =
                    operands.iter().map(|o| self.expr(o, ctx)).collect();
                for (i, op) in ops.iter().enumerate() {
                    let (Some(l), Some(r)) = (types[i], types[i + 1]) else {
                        continue;
                    };
                    let ok = match op {
                        CmpOp::Eq | CmpOp::Ne => l == r && l != Type::IntArray,
                        _ => l == Type::Int && r == Type::Int,
                    };
                    if !ok {
                        self.err(Diagnostic::ty(
                            operands[i].span.join(operands[i + 1].span),
                            format!("cannot compare {l} {} {r}", op.symbol()),
                        ));
                    }
                }
                Some(Type::Bool)
            }
            ExprKind::Index(a, i) => {
                self.expect_type(a, Type::IntArray, ctx, "indexed expression");
                self.expect_type(i, Type::Int, ctx, "array index");
                Some(Type::Int)
            }
            ExprKind::Length(a, field) => {
                self.hover.insert(*field, HoverInfo::text("(field) Length: int"));
                self.expect_type(a, Type::IntArray, ctx, "'.Length' receiver");
                Some(Type::Int)
            }
            ExprKind::Call { callee, args } => {
                let arg_types: Vec<Option<Type>> =
                    args.iter().map(|a| self.expr(a, ctx)).collect();
                if let Some(&f) = self.functions.get(callee.name.as_str()) {
                    self.edge(EntityId::function(&f.name.name));
                    if let Some(EntityId { name, kind: super::EntityKind::FunctionDef }) =
                        &self.current
                    {
                        self.function_calls
                            .push((name.clone(), f.name.name.clone(), callee.span));
                    } else {
                        self.hover.insert(
                            callee.span,
                            HoverInfo::text(signature(&Decl::Function(Arc::new(f.clone())))),
                        );
                    }
                    self.check_args(callee, &f.params, args, &arg_types);
                    Some(f.ret)
                } else if self.methods.contains_key(callee.name.as_str()) {
                    self.err(Diagnostic::ty(
                        callee.span,
                        format!(
                            "method '{}' cannot be called in an expression; use a call statement",
                            callee.name
                        ),
                    ));
                    None
                } else {
                    self.err(Diagnostic::name(
                        callee.span,
                        format!("unknown function '{}'", callee.name),
                    ));
                    None
                }
            }
            ExprKind::Old(inner) => {
                if !ctx.allow_old {
                    self.err(Diagnostic::ty(e.span, "old() is only allowed in ensures clauses"));
                } else if ctx.in_old {
                    self.err(Diagnostic::ty(e.span, "old() cannot be nested"));
                }
                self.expr(
                    inner,
                    ExprCtx {
                        allow_old: ctx.allow_old,
                        in_old: true,
                    },
                )
            }
            ExprKind::Forall {
                var,
                var_use,
                lower,
                upper,
                body,
                ..
            } => {
                self.expect_type(lower, Type::Int, ctx, "quantifier bound");
                self.expect_type(upper, Type::Int, ctx, "quantifier bound");
                self.scopes.push(Vec::new());
                self.declare(var, Type::Int, VarKind::Bound);
                self.declare_use(var, *var_use);
                self.expect_type(body, Type::Bool, ctx, "quantifier body");
                self.scopes.pop();
                Some(Type::Bool)
            }
        }
    }

    /// Hover entries that need whole-program knowledge: recursion, default
    /// termination measures and tail recursion.
    fn decl_hovers(&mut self, decls: &[Decl]) {
        let calls = std::mem::take(&mut self.function_calls);
        let fn_graph: HashMap<&str, BTreeSet<&str>> = {
            let mut g: HashMap<&str, BTreeSet<&str>> = HashMap::new();
            for (from, to, _) in &calls {
                g.entry(from.as_str()).or_default().insert(to.as_str());
            }
            g
        };
        let reaches = |from: &str, to: &str| -> bool {
            let mut stack = vec![from];
            let mut seen = HashSet::new();
            while let Some(n) = stack.pop() {
                for &m in fn_graph.get(n).into_iter().flatten() {
                    if m == to {
                        return true;
                    }
                    if seen.insert(m) {
                        stack.push(m);
                    }
                }
            }
            false
        };
        for (caller, callee, span) in &calls {
            let text = if reaches(callee, caller) {
                "recursive call".to_string()
            } else {
                let f = self.functions[callee.as_str()];
                signature(&Decl::Function(Arc::new(f.clone())))
            };
            self.hover.insert(*span, HoverInfo::text(text));
        }

        for d in decls {
            let mut text = signature(d);
            let name = d.name();
            let (recursive, params, explicit) = match d {
                Decl::Function(f) => (reaches(&name.name, &name.name), &f.params, !f.decreases.is_empty()),
                Decl::Method(m) => (
                    self.self_calls.iter().any(|(n, _, _)| *n == name.name),
                    &m.params,
                    !m.decreases.is_empty(),
                ),
            };
            if recursive && !explicit {
                let measure: Vec<&str> = default_decreases(params)
                    .iter()
                    .map(|p| p.name.name.as_str())
                    .collect();
                let measure = if measure.is_empty() {
                    "(none)".to_string()
                } else {
                    measure.join(", ")
                };
                text.push_str(&format!("\ndecreases (default): {measure}"));
            }
            if let Decl::Method(_) = d {
                let mut own = self.self_calls.iter().filter(|(n, _, _)| *n == name.name).peekable();
                if own.peek().is_some() && own.all(|(_, _, tail)| *tail) {
                    text.push_str("\ntail recursive");
                }
            }
            self.hover.insert(name.span, HoverInfo::text(text));
        }
    }
}
