//! The bounded interpreter behind the prover and the concrete oracle.
//!
//! Nondeterminism only arises at method calls in modular mode, where the
//! callee's outputs are chosen among all bounded states satisfying its
//! ensures. Paths are explored by re-execution: a run follows a prefix of
//! recorded choices, takes branch 0 beyond it, and the next prefix is the
//! last choice with an untried alternative. Failing paths are re-run with
//! tracing switched on, so the fast path never builds trace states.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use super::{
    Binding, Bounds, Obligation, ProveCtx, ProveOutcome, Trace, TraceState, Value,
    VerificationError, VerificationUnit, Verdict,
};
use crate::lang::ast::*;
use crate::lang::{Pos, Program, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Val {
    Int(i64),
    Bool(bool),
    Arr(usize),
}

impl Val {
    fn as_int(self) -> i64 {
        match self {
            Val::Int(n) => n,
            Val::Bool(b) => b as i64,
            Val::Arr(_) => 0,
        }
    }

    fn truthy(self) -> bool {
        matches!(self, Val::Bool(true))
    }
}

#[derive(Clone, Debug)]
struct Fault {
    span: Span,
    message: String,
    related: Vec<Span>,
}

enum Halt {
    Fault(Fault),
    /// The path ends without error: `assume false`, an empty set of call
    /// outcomes, or a fault that belongs to another unit.
    Prune,
}

type R<T> = Result<T, Halt>;

enum Flow {
    Next,
    Return(Span),
}

type Env<'p> = Vec<(&'p str, Val)>;

#[derive(Clone, Copy, Default)]
struct Cx<'c> {
    old_heap: Option<&'c [Vec<i64>]>,
    in_old: bool,
    /// Function being evaluated and its decreases tuple, when its body may
    /// call back into it.
    cur_fn: Option<(&'c str, &'c [i64])>,
}

#[derive(Clone)]
struct Candidate {
    outs: Vec<Val>,
    /// (argument position, new contents)
    arrays: Vec<(usize, Vec<i64>)>,
}

type Memo = HashMap<(usize, Vec<i64>), Rc<Vec<Candidate>>>;

/// Per-unit state shared by every path.
struct UnitCx<'p> {
    prog: &'p Program,
    bounds: Bounds,
    /// Modular mode: faults outside this span end the path quietly.
    unit_span: Option<Span>,
    /// Function name → functions reachable through calls.
    reaches: HashMap<&'p str, HashSet<&'p str>>,
    memo: RefCell<Memo>,
    int_domain: Vec<i64>,
}

impl<'p> UnitCx<'p> {
    fn new(prog: &'p Program, bounds: Bounds, unit_span: Option<Span>) -> Self {
        UnitCx {
            prog,
            bounds,
            unit_span,
            reaches: function_reachability(prog),
            memo: RefCell::default(),
            int_domain: (bounds.int_low..=bounds.int_high).collect(),
        }
    }

    fn recursive(&self, caller: &str, callee: &str) -> bool {
        caller == callee || self.reaches.get(callee).is_some_and(|r| r.contains(caller))
    }
}

fn function_reachability(prog: &Program) -> HashMap<&str, HashSet<&str>> {
    let mut direct: HashMap<&str, Vec<&str>> = HashMap::new();
    for d in &prog.decls {
        if let Decl::Function(f) = d {
            let mut callees: Vec<&str> = Vec::new();
            for e in f.requires.iter().chain(&f.decreases).chain([&f.body]) {
                e.walk(&mut |x| {
                    if let ExprKind::Call { callee, .. } = &x.kind {
                        callees.push(callee.name.as_str());
                    }
                });
            }
            direct.insert(f.name.name.as_str(), callees);
        }
    }
    let mut out = HashMap::new();
    for &start in direct.keys() {
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = direct[start].clone();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                if let Some(next) = direct.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        out.insert(start, seen);
    }
    out
}

/// Lexicographic decrease on the first differing component, which must be
/// non-negative before the step.
fn decreases_ok(before: &[i64], after: &[i64]) -> bool {
    for (b, a) in before.iter().zip(after) {
        if a != b {
            return *b >= 0 && a < b;
        }
    }
    false
}

#[derive(Default)]
struct Chooser {
    prefix: Vec<u32>,
    taken: Vec<(u32, u32)>,
}

impl Chooser {
    fn choose(&mut self, arity: u32) -> u32 {
        let i = self.taken.len();
        let c = self.prefix.get(i).copied().filter(|c| *c < arity).unwrap_or(0);
        self.taken.push((c, arity));
        c
    }

    fn choices(&self) -> Vec<u32> {
        self.taken.iter().map(|(c, _)| *c).collect()
    }

    /// The next unexplored prefix after this run, if any.
    fn next_prefix(&self) -> Option<Vec<u32>> {
        let mut t = self.taken.clone();
        while let Some((c, n)) = t.pop() {
            if c + 1 < n {
                let mut p: Vec<u32> = t.iter().map(|(c, _)| *c).collect();
                p.push(c + 1);
                return Some(p);
            }
        }
        None
    }
}

struct Interp<'p, 'u> {
    u: &'u UnitCx<'p>,
    heap: Vec<Vec<i64>>,
    steps: u64,
    chooser: Chooser,
    trace: Option<Vec<TraceState>>,
    fault_recorded: bool,
}

fn default_val(t: Type) -> Val {
    match t {
        Type::Bool => Val::Bool(false),
        _ => Val::Int(0),
    }
}

fn lookup(env: &Env<'_>, name: &str) -> Option<Val> {
    env.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

pub(crate) fn entry_point(b: &Block) -> Span {
    let s = b.span.start();
    Span::new(s, Pos::new(s.line, s.col + 1))
}

impl<'p, 'u> Interp<'p, 'u> {
    fn new(u: &'u UnitCx<'p>, prefix: Vec<u32>, tracing: bool) -> Self {
        Interp {
            u,
            heap: Vec::new(),
            steps: 0,
            chooser: Chooser {
                prefix,
                taken: Vec::new(),
            },
            trace: tracing.then(Vec::new),
            fault_recorded: false,
        }
    }

    fn fault(&self, span: Span, message: impl Into<String>, related: Vec<Span>) -> Halt {
        match self.u.unit_span {
            Some(us) if !us.contains(&span) => Halt::Prune,
            _ => Halt::Fault(Fault {
                span,
                message: message.into(),
                related,
            }),
        }
    }

    fn tick(&mut self, span: Span) -> R<()> {
        self.steps += 1;
        if self.steps > self.u.bounds.max_steps {
            return Err(self.fault(span, "step budget exceeded", vec![]));
        }
        Ok(())
    }

    fn render(&self, v: Val) -> Value {
        match v {
            Val::Int(n) => Value::Int(n),
            Val::Bool(b) => Value::Bool(b),
            Val::Arr(i) => Value::Array(self.heap[i].clone()),
        }
    }

    fn record(&mut self, location: Span, env: &Env<'_>) {
        if self.trace.is_none() {
            return;
        }
        let bindings = env
            .iter()
            .map(|(n, v)| Binding {
                name: n.to_string(),
                value: self.render(*v),
            })
            .collect();
        if let Some(t) = &mut self.trace {
            t.push(TraceState { location, bindings });
        }
    }

    fn record_fault(&mut self, r: &R<impl Sized>, env: &Env<'_>) {
        if let Err(Halt::Fault(f)) = r {
            if self.trace.is_some() && !self.fault_recorded {
                self.fault_recorded = true;
                self.record(f.span, env);
            }
        }
    }

    fn alloc(&mut self, v: &Value) -> Val {
        match v {
            Value::Int(n) => Val::Int(*n),
            Value::Bool(b) => Val::Bool(*b),
            Value::Array(xs) => {
                self.heap.push(xs.clone());
                Val::Arr(self.heap.len() - 1)
            }
        }
    }

    fn bind(&mut self, params: &'p [Param], inputs: &[Value]) -> Env<'p> {
        params
            .iter()
            .zip(inputs)
            .map(|(p, v)| (p.name.name.as_str(), self.alloc(v)))
            .collect()
    }

    fn array<'a>(&'a self, idx: usize, cx: &Cx<'a>) -> &'a [i64] {
        match (cx.in_old, cx.old_heap) {
            (true, Some(h)) => &h[idx],
            _ => &self.heap[idx],
        }
    }

    fn eval_bool(&mut self, e: &'p Expr, env: &mut Env<'p>, cx: &Cx<'_>) -> R<bool> {
        Ok(self.eval(e, env, cx)?.truthy())
    }

    fn eval_int(&mut self, e: &'p Expr, env: &mut Env<'p>, cx: &Cx<'_>) -> R<i64> {
        Ok(self.eval(e, env, cx)?.as_int())
    }

    fn eval(&mut self, e: &'p Expr, env: &mut Env<'p>, cx: &Cx<'_>) -> R<Val> {
        self.tick(e.span)?;
        match &e.kind {
            ExprKind::Int(n) => Ok(Val::Int(*n)),
            ExprKind::Bool(b) => Ok(Val::Bool(*b)),
            ExprKind::Var(name) => lookup(env, name)
                .ok_or_else(|| self.fault(e.span, format!("unbound variable '{name}'"), vec![])),
            ExprKind::Unary(op, a) => {
                let v = self.eval(a, env, cx)?;
                match op {
                    UnOp::Not => Ok(Val::Bool(!v.truthy())),
                    UnOp::Neg => v
                        .as_int()
                        .checked_neg()
                        .map(Val::Int)
                        .ok_or_else(|| self.fault(e.span, "arithmetic overflow", vec![])),
                }
            }
            ExprKind::Binary(op, a, b) => {
                match op {
                    BinOp::And => {
                        return Ok(Val::Bool(
                            self.eval_bool(a, env, cx)? && self.eval_bool(b, env, cx)?,
                        ))
                    }
                    BinOp::Or => {
                        return Ok(Val::Bool(
                            self.eval_bool(a, env, cx)? || self.eval_bool(b, env, cx)?,
                        ))
                    }
                    BinOp::Implies => {
                        return Ok(Val::Bool(
                            !self.eval_bool(a, env, cx)? || self.eval_bool(b, env, cx)?,
                        ))
                    }
                    _ => {}
                }
                let x = self.eval_int(a, env, cx)?;
                let y = self.eval_int(b, env, cx)?;
                let r = match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Mul => x.checked_mul(y),
                    BinOp::Div | BinOp::Mod if y == 0 => {
                        let what = if *op == BinOp::Div { "division" } else { "modulus" };
                        return Err(self.fault(e.span, format!("possible {what} by zero"), vec![]));
                    }
                    BinOp::Div => x.checked_div_euclid(y),
                    BinOp::Mod => x.checked_rem_euclid(y),
                    BinOp::And | BinOp::Or | BinOp::Implies => unreachable!(),
                };
                r.map(Val::Int)
                    .ok_or_else(|| self.fault(e.span, "arithmetic overflow", vec![]))
            }
            ExprKind::Compare { operands, ops } => {
                let mut vals = Vec::with_capacity(operands.len());
                for o in operands {
                    vals.push(self.eval(o, env, cx)?);
                }
                let ok = ops.iter().enumerate().all(|(i, op)| {
                    let (l, r) = (vals[i], vals[i + 1]);
                    match op {
                        CmpOp::Eq => l == r,
                        CmpOp::Ne => l != r,
                        _ => op.eval(l.as_int(), r.as_int()),
                    }
                });
                Ok(Val::Bool(ok))
            }
            ExprKind::Index(a, i) => {
                let Val::Arr(idx) = self.eval(a, env, cx)? else {
                    return Err(self.fault(e.span, "indexing a non-array", vec![]));
                };
                let i = self.eval_int(i, env, cx)?;
                let arr = self.array(idx, cx);
                match usize::try_from(i).ok().and_then(|i| arr.get(i)) {
                    Some(v) => Ok(Val::Int(*v)),
                    None => Err(self.fault(e.span, "index out of range", vec![])),
                }
            }
            ExprKind::Length(a, _) => match self.eval(a, env, cx)? {
                Val::Arr(idx) => Ok(Val::Int(self.array(idx, cx).len() as i64)),
                _ => Err(self.fault(e.span, "length of a non-array", vec![])),
            },
            ExprKind::Old(a) => {
                let inner = Cx { in_old: true, ..*cx };
                self.eval(a, env, &inner)
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
                let lo = self.eval_int(lower, env, cx)?;
                let hi = self.eval_int(upper, env, cx)?;
                let first = if *lower_op == CmpOp::Lt { lo.saturating_add(1) } else { lo };
                let last = if *upper_op == CmpOp::Lt { hi.saturating_sub(1) } else { hi };
                let mut all = true;
                let mut i = first;
                while i <= last {
                    env.push((var.name.as_str(), Val::Int(i)));
                    let r = self.eval_bool(body, env, cx);
                    env.pop();
                    all &= r?;
                    i += 1;
                }
                Ok(Val::Bool(all))
            }
            ExprKind::Call { callee, args } => self.call_function(e, callee, args, env, cx),
        }
    }

    fn call_function(
        &mut self,
        e: &'p Expr,
        callee: &'p Ident,
        args: &'p [Expr],
        env: &mut Env<'p>,
        cx: &Cx<'_>,
    ) -> R<Val> {
        let Some(f) = self.u.prog.function(&callee.name) else {
            return Err(self.fault(e.span, format!("unknown function '{}'", callee.name), vec![]));
        };
        let f: &'p Function = f;
        let mut fenv: Env<'p> = Vec::with_capacity(args.len());
        for (p, a) in f.params.iter().zip(args) {
            let v = self.eval(a, env, cx)?;
            fenv.push((p.name.name.as_str(), v));
        }
        let base = Cx {
            cur_fn: None,
            ..*cx
        };
        for r in &f.requires {
            if !self.eval_bool(r, &mut fenv, &base)? {
                return Err(self.fault(
                    e.span,
                    "function precondition might not hold",
                    vec![r.span],
                ));
            }
        }
        let name = f.name.name.as_str();
        let self_recursive = self.u.unit_span.is_some() && self.u.recursive(name, name);
        let dec = if self_recursive {
            Some(self.decreases_tuple(&f.decreases, &f.params, &mut fenv, &base)?)
        } else {
            None
        };
        if let (Some((caller, before)), Some(after)) = (cx.cur_fn, &dec) {
            if self.u.recursive(caller, name) && !decreases_ok(before, after) {
                let related = f.decreases.iter().map(|d| d.span).collect();
                return Err(self.fault(e.span, "cannot prove termination", related));
            }
        }
        let inner = Cx {
            cur_fn: dec.as_deref().map(|d| (name, d)),
            ..base
        };
        self.eval(&f.body, &mut fenv, &inner)
    }

    fn decreases_tuple(
        &mut self,
        explicit: &'p [Expr],
        params: &'p [Param],
        env: &mut Env<'p>,
        cx: &Cx<'_>,
    ) -> R<Vec<i64>> {
        if explicit.is_empty() {
            return Ok(params
                .iter()
                .filter(|p| p.ty == Type::Int)
                .filter_map(|p| lookup(env, &p.name.name))
                .map(Val::as_int)
                .collect());
        }
        explicit.iter().map(|d| self.eval_int(d, env, cx)).collect()
    }

    fn assign(env: &mut Env<'p>, name: &str, v: Val) {
        if let Some(slot) = env.iter_mut().rev().find(|(n, _)| *n == name) {
            slot.1 = v;
        }
    }

    fn exec_block(&mut self, b: &'p Block, fr: &mut Frame<'p>) -> R<Flow> {
        let mark = fr.env.len();
        let mut out = Ok(Flow::Next);
        for s in &b.stmts {
            match self.exec_stmt(s, fr) {
                Ok(Flow::Next) => {}
                other => {
                    out = other;
                    break;
                }
            }
        }
        fr.env.truncate(mark);
        out
    }

    fn exec_stmt(&mut self, s: &'p Stmt, fr: &mut Frame<'p>) -> R<Flow> {
        let r = self.tick(s.span).and_then(|_| self.exec_inner(s, fr));
        self.record_fault(&r, &fr.env);
        r
    }

    fn exec_inner(&mut self, s: &'p Stmt, fr: &mut Frame<'p>) -> R<Flow> {
        let old = fr.old_heap.clone();
        let cx = Cx {
            old_heap: Some(&old),
            ..Cx::default()
        };
        match &s.kind {
            StmtKind::VarDecl { name, init, .. } => {
                let v = self.eval(init, &mut fr.env, &cx)?;
                fr.env.push((name.name.as_str(), v));
            }
            StmtKind::Assign { target, value } => {
                let v = self.eval(value, &mut fr.env, &cx)?;
                Self::assign(&mut fr.env, &target.name, v);
            }
            StmtKind::ArrayAssign {
                array,
                index,
                value,
            } => {
                let Some(Val::Arr(idx)) = lookup(&fr.env, &array.name) else {
                    return Err(self.fault(s.span, "assignment to a non-array", vec![]));
                };
                let i = self.eval_int(index, &mut fr.env, &cx)?;
                let v = self.eval_int(value, &mut fr.env, &cx)?;
                match usize::try_from(i).ok().filter(|i| *i < self.heap[idx].len()) {
                    Some(i) => self.heap[idx][i] = v,
                    None => return Err(self.fault(s.span, "index out of range", vec![])),
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let c = self.eval_bool(cond, &mut fr.env, &cx)?;
                self.record(cond.span, &fr.env);
                return if c {
                    self.exec_block(then_branch, fr)
                } else {
                    match else_branch {
                        Some(Else::Block(b)) => self.exec_block(b, fr),
                        Some(Else::If(s)) => self.exec_stmt(s, fr),
                        None => Ok(Flow::Next),
                    }
                };
            }
            StmtKind::While {
                cond,
                invariants,
                decreases,
                body,
            } => return self.exec_while(cond, invariants, decreases, body, fr),
            StmtKind::Call {
                targets,
                callee,
                args,
            } => self.exec_call(s, targets, callee, args, fr)?,
            StmtKind::Assert(e) => {
                if !self.eval_bool(e, &mut fr.env, &cx)? {
                    return Err(self.fault(s.span, "assertion might not hold", vec![]));
                }
            }
            StmtKind::Assume(e) => {
                if !self.eval_bool(e, &mut fr.env, &cx)? {
                    return Err(Halt::Prune);
                }
            }
            StmtKind::Return => return Ok(Flow::Return(s.span)),
        }
        self.record(s.span, &fr.env);
        Ok(Flow::Next)
    }

    fn exec_while(
        &mut self,
        cond: &'p Expr,
        invariants: &'p [Expr],
        decreases: &'p [Expr],
        body: &'p Block,
        fr: &mut Frame<'p>,
    ) -> R<Flow> {
        let old = fr.old_heap.clone();
        let cx = Cx {
            old_heap: Some(&old),
            ..Cx::default()
        };
        for inv in invariants {
            if !self.eval_bool(inv, &mut fr.env, &cx)? {
                return Err(self.fault(
                    inv.span,
                    "loop invariant might not hold on entry",
                    vec![],
                ));
            }
        }
        loop {
            self.tick(cond.span)?;
            let c = self.eval_bool(cond, &mut fr.env, &cx)?;
            self.record(cond.span, &fr.env);
            if !c {
                return Ok(Flow::Next);
            }
            let before: Vec<i64> = decreases
                .iter()
                .map(|d| self.eval_int(d, &mut fr.env, &cx))
                .collect::<R<_>>()?;
            if let Flow::Return(sp) = self.exec_block(body, fr)? {
                return Ok(Flow::Return(sp));
            }
            for inv in invariants {
                if !self.eval_bool(inv, &mut fr.env, &cx)? {
                    return Err(self.fault(
                        inv.span,
                        "loop invariant might not be maintained by the loop",
                        vec![],
                    ));
                }
            }
            if !decreases.is_empty() {
                let after: Vec<i64> = decreases
                    .iter()
                    .map(|d| self.eval_int(d, &mut fr.env, &cx))
                    .collect::<R<_>>()?;
                if !decreases_ok(&before, &after) {
                    let span = decreases
                        .iter()
                        .map(|d| d.span)
                        .reduce(Span::join)
                        .expect("non-empty");
                    return Err(self.fault(span, "decreases expression might not decrease", vec![]));
                }
            }
        }
    }

    fn exec_call(
        &mut self,
        s: &'p Stmt,
        targets: &'p [Ident],
        callee: &'p Ident,
        args: &'p [Expr],
        fr: &mut Frame<'p>,
    ) -> R<()> {
        let Some(m) = self.u.prog.method(&callee.name) else {
            return Err(self.fault(s.span, format!("unknown method '{}'", callee.name), vec![]));
        };
        let m: &'p Method = m;
        let old = fr.old_heap.clone();
        let cx = Cx {
            old_heap: Some(&old),
            ..Cx::default()
        };
        let mut argv = Vec::with_capacity(args.len());
        for a in args {
            argv.push(self.eval(a, &mut fr.env, &cx)?);
        }
        let mut cenv: Env<'p> = m
            .params
            .iter()
            .zip(&argv)
            .map(|(p, v)| (p.name.name.as_str(), *v))
            .collect();
        for r in &m.requires {
            if !self.eval_bool(r, &mut cenv, &Cx::default())? {
                return Err(self.fault(
                    s.span,
                    "precondition for call might not hold",
                    vec![r.span],
                ));
            }
        }

        let outs: Vec<Val> = if self.u.unit_span.is_none() {
            self.run_callee_body(m, cenv)?
        } else {
            if std::ptr::eq(m, fr.method) {
                self.check_method_termination(s, m, &mut cenv, fr)?;
            }
            let cands = self.candidates(s, m, &argv);
            if cands.is_empty() {
                return Err(Halt::Prune);
            }
            let k = self.chooser.choose(cands.len() as u32) as usize;
            let c = &cands[k];
            for (pos, contents) in &c.arrays {
                if let Val::Arr(idx) = argv[*pos] {
                    self.heap[idx] = contents.clone();
                }
            }
            c.outs.clone()
        };
        for (t, v) in targets.iter().zip(outs) {
            Self::assign(&mut fr.env, &t.name, v);
        }
        Ok(())
    }

    fn check_method_termination(
        &mut self,
        s: &'p Stmt,
        m: &'p Method,
        cenv: &mut Env<'p>,
        fr: &mut Frame<'p>,
    ) -> R<()> {
        let old = fr.old_heap.clone();
        let entry_cx = Cx {
            old_heap: Some(&old),
            in_old: true,
            cur_fn: None,
        };
        let before = self.decreases_tuple(&m.decreases, &m.params, &mut fr.env, &entry_cx)?;
        let after = self.decreases_tuple(&m.decreases, &m.params, cenv, &Cx::default())?;
        if decreases_ok(&before, &after) {
            Ok(())
        } else {
            let related = m.decreases.iter().map(|d| d.span).collect();
            Err(self.fault(s.span, "cannot prove termination", related))
        }
    }

    /// Concrete mode: runs the callee's body and checks its ensures.
    fn run_callee_body(&mut self, m: &'p Method, mut env: Env<'p>) -> R<Vec<Val>> {
        env.extend(m.returns.iter().map(|r| (r.name.name.as_str(), default_val(r.ty))));
        let mut fr = Frame {
            env,
            method: m,
            old_heap: Rc::new(self.heap.clone()),
        };
        let point = match self.exec_block(&m.body, &mut fr)? {
            Flow::Return(sp) => sp,
            Flow::Next => m.body.close,
        };
        self.check_exit(m, &mut fr, point)?;
        Ok(m.returns
            .iter()
            .map(|r| lookup(&fr.env, &r.name.name).expect("out parameter"))
            .collect())
    }

    fn check_exit(&mut self, m: &'p Method, fr: &mut Frame<'p>, point: Span) -> R<()> {
        let old = fr.old_heap.clone();
        let cx = Cx {
            old_heap: Some(&old),
            ..Cx::default()
        };
        for ens in &m.ensures {
            if !self.eval_bool(ens, &mut fr.env, &cx)? {
                return Err(self.fault(point, "ensures clause might not hold", vec![ens.span]));
            }
        }
        Ok(())
    }

    /// Every bounded outcome of calling `m` on `argv` that its ensures
    /// admits: out-parameter values and new contents for each array
    /// argument.
    fn candidates(&mut self, s: &'p Stmt, m: &'p Method, argv: &[Val]) -> Rc<Vec<Candidate>> {
        let mut key = Vec::new();
        let mut array_pos: Vec<usize> = Vec::new();
        for (i, v) in argv.iter().enumerate() {
            match *v {
                Val::Int(n) => key.extend([0, n]),
                Val::Bool(b) => key.extend([1, b as i64]),
                Val::Arr(idx) => {
                    let first = argv.iter().position(|w| *w == Val::Arr(idx)).unwrap_or(i);
                    if first == i {
                        array_pos.push(i);
                    }
                    key.extend([2, first as i64, self.heap[idx].len() as i64]);
                    key.extend(self.heap[idx].iter().copied());
                }
            }
        }
        let memo_key = (s as *const Stmt as usize, key);
        if let Some(c) = self.u.memo.borrow().get(&memo_key) {
            return c.clone();
        }

        let lows = &self.u.int_domain;
        let mut domains: Vec<usize> = m
            .returns
            .iter()
            .map(|r| if r.ty == Type::Bool { 2 } else { lows.len() })
            .collect();
        let lens: Vec<usize> = array_pos
            .iter()
            .map(|p| match argv[*p] {
                Val::Arr(idx) => self.heap[idx].len(),
                _ => 0,
            })
            .collect();
        for &len in &lens {
            domains.push(lows.len().pow(len as u32));
        }

        let pre = self.heap.clone();
        let saved_steps = self.steps;
        let mut out = Vec::new();
        let mut digits = vec![0usize; domains.len()];
        if domains.iter().all(|d| *d > 0) {
            loop {
                let outs: Vec<Val> = m
                    .returns
                    .iter()
                    .zip(&digits)
                    .map(|(r, d)| match r.ty {
                        Type::Bool => Val::Bool(*d == 1),
                        _ => Val::Int(lows[*d]),
                    })
                    .collect();
                let mut arrays = Vec::with_capacity(array_pos.len());
                for (k, &pos) in array_pos.iter().enumerate() {
                    let mut code = digits[m.returns.len() + k];
                    let contents: Vec<i64> = (0..lens[k])
                        .map(|_| {
                            let v = lows[code % lows.len()];
                            code /= lows.len();
                            v
                        })
                        .collect();
                    if let Val::Arr(idx) = argv[pos] {
                        self.heap[idx].clone_from(&contents);
                    }
                    arrays.push((pos, contents));
                }
                let mut env: Env<'p> = m
                    .params
                    .iter()
                    .zip(argv)
                    .map(|(p, v)| (p.name.name.as_str(), *v))
                    .chain(m.returns.iter().zip(&outs).map(|(r, v)| (r.name.name.as_str(), *v)))
                    .collect();
                let cx = Cx {
                    old_heap: Some(&pre),
                    ..Cx::default()
                };
                self.steps = 0;
                let admitted = m
                    .ensures
                    .iter()
                    .all(|e| matches!(self.eval_bool(e, &mut env, &cx), Ok(true)));
                if admitted {
                    out.push(Candidate { outs, arrays });
                }
                // Odometer increment.
                let mut i = 0;
                while i < digits.len() {
                    digits[i] += 1;
                    if digits[i] < domains[i] {
                        break;
                    }
                    digits[i] = 0;
                    i += 1;
                }
                if i == digits.len() {
                    break;
                }
            }
        }
        self.heap = pre;
        self.steps = saved_steps;
        let out = Rc::new(out);
        self.u.memo.borrow_mut().insert(memo_key, out.clone());
        out
    }
}

struct Frame<'p> {
    env: Env<'p>,
    method: &'p Method,
    old_heap: Rc<Vec<Vec<i64>>>,
}

/// All values of a type within bounds, in a fixed order.
pub(crate) fn domain(t: Type, bounds: &Bounds) -> Vec<Value> {
    match t {
        Type::Int => (bounds.int_low..=bounds.int_high).map(Value::Int).collect(),
        Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        Type::IntArray => {
            let mut out = vec![Value::Array(vec![])];
            let mut layer: Vec<Vec<i64>> = vec![vec![]];
            for _ in 0..bounds.max_array_len {
                let mut next = Vec::new();
                for prefix in &layer {
                    for x in bounds.int_low..=bounds.int_high {
                        let mut v = prefix.clone();
                        v.push(x);
                        next.push(v);
                    }
                }
                out.extend(next.iter().cloned().map(Value::Array));
                layer = next;
            }
            out
        }
    }
}

/// Cartesian product of parameter domains, yielded lazily.
pub(crate) struct Inputs {
    domains: Vec<Vec<Value>>,
    digits: Vec<usize>,
    done: bool,
}

impl Inputs {
    pub(crate) fn new<'a>(types: impl IntoIterator<Item = &'a Param>, bounds: &Bounds) -> Self {
        let domains: Vec<Vec<Value>> = types.into_iter().map(|p| domain(p.ty, bounds)).collect();
        let done = domains.iter().any(|d| d.is_empty());
        Inputs {
            digits: vec![0; domains.len()],
            domains,
            done,
        }
    }
}

impl Iterator for Inputs {
    type Item = Vec<Value>;
    fn next(&mut self) -> Option<Vec<Value>> {
        if self.done {
            return None;
        }
        let item = self
            .digits
            .iter()
            .zip(&self.domains)
            .map(|(d, dom)| dom[*d].clone())
            .collect();
        let mut i = 0;
        loop {
            if i == self.digits.len() {
                self.done = true;
                break;
            }
            self.digits[i] += 1;
            if self.digits[i] < self.domains[i].len() {
                break;
            }
            self.digits[i] = 0;
            i += 1;
        }
        Some(item)
    }
}

struct Collector {
    errors: Vec<VerificationError>,
    seen: HashSet<Span>,
    cap: usize,
}

impl Collector {
    fn wants(&self, span: &Span) -> bool {
        !self.seen.contains(span) && self.errors.len() < self.cap
    }

    fn full(&self) -> bool {
        self.errors.len() >= self.cap
    }

    fn push(&mut self, e: VerificationError) {
        if self.wants(&e.error_span) {
            self.seen.insert(e.error_span);
            self.errors.push(e);
        }
    }
}

/// Result of one path: the fault, if any, and the choices it took.
struct PathResult {
    fault: Option<Fault>,
    chooser: Chooser,
    trace: Option<Vec<TraceState>>,
}

fn method_of<'p>(unit: &'p VerificationUnit) -> Option<&'p Method> {
    unit.program.method(&unit.id.entity.name).map(|m| &**m)
}

fn requires_hold<'p>(u: &UnitCx<'p>, m: &'p Method, inputs: &[Value]) -> bool {
    let mut it = Interp::new(u, vec![], false);
    let mut env = it.bind(&m.params, inputs);
    m.requires
        .iter()
        .all(|r| matches!(it.eval_bool(r, &mut env, &Cx::default()), Ok(true)))
}

fn body_path<'p>(
    u: &UnitCx<'p>,
    m: &'p Method,
    inputs: &[Value],
    prefix: Vec<u32>,
    tracing: bool,
) -> PathResult {
    let mut it = Interp::new(u, prefix, tracing);
    let mut env = it.bind(&m.params, inputs);
    env.extend(m.returns.iter().map(|r| (r.name.name.as_str(), default_val(r.ty))));
    let mut fr = Frame {
        env,
        method: m,
        old_heap: Rc::new(it.heap.clone()),
    };
    it.record(entry_point(&m.body), &fr.env);
    let r = match it.exec_block(&m.body, &mut fr) {
        Ok(flow) => {
            let point = match flow {
                Flow::Return(sp) => sp,
                Flow::Next => m.body.close,
            };
            it.check_exit(m, &mut fr, point)
        }
        Err(h) => Err(h),
    };
    it.record_fault(&r, &fr.env);
    PathResult {
        fault: match r {
            Err(Halt::Fault(f)) => Some(f),
            _ => None,
        },
        chooser: it.chooser,
        trace: it.trace,
    }
}

/// Checks a function body (and its spec) on one input.
fn function_path<'p>(u: &UnitCx<'p>, f: &'p Function, inputs: &[Value], tracing: bool) -> PathResult {
    let mut it = Interp::new(u, vec![], tracing);
    let mut env = it.bind(&f.params, inputs);
    it.record(f.name.span, &env);
    let r = (|| {
        let cx = Cx::default();
        for r in &f.requires {
            if !it.eval_bool(r, &mut env, &cx)? {
                return Err(Halt::Prune);
            }
        }
        let dec = it.decreases_tuple(&f.decreases, &f.params, &mut env, &cx)?;
        let name = f.name.name.as_str();
        let inner = Cx {
            cur_fn: u.recursive(name, name).then_some((name, &dec[..])),
            ..cx
        };
        it.eval(&f.body, &mut env, &inner).map(|_| ())
    })();
    it.record_fault(&r, &env);
    PathResult {
        fault: match r {
            Err(Halt::Fault(f)) => Some(f),
            _ => None,
        },
        chooser: it.chooser,
        trace: it.trace,
    }
}

/// Checks that a method's spec is well defined on one (params, returns)
/// assignment.
fn spec_path<'p>(u: &UnitCx<'p>, m: &'p Method, inputs: &[Value], tracing: bool) -> PathResult {
    let mut it = Interp::new(u, vec![], tracing);
    let all: Vec<&'p Param> = m.params.iter().chain(&m.returns).collect();
    let mut env: Env<'p> = all
        .iter()
        .zip(inputs)
        .map(|(p, v)| (p.name.name.as_str(), it.alloc(v)))
        .collect();
    it.record(m.name.span, &env);
    let old = it.heap.clone();
    let r = (|| {
        let cx = Cx {
            old_heap: Some(&old),
            ..Cx::default()
        };
        for r in &m.requires {
            if !it.eval_bool(r, &mut env, &cx)? {
                return Ok(());
            }
        }
        for d in &m.decreases {
            it.eval(d, &mut env, &cx)?;
        }
        // Each postcondition may assume the ones before it.
        for e in &m.ensures {
            if !it.eval_bool(e, &mut env, &cx)? {
                return Ok(());
            }
        }
        Ok(())
    })();
    it.record_fault(&r, &env);
    PathResult {
        fault: match r {
            Err(Halt::Fault(f)) => Some(f),
            _ => None,
        },
        chooser: it.chooser,
        trace: it.trace,
    }
}

enum Stop {
    Timeout,
    Cancelled,
}

pub(crate) fn verify(
    unit: &VerificationUnit,
    ctx: &ProveCtx<'_>,
    deadline: Option<Instant>,
) -> ProveOutcome {
    let prog = &*unit.program;
    let entity = unit.entity();
    let u = UnitCx::new(prog, ctx.bounds, Some(entity.span));
    let mut errs = Collector {
        errors: Vec::new(),
        seen: HashSet::new(),
        cap: ctx.error_cap.max(1),
    };
    let check = || -> Result<(), Stop> {
        if ctx.cancelled() {
            return Err(Stop::Cancelled);
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Stop::Timeout);
        }
        Ok(())
    };

    let run = (|| -> Result<(), Stop> {
        match unit.id.obligation {
            Obligation::FunctionWF => {
                let f = prog.function(&unit.id.entity.name).expect("function unit");
                for input in Inputs::new(&f.params, &ctx.bounds) {
                    check()?;
                    let res = function_path(&u, f, &input, false);
                    if let Some(fault) = res.fault {
                        if errs.wants(&fault.span) {
                            let traced = function_path(&u, f, &input, true);
                            errs.push(make_error(fault, traced));
                        }
                    }
                    if errs.full() {
                        break;
                    }
                }
            }
            Obligation::MethodSpecWF => {
                let m = method_of(unit).expect("method unit");
                for input in Inputs::new(m.params.iter().chain(&m.returns), &ctx.bounds) {
                    check()?;
                    let res = spec_path(&u, m, &input, false);
                    if let Some(fault) = res.fault {
                        if errs.wants(&fault.span) {
                            let traced = spec_path(&u, m, &input, true);
                            errs.push(make_error(fault, traced));
                        }
                    }
                    if errs.full() {
                        break;
                    }
                }
            }
            Obligation::MethodBody => {
                let m = method_of(unit).expect("method unit");
                'inputs: for input in Inputs::new(&m.params, &ctx.bounds) {
                    check()?;
                    if !requires_hold(&u, m, &input) {
                        continue;
                    }
                    let mut prefix = Vec::new();
                    loop {
                        let res = body_path(&u, m, &input, prefix, false);
                        if let Some(fault) = res.fault {
                            if errs.wants(&fault.span) {
                                let traced = body_path(&u, m, &input, res.chooser.choices(), true);
                                errs.push(make_error(fault, traced));
                                if errs.full() {
                                    break 'inputs;
                                }
                            }
                        }
                        match res.chooser.next_prefix() {
                            Some(p) => prefix = p,
                            None => break,
                        }
                        check()?;
                    }
                }
            }
        }
        Ok(())
    })();

    match run {
        Err(Stop::Cancelled) => ProveOutcome::Cancelled,
        Err(Stop::Timeout) => ProveOutcome::Done(Verdict::Timeout),
        Ok(()) if errs.errors.is_empty() => ProveOutcome::Done(Verdict::Verified),
        Ok(()) => ProveOutcome::Done(Verdict::Failed {
            errors: errs.errors,
        }),
    }
}

fn make_error(fault: Fault, traced: PathResult) -> VerificationError {
    VerificationError {
        message: fault.message,
        error_span: fault.span,
        related_spans: fault.related,
        trace: Trace {
            states: traced.trace.unwrap_or_default(),
            choices: traced.chooser.choices(),
        },
    }
}

pub(crate) fn replay(unit: &VerificationUnit, trace: &Trace, bounds: Bounds) -> Option<(Span, String)> {
    let prog = &*unit.program;
    let u = UnitCx::new(prog, bounds, Some(unit.entity().span));
    let entry = trace.states.first()?;
    let pick = |params: &mut dyn Iterator<Item = &Param>| -> Option<Vec<Value>> {
        params.map(|p| entry.get(&p.name.name).cloned()).collect()
    };
    let res = match unit.id.obligation {
        Obligation::FunctionWF => {
            let f = prog.function(&unit.id.entity.name)?;
            function_path(&u, f, &pick(&mut f.params.iter())?, false)
        }
        Obligation::MethodSpecWF => {
            let m = method_of(unit)?;
            spec_path(&u, m, &pick(&mut m.params.iter().chain(&m.returns))?, false)
        }
        Obligation::MethodBody => {
            let m = method_of(unit)?;
            body_path(&u, m, &pick(&mut m.params.iter())?, trace.choices.clone(), false)
        }
    };
    res.fault.map(|f| (f.span, f.message))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Fault { span: Span, message: String },
}

/// Whole-program execution: calls run the callee's body, not its spec.
/// `assume` failures count as Ok (the execution is outside the domain).
pub fn execute_concrete(program: &Program, entry: &str, inputs: &[Value], bounds: Bounds) -> Outcome {
    let Some(m) = program.method(entry) else {
        return Outcome::Fault {
            span: Span::default(),
            message: format!("no method named '{entry}'"),
        };
    };
    let u = UnitCx::new(program, bounds, None);
    let mut it = Interp::new(&u, vec![], false);
    let mut env = it.bind(&m.params, inputs);
    let r = (|| {
        for r in &m.requires {
            if !it.eval_bool(r, &mut env, &Cx::default())? {
                return Err(Halt::Fault(Fault {
                    span: r.span,
                    message: "precondition might not hold".into(),
                    related: vec![],
                }));
            }
        }
        it.run_callee_body(m, env).map(|_| ())
    })();
    match r {
        Ok(()) | Err(Halt::Prune) => Outcome::Ok,
        Err(Halt::Fault(f)) => Outcome::Fault {
            span: f.span,
            message: f.message,
        },
    }
}

/// True if the method's requires clauses hold (without fault) on `inputs`.
pub fn precondition_holds(program: &Program, entry: &str, inputs: &[Value], bounds: Bounds) -> bool {
    let Some(m) = program.method(entry) else {
        return false;
    };
    let u = UnitCx::new(program, bounds, None);
    requires_hold(&u, m, inputs)
}

/// All bounded inputs for a method's parameters.
pub fn bounded_inputs(params: &[Param], bounds: &Bounds) -> impl Iterator<Item = Vec<Value>> {
    Inputs::new(params, bounds)
}
