//! Static checks: name resolution, typing, duplicates and missing returns.

use std::collections::HashSet;

use super::ast::*;
use super::{Diagnostic, DiagnosticKind};

struct Ctx<'p> {
    program: &'p Program,
    class: Option<&'p ClassDef>,
    ret: Type,
    scopes: Vec<Vec<(String, Type)>>,
    file: usize,
    diags: &'p mut Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn err(&mut self, kind: DiagnosticKind, line: u32, msg: impl Into<String>) {
        let file = self.program.file_name(self.file).to_string();
        self.diags.push(Diagnostic { file, line, col: 0, kind, message: msg.into() });
    }

    fn lookup(&self, name: &str) -> Option<&Type> {
        self.scopes.iter().rev().flat_map(|s| s.iter()).find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn declare(&mut self, name: &str, ty: Type, line: u32) {
        if self.lookup(name).is_some() {
            self.err(DiagnosticKind::Duplicate, line, format!("variable `{name}` is already declared"));
            return;
        }
        self.scopes.last_mut().expect("scope").push((name.to_string(), ty));
    }

    fn value_type_ok(&self, ty: &Type) -> bool {
        match ty {
            Type::Int | Type::Bool => true,
            Type::Object(c) => self.program.class(c).is_some(),
            Type::Void => false,
        }
    }

    fn call_args(&mut self, params: &[Param], args: &[Expr], line: u32, what: &str) {
        for (i, (p, a)) in params.iter().zip(args).enumerate() {
            if let Some(t) = self.expr(a) {
                if t != p.ty {
                    self.err(
                        DiagnosticKind::Type,
                        line,
                        format!("argument {} of {what}: expected {}, found {t}", i + 1, p.ty),
                    );
                }
            }
        }
    }

    /// Returns `None` after reporting an error, so errors do not cascade.
    fn expr(&mut self, e: &Expr) -> Option<Type> {
        let line = e.line;
        match &e.kind {
            ExprKind::Lit(l) => Some(l.ty()),
            ExprKind::Local(name) => match self.lookup(name) {
                Some(t) => Some(t.clone()),
                None => {
                    self.err(DiagnosticKind::Type, line, format!("unknown variable `{name}`"));
                    None
                }
            },
            ExprKind::FieldRead(f) => {
                let Some(class) = self.class else {
                    self.err(DiagnosticKind::Type, line, "`this` used outside a class");
                    return None;
                };
                match class.field(f) {
                    Some(fd) => Some(fd.ty.clone()),
                    None => {
                        self.err(DiagnosticKind::Type, line, format!("class {} has no field `{f}`", class.name));
                        None
                    }
                }
            }
            ExprKind::Unary(op, inner) => {
                let t = self.expr(inner)?;
                let want = match op {
                    UnOp::Neg => Type::Int,
                    UnOp::Not => Type::Bool,
                };
                if t != want {
                    self.err(DiagnosticKind::Type, line, format!("operand must be {want}, found {t}"));
                    return None;
                }
                Some(want)
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l);
                let rt = self.expr(r);
                let (lt, rt) = (lt?, rt?);
                use BinOp::*;
                let (operand, result) = match op {
                    Add | Sub | Mul | Div | Rem => (Some(Type::Int), Type::Int),
                    Lt | Le | Gt | Ge => (Some(Type::Int), Type::Bool),
                    And | Or => (Some(Type::Bool), Type::Bool),
                    Eq | Ne => (None, Type::Bool),
                };
                match operand {
                    Some(want) if lt != want || rt != want => {
                        self.err(DiagnosticKind::Type, line, format!("operands must be {want}, found {lt} and {rt}"));
                        None
                    }
                    None if lt != rt || !matches!(lt, Type::Int | Type::Bool) => {
                        self.err(DiagnosticKind::Type, line, format!("cannot compare {lt} with {rt}"));
                        None
                    }
                    _ => Some(result),
                }
            }
            ExprKind::CallSelf { method, args } => {
                let Some(class) = self.class else {
                    self.err(DiagnosticKind::Type, line, "`this` used outside a class");
                    return None;
                };
                self.method_call(class, method, args, line)
            }
            ExprKind::CallOn { recv, method, args } => {
                let t = self.expr(recv)?;
                let Type::Object(cname) = &t else {
                    self.err(DiagnosticKind::Type, line, format!("cannot call `{method}` on {t}"));
                    return None;
                };
                let class = self.program.class(cname)?;
                self.method_call(class, method, args, line)
            }
            ExprKind::CallFn { name, args } => {
                let program = self.program;
                let Some(f) = program.function(name, args.len()) else {
                    self.err(DiagnosticKind::Type, line, format!("unknown function `{name}/{}`", args.len()));
                    return None;
                };
                self.call_args(&f.params, args, line, name);
                Some(f.ret.clone())
            }
            ExprKind::New { class, args } => {
                let program = self.program;
                let Some(cd) = program.class(class) else {
                    self.err(DiagnosticKind::Type, line, format!("unknown class `{class}`"));
                    return None;
                };
                if cd.constructor_arity() != args.len() {
                    self.err(
                        DiagnosticKind::Type,
                        line,
                        format!("constructor of {class} takes {} arguments, found {}", cd.constructor_arity(), args.len()),
                    );
                    return None;
                }
                if let Some(ctor) = &cd.constructor {
                    self.call_args(&ctor.params, args, line, "constructor");
                }
                Some(Type::Object(class.clone()))
            }
        }
    }

    fn method_call(&mut self, class: &ClassDef, method: &str, args: &[Expr], line: u32) -> Option<Type> {
        let Some(m) = class.method(method, args.len()) else {
            self.err(
                DiagnosticKind::Type,
                line,
                format!("class {} has no method `{method}/{}`", class.name, args.len()),
            );
            return None;
        };
        self.call_args(&m.params, args, line, method);
        Some(m.ret.clone())
    }

    fn value_expr(&mut self, e: &Expr) -> Option<Type> {
        let t = self.expr(e)?;
        if t == Type::Void {
            self.err(DiagnosticKind::Type, e.line, "void value used in an expression");
            return None;
        }
        Some(t)
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.scopes.push(Vec::new());
        for s in stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt) {
        let line = s.line;
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => {
                if !self.value_type_ok(ty) {
                    self.err(DiagnosticKind::Type, line, format!("invalid local type {ty}"));
                }
                if let Some(t) = self.value_expr(init) {
                    if &t != ty {
                        self.err(DiagnosticKind::Type, line, format!("`{name}` declared {ty} but initialized with {t}"));
                    }
                }
                self.declare(name, ty.clone(), line);
            }
            StmtKind::Assign { name, value } => {
                let vt = self.value_expr(value);
                match (self.lookup(name).cloned(), vt) {
                    (None, _) => self.err(DiagnosticKind::Type, line, format!("unknown variable `{name}`")),
                    (Some(t), Some(vt)) if t != vt => {
                        self.err(DiagnosticKind::Type, line, format!("cannot assign {vt} to `{name}` of type {t}"))
                    }
                    _ => {}
                }
            }
            StmtKind::FieldAssign { field, value } => {
                let vt = self.value_expr(value);
                let Some(class) = self.class else {
                    self.err(DiagnosticKind::Type, line, "`this` used outside a class");
                    return;
                };
                match (class.field(field), vt) {
                    (None, _) => {
                        self.err(DiagnosticKind::Type, line, format!("class {} has no field `{field}`", class.name))
                    }
                    (Some(fd), Some(vt)) if fd.ty != vt => self.err(
                        DiagnosticKind::Type,
                        line,
                        format!("cannot assign {vt} to field `{field}` of type {}", fd.ty),
                    ),
                    _ => {}
                }
            }
            StmtKind::If { cond, then_body, else_body, .. } => {
                self.condition(cond);
                self.block(then_body);
                if let Some(e) = else_body {
                    self.block(e);
                }
            }
            StmtKind::While { cond, body } => {
                self.condition(cond);
                self.block(body);
            }
            StmtKind::Return(value) => match (value, self.ret.clone()) {
                (None, Type::Void) => {}
                (None, t) => self.err(DiagnosticKind::Type, line, format!("missing return value of type {t}")),
                (Some(e), Type::Void) => {
                    self.expr(e);
                    self.err(DiagnosticKind::Type, line, "void method cannot return a value");
                }
                (Some(e), t) => {
                    if let Some(vt) = self.value_expr(e) {
                        if vt != t {
                            self.err(DiagnosticKind::Type, line, format!("expected return of {t}, found {vt}"));
                        }
                    }
                }
            },
            StmtKind::Expr(e) => {
                self.expr(e);
            }
        }
    }

    fn condition(&mut self, cond: &Expr) {
        if let Some(t) = self.value_expr(cond) {
            if t != Type::Bool {
                self.err(DiagnosticKind::Type, cond.line, format!("condition must be bool, found {t}"));
            }
        }
    }
}

/// True when every path through `stmts` ends in a `return`.
pub fn always_returns(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| match &s.kind {
        StmtKind::Return(_) => true,
        StmtKind::If { then_body, else_body: Some(e), .. } => always_returns(then_body) && always_returns(e),
        _ => false,
    })
}

fn check_method(program: &Program, class: Option<&ClassDef>, m: &MethodDef, diags: &mut Vec<Diagnostic>) {
    let mut ctx = Ctx { program, class, ret: m.ret.clone(), scopes: vec![Vec::new()], file: m.span.file, diags };
    for p in &m.params {
        if !matches!(p.ty, Type::Int | Type::Bool) {
            ctx.err(DiagnosticKind::Type, m.span.start_line, format!("parameter `{}` must be int or bool", p.name));
        }
        ctx.declare(&p.name, p.ty.clone(), m.span.start_line);
    }
    if matches!(m.ret, Type::Object(_)) {
        ctx.err(DiagnosticKind::Type, m.span.start_line, format!("method `{}` must return int, bool or void", m.name));
    }
    ctx.block(&m.body);
    if m.ret != Type::Void && !always_returns(&m.body) {
        ctx.err(
            DiagnosticKind::Type,
            m.span.start_line,
            format!("method `{}` is missing a return on some path", m.name),
        );
    }
}

pub fn check_program(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let dup = |diags: &mut Vec<Diagnostic>, file: usize, line: u32, msg: String| {
        diags.push(Diagnostic {
            file: program.file_name(file).to_string(),
            line,
            col: 0,
            kind: DiagnosticKind::Duplicate,
            message: msg,
        })
    };

    let mut class_names = HashSet::new();
    for c in &program.classes {
        if !class_names.insert(c.name.as_str()) {
            dup(&mut diags, c.span.file, c.span.start_line, format!("duplicate class `{}`", c.name));
        }
    }
    let mut fn_sigs = HashSet::new();
    for f in &program.functions {
        if !fn_sigs.insert((f.name.as_str(), f.arity())) {
            dup(&mut diags, f.span.file, f.span.start_line, format!("duplicate function `{}/{}`", f.name, f.arity()));
        }
    }
    for c in &program.classes {
        let mut fields = HashSet::new();
        for f in &c.fields {
            if !fields.insert(f.name.as_str()) {
                dup(&mut diags, f.span.file, f.span.start_line, format!("duplicate field `{}.{}`", c.name, f.name));
            }
            if !matches!(f.ty, Type::Int | Type::Bool) {
                diags.push(Diagnostic {
                    file: program.file_name(f.span.file).to_string(),
                    line: f.span.start_line,
                    col: 0,
                    kind: DiagnosticKind::Type,
                    message: format!("field `{}` must be int or bool", f.name),
                });
            } else if f.init.ty() != f.ty {
                diags.push(Diagnostic {
                    file: program.file_name(f.span.file).to_string(),
                    line: f.span.start_line,
                    col: 0,
                    kind: DiagnosticKind::Type,
                    message: format!("field `{}` declared {} but initialized with {}", f.name, f.ty, f.init.ty()),
                });
            }
        }
        let mut sigs = HashSet::new();
        for m in &c.methods {
            if !sigs.insert((m.name.as_str(), m.arity())) {
                dup(
                    &mut diags,
                    m.span.file,
                    m.span.start_line,
                    format!("duplicate method `{}.{}/{}`", c.name, m.name, m.arity()),
                );
            }
        }
    }

    for c in &program.classes {
        if let Some(ctor) = &c.constructor {
            check_method(program, Some(c), ctor, &mut diags);
        }
        for m in &c.methods {
            check_method(program, Some(c), m, &mut diags);
        }
    }
    for f in &program.functions {
        check_method(program, None, f, &mut diags);
    }
    diags
}
