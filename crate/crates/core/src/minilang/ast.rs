use std::fmt;

use serde::{Deserialize, Serialize};

/// One `.mlg` file of a program version, LF-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, text: impl AsRef<str>) -> Self {
        Self { name: name.into(), text: text.as_ref().replace("\r\n", "\n") }
    }

    pub fn lines(&self) -> Vec<&str> {
        self.text.lines().collect()
    }
}

/// Source span of an entity. `file` indexes [`Program::files`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub file: usize,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    Void,
    Object(String),
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Bool => f.write_str("bool"),
            Type::Void => f.write_str("void"),
            Type::Object(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Bool(bool),
}

impl Literal {
    pub fn ty(&self) -> Type {
        match self {
            Literal::Int(_) => Type::Int,
            Literal::Bool(_) => Type::Bool,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDef {
    pub name: String,
    pub ty: Type,
    pub init: Literal,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Type,
    pub body: Vec<Stmt>,
    pub span: Span,
    /// Token texts of the whole declaration with whitespace and comments
    /// stripped. Two declarations with equal streams are the same entity body.
    pub normalized: Vec<String>,
}

impl MethodDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
    pub constructor: Option<MethodDef>,
    pub methods: Vec<MethodDef>,
    pub span: Span,
}

impl ClassDef {
    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn method(&self, name: &str, arity: usize) -> Option<&MethodDef> {
        self.methods.iter().find(|m| m.name == name && m.arity() == arity)
    }

    pub fn constructor_arity(&self) -> usize {
        self.constructor.as_ref().map_or(0, MethodDef::arity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Lit(Literal),
    Local(String),
    /// `this.f`
    FieldRead(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `this.m(args)`
    CallSelf { method: String, args: Vec<Expr> },
    /// `f(args)` on a top-level function
    CallFn { name: String, args: Vec<Expr> },
    /// `recv.m(args)` where `recv` has an object type
    CallOn { recv: Box<Expr>, method: String, args: Vec<Expr> },
    New { class: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    /// Line of the statement's first token.
    pub line: u32,
    /// Last line of the statement head: the `;` for simple statements, the
    /// `{` opening the body for `if` / `while`.
    pub head_end_line: u32,
    /// Byte range in the file of a simple statement (through its `;`).
    pub range: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    VarDecl { name: String, ty: Type, init: Expr },
    Assign { name: String, value: Expr },
    FieldAssign { field: String, value: Expr },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>>, else_line: Option<u32> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Expr(Expr),
}

impl StmtKind {
    pub fn is_simple(&self) -> bool {
        !matches!(self, StmtKind::If { .. } | StmtKind::While { .. })
    }
}

/// A parsed and statically checked program version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    /// Version label (e.g. `merge`, `parent1`); informational only.
    pub label: String,
    pub files: Vec<SourceFile>,
    pub classes: Vec<ClassDef>,
    pub functions: Vec<MethodDef>,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn function(&self, name: &str, arity: usize) -> Option<&MethodDef> {
        self.functions.iter().find(|f| f.name == name && f.arity() == arity)
    }

    pub fn file_name(&self, index: usize) -> &str {
        &self.files[index].name
    }

    pub fn file_index(&self, name: &str) -> Option<usize> {
        self.files.iter().position(|f| f.name == name)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Every line that carries executable content and can therefore show up
    /// in a coverage trace.
    pub fn traceable_lines(&self) -> std::collections::BTreeSet<(String, u32)> {
        let mut out = std::collections::BTreeSet::new();
        let add_method = |m: &MethodDef, out: &mut std::collections::BTreeSet<(String, u32)>| {
            let file = self.file_name(m.span.file).to_string();
            out.insert((file.clone(), m.span.start_line));
            visit_stmts(&m.body, &mut |s| {
                out.insert((file.clone(), s.line));
                if let StmtKind::If { else_line: Some(l), .. } = &s.kind {
                    out.insert((file.clone(), *l));
                }
            });
        };
        for class in &self.classes {
            let file = self.file_name(class.span.file).to_string();
            out.insert((file.clone(), class.span.start_line));
            for f in &class.fields {
                out.insert((file.clone(), f.span.start_line));
            }
            if let Some(c) = &class.constructor {
                add_method(c, &mut out);
            }
            for m in &class.methods {
                add_method(m, &mut out);
            }
        }
        for f in &self.functions {
            add_method(f, &mut out);
        }
        out
    }
}

/// Pre-order walk over a statement tree.
pub fn visit_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { then_body, else_body, .. } => {
                visit_stmts(then_body, f);
                if let Some(e) = else_body {
                    visit_stmts(e, f);
                }
            }
            StmtKind::While { body, .. } => visit_stmts(body, f),
            _ => {}
        }
    }
}

/// Pre-order walk over every expression reachable from a statement list.
pub fn visit_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    fn walk<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
        f(e);
        match &e.kind {
            ExprKind::Unary(_, inner) => walk(inner, f),
            ExprKind::Binary(_, l, r) => {
                walk(l, f);
                walk(r, f);
            }
            ExprKind::CallSelf { args, .. } | ExprKind::CallFn { args, .. } | ExprKind::New { args, .. } => {
                args.iter().for_each(|a| walk(a, f))
            }
            ExprKind::CallOn { recv, args, .. } => {
                walk(recv, f);
                args.iter().for_each(|a| walk(a, f));
            }
            ExprKind::Lit(_) | ExprKind::Local(_) | ExprKind::FieldRead(_) => {}
        }
    }
    visit_stmts(stmts, &mut |s| match &s.kind {
        StmtKind::VarDecl { init: e, .. }
        | StmtKind::Assign { value: e, .. }
        | StmtKind::FieldAssign { value: e, .. }
        | StmtKind::Expr(e)
        | StmtKind::Return(Some(e)) => walk(e, f),
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => walk(cond, f),
        StmtKind::Return(None) => {}
    });
}
