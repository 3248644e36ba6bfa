//! MiniLang: the small class-based language every program version is written in.
//!
//! Grammar (informal):
//!
//! ```text
//! program   := (class | function)*
//! class     := "class" IDENT "{" (field | ctor | method)* "}"
//! field     := "var" IDENT ":" ("int" | "bool") "=" literal ";"
//! ctor      := "init" "(" params ")" block
//! method    := "fn" IDENT "(" params ")" ":" ("int" | "bool" | "void") block
//! function  := method                       (top level, no `this`)
//! stmt      := "var" IDENT ":" type "=" expr ";"
//!            | IDENT "=" expr ";"
//!            | "this" "." IDENT "=" expr ";"
//!            | "if" "(" expr ")" block ("else" (block | if))?
//!            | "while" "(" expr ")" block
//!            | "return" expr? ";"
//!            | expr ";"
//! expr      := usual precedence: || && (== !=) (< <= > >=) (+ -) (* / %) unary(! -)
//! primary   := INT | true | false | IDENT | IDENT "(" args ")"
//!            | "this" "." IDENT | "this" "." IDENT "(" args ")"
//!            | "new" IDENT "(" args ")" | "(" expr ")" ; followed by (".m(args)")*
//! ```
//!
//! Integers are 64-bit and wrap on overflow; division or modulo by zero raises
//! `DivByZero`. Line numbers are 1-based.

pub mod ast;
pub mod check;
pub mod interp;
pub mod lexer;
mod parser;
pub mod value;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::*;
pub use interp::{run_test, ExecutionResult, Termination, DEFAULT_BUDGET};
pub use value::{ExcKind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Syntax,
    Type,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u32,
    /// 0 when only the line is known.
    pub col: u32,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn syntax(file: &str, line: u32, col: u32, message: impl Into<String>) -> Self {
        Self { file: file.to_string(), line, col, kind: DiagnosticKind::Syntax, message: message.into() }
    }

    pub fn duplicate(file: &str, line: u32, col: u32, message: impl Into<String>) -> Self {
        Self { file: file.to_string(), line, col, kind: DiagnosticKind::Duplicate, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::Type => "type error",
            DiagnosticKind::Duplicate => "duplicate entity",
        };
        if self.col > 0 {
            write!(f, "{}:{}:{}: {kind}: {}", self.file, self.line, self.col, self.message)
        } else {
            write!(f, "{}:{}: {kind}: {}", self.file, self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
pub struct Diagnostics(pub Vec<Diagnostic>);

/// Parses and statically checks a set of source files as one program.
///
/// Files are processed in name order so the result does not depend on the
/// order they were supplied in.
pub fn parse(files: &[SourceFile]) -> Result<Program, Diagnostics> {
    let mut files: Vec<SourceFile> = files.iter().map(|f| SourceFile::new(f.name.clone(), &f.text)).collect();
    files.sort_by(|a, b| a.name.cmp(&b.name));

    let mut classes = Vec::new();
    let mut functions = Vec::new();
    let mut diags = Vec::new();
    for (i, f) in files.iter().enumerate() {
        let items = lexer::tokenize(&f.name, &f.text)
            .and_then(|tokens| parser::Parser::new(&f.name, i, &tokens).parse_file());
        match items {
            Ok(items) => {
                classes.extend(items.classes);
                functions.extend(items.functions);
            }
            Err(d) => diags.push(d),
        }
    }
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    let program = Program { label: String::new(), files, classes, functions };
    let diags = check::check_program(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(Diagnostics(diags))
    }
}

/// Convenience for a single in-memory file.
pub fn parse_str(name: &str, text: &str) -> Result<Program, Diagnostics> {
    parse(&[SourceFile::new(name, text)])
}

/// Loads every `.mlg` file of a directory (non-recursive).
pub fn load_dir(dir: &std::path::Path) -> std::io::Result<Vec<SourceFile>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "mlg") {
            let text = std::fs::read_to_string(&path)?;
            let name = path.file_name().expect("file name").to_string_lossy().into_owned();
            out.push(SourceFile::new(name, text));
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
