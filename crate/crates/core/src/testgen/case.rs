//! Test cases, assertions and the `.mlgtest` script format.
//!
//! ```text
//! # tom test seed=42 iteration=17
//! let o0 = new Account(10)
//! call o0.deposit(10)
//! observe o0.withdraw(10)
//! call helper(1, true)
//! field o0.balance
//! assert @2 return == false
//! assert @4 field o0.balance == 10
//! ```
//!
//! Actions are numbered from 0 in file order; `assert` lines refer to them by
//! index. `@k raised` is the exception marker of action `k`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::minilang::{ExecutionResult, Literal, Value};
use crate::oracle::{ObservationPoint, PointKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Receiver {
    Toplevel,
    Object(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Construct { class: String, args: Vec<Literal>, label: String },
    Invoke { receiver: Receiver, method: String, args: Vec<Literal>, observe: bool },
    ObserveField { label: String, field: String },
}

impl Action {
    /// Whether the action has a slot besides its exception marker.
    pub fn has_primary_point(&self) -> bool {
        match self {
            Action::Construct { .. } => false,
            Action::Invoke { observe, .. } => *observe,
            Action::ObserveField { .. } => true,
        }
    }

    pub fn point_count(&self) -> usize {
        1 + usize::from(self.has_primary_point())
    }

    pub fn args(&self) -> &[Literal] {
        match self {
            Action::Construct { args, .. } | Action::Invoke { args, .. } => args,
            Action::ObserveField { .. } => &[],
        }
    }

    pub fn args_mut(&mut self) -> Option<&mut Vec<Literal>> {
        match self {
            Action::Construct { args, .. } | Action::Invoke { args, .. } => Some(args),
            Action::ObserveField { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub iteration: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub actions: Vec<Action>,
    pub provenance: Provenance,
}

impl TestCase {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, provenance: Provenance::default() }
    }

    fn label_classes(&self) -> HashMap<&str, &str> {
        let mut out = HashMap::new();
        for a in &self.actions {
            if let Action::Construct { class, label, .. } = a {
                out.insert(label.as_str(), class.as_str());
            }
        }
        out
    }

    /// Observation points in slot order.
    pub fn observation_points(&self) -> Vec<ObservationPoint> {
        let classes = self.label_classes();
        let mut out = Vec::new();
        for (k, a) in self.actions.iter().enumerate() {
            match a {
                Action::Invoke { observe: true, .. } => {
                    out.push(ObservationPoint { action: k, kind: PointKind::ReturnValue });
                }
                Action::ObserveField { label, field } => out.push(ObservationPoint {
                    action: k,
                    kind: PointKind::FieldState {
                        class: classes.get(label.as_str()).copied().unwrap_or("").to_string(),
                        label: label.clone(),
                        field: field.clone(),
                    },
                }),
                _ => {}
            }
            out.push(ObservationPoint { action: k, kind: PointKind::ExceptionMarker });
        }
        out
    }

    /// Labels are defined before use and never redefined.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.actions.iter().all(|a| match a {
            Action::Construct { label, .. } => seen.insert(label.clone()),
            Action::Invoke { receiver: Receiver::Object(l), .. } | Action::ObserveField { label: l, .. } => {
                seen.contains(l)
            }
            Action::Invoke { receiver: Receiver::Toplevel, .. } => true,
        })
    }
}

/// Equality guard on one observation point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assertion {
    pub point: ObservationPoint,
    pub expected: Value,
}

impl Assertion {
    /// The observed value at the assertion's point, if the run produced it.
    pub fn actual(&self, result: &ExecutionResult) -> Option<Value> {
        result.valuation.slots.iter().find(|(p, _)| *p == self.point).map(|(_, v)| *v)
    }

    pub fn holds(&self, result: &ExecutionResult) -> bool {
        self.actual(result) == Some(self.expected)
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "assert {} == {}", self.point, self.expected)
    }
}

/// A test together with its assertions, as stored in a `.mlgtest` file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestScript {
    pub test: TestCase,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Literal]) -> fmt::Result {
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Construct { class, args, label } => {
                write!(f, "let {label} = new {class}")?;
                write_args(f, args)
            }
            Action::Invoke { receiver, method, args, observe } => {
                f.write_str(if *observe { "observe " } else { "call " })?;
                if let Receiver::Object(l) = receiver {
                    write!(f, "{l}.")?;
                }
                f.write_str(method)?;
                write_args(f, args)
            }
            Action::ObserveField { label, field } => write!(f, "field {label}.{field}"),
        }
    }
}

impl fmt::Display for TestScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.test.provenance;
        writeln!(f, "# tom test seed={} iteration={}", p.seed, p.iteration)?;
        for a in &self.test.actions {
            writeln!(f, "{a}")?;
        }
        for a in &self.assertions {
            writeln!(f, "{a}")?;
        }
        Ok(())
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_literal(s: &str) -> Result<Literal, String> {
    match s.trim() {
        "true" => Ok(Literal::Bool(true)),
        "false" => Ok(Literal::Bool(false)),
        t => t.parse().map(Literal::Int).map_err(|_| format!("bad literal `{t}`")),
    }
}

/// Splits `target(args)` into the callee text and the argument literals.
fn parse_call(s: &str) -> Result<(&str, Vec<Literal>), String> {
    let open = s.find('(').ok_or("expected `(`")?;
    let inner = s[open + 1..].strip_suffix(')').ok_or("expected `)` at end of line")?;
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(parse_literal).collect::<Result<_, _>>()?
    };
    Ok((s[..open].trim(), args))
}

fn parse_label_member(s: &str) -> Result<(String, String), String> {
    let (l, m) = s.split_once('.').ok_or_else(|| format!("expected `label.member`, got `{s}`"))?;
    if !is_ident(l) || !is_ident(m) {
        return Err(format!("bad name in `{s}`"));
    }
    Ok((l.to_string(), m.to_string()))
}

fn parse_action(line: &str) -> Result<Action, String> {
    if let Some(rest) = line.strip_prefix("let ") {
        let (label, rhs) = rest.split_once('=').ok_or("expected `=`")?;
        let label = label.trim();
        let rhs = rhs.trim().strip_prefix("new ").ok_or("expected `new`")?;
        let (class, args) = parse_call(rhs)?;
        if !is_ident(label) || !is_ident(class) {
            return Err("bad name in construction".into());
        }
        return Ok(Action::Construct { class: class.to_string(), args, label: label.to_string() });
    }
    let (observe, rest) = if let Some(r) = line.strip_prefix("observe ") {
        (true, r)
    } else if let Some(r) = line.strip_prefix("call ") {
        (false, r)
    } else if let Some(r) = line.strip_prefix("field ") {
        let (label, field) = parse_label_member(r.trim())?;
        return Ok(Action::ObserveField { label, field });
    } else {
        return Err(format!("unknown action `{line}`"));
    };
    let (callee, args) = parse_call(rest.trim())?;
    let (receiver, method) = match callee.split_once('.') {
        Some(_) => {
            let (l, m) = parse_label_member(callee)?;
            (Receiver::Object(l), m)
        }
        None if is_ident(callee) => (Receiver::Toplevel, callee.to_string()),
        None => return Err(format!("bad callee `{callee}`")),
    };
    Ok(Action::Invoke { receiver, method, args, observe })
}

fn parse_point(s: &str, test: &TestCase) -> Result<ObservationPoint, String> {
    let s = s.strip_prefix('@').ok_or("assertion point must start with `@`")?;
    let (idx, kind) = s.split_once(' ').ok_or("expected `@k <kind>`")?;
    let action: usize = idx.parse().map_err(|_| format!("bad action index `{idx}`"))?;
    let kind = match kind.trim() {
        "return" => PointKind::ReturnValue,
        "raised" => PointKind::ExceptionMarker,
        k => {
            let rest = k.strip_prefix("field ").ok_or_else(|| format!("unknown point kind `{k}`"))?;
            let (label, field) = parse_label_member(rest.trim())?;
            let class = test.label_classes().get(label.as_str()).copied().unwrap_or("").to_string();
            PointKind::FieldState { class, label, field }
        }
    };
    let point = ObservationPoint { action, kind };
    if !test.observation_points().contains(&point) {
        return Err(format!("test has no observation point `{point}`"));
    }
    Ok(point)
}

impl FromStr for TestScript {
    type Err = ScriptError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut script = TestScript::default();
        let mut pending = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| ScriptError { line: i + 1, message };
            if let Some(comment) = line.strip_prefix('#') {
                for word in comment.split_whitespace() {
                    if let Some(v) = word.strip_prefix("seed=") {
                        script.test.provenance.seed = v.parse().map_err(|_| err("bad seed".into()))?;
                    } else if let Some(v) = word.strip_prefix("iteration=") {
                        script.test.provenance.iteration = v.parse().map_err(|_| err("bad iteration".into()))?;
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("assert ") {
                let (point, value) = rest.rsplit_once("==").ok_or_else(|| err("expected `==`".into()))?;
                let expected: Value = value.parse().map_err(err)?;
                if expected == Value::Unobserved {
                    return Err(err("cannot assert an unobserved value".into()));
                }
                pending.push((i + 1, point.trim().to_string(), expected));
                continue;
            }
            if !pending.is_empty() {
                return Err(err("actions must precede assertions".into()));
            }
            script.test.actions.push(parse_action(line).map_err(err)?);
        }
        if !script.test.is_well_formed() {
            return Err(ScriptError { line: 0, message: "object label used before definition or redefined".into() });
        }
        for (line, point, expected) in pending {
            let point = parse_point(&point, &script.test).map_err(|message| ScriptError { line, message })?;
            script.assertions.push(Assertion { point, expected });
        }
        Ok(script)
    }
}
