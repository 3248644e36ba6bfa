use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Kinds of abnormal completion an observation can record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExcKind {
    DivByZero,
    /// A test referenced a class, method, field or label that does not
    /// resolve in this version, or passed arguments of the wrong shape.
    LinkError,
    StackOverflow,
    BudgetExhausted,
}

impl ExcKind {
    pub const ALL: [ExcKind; 4] =
        [ExcKind::DivByZero, ExcKind::LinkError, ExcKind::StackOverflow, ExcKind::BudgetExhausted];

    pub fn name(self) -> &'static str {
        match self {
            ExcKind::DivByZero => "DivByZero",
            ExcKind::LinkError => "LinkError",
            ExcKind::StackOverflow => "StackOverflow",
            ExcKind::BudgetExhausted => "BudgetExhausted",
        }
    }
}

impl fmt::Display for ExcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An observed value. Derived equality gives the required semantics:
/// exceptions are equal iff their kinds are, `Unobserved` only equals itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Int(i64),
    Bool(bool),
    ObjectRef(u32),
    Exc(ExcKind),
    /// Result of calling a `void` method.
    Void,
    /// Slot never reached because the run stopped earlier.
    Unobserved,
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::ObjectRef(id) => write!(f, "obj#{id}"),
            Value::Exc(k) => write!(f, "exc:{k}"),
            Value::Void => f.write_str("void"),
            Value::Unobserved => f.write_str("unobserved"),
        }
    }
}

impl FromStr for Value {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "true" => return Ok(Value::Bool(true)),
            "false" => return Ok(Value::Bool(false)),
            "void" => return Ok(Value::Void),
            "unobserved" => return Ok(Value::Unobserved),
            _ => {}
        }
        if let Some(id) = s.strip_prefix("obj#") {
            return id.parse().map(Value::ObjectRef).map_err(|_| format!("bad object reference `{s}`"));
        }
        if let Some(kind) = s.strip_prefix("exc:") {
            return ExcKind::ALL
                .into_iter()
                .find(|k| k.name() == kind)
                .map(Value::Exc)
                .ok_or_else(|| format!("unknown exception kind `{kind}`"));
        }
        s.parse::<i64>().map(Value::Int).map_err(|_| format!("bad value `{s}`"))
    }
}
