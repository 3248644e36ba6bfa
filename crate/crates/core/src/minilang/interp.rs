//! Deterministic tree-walking interpreter with line tracing and step budgets.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::value::{ExcKind, Value};
use crate::depgraph::{EntityId, EntityKind};
use crate::oracle::ExecutionValuation;
use crate::testgen::case::{Action, Receiver, TestCase};

pub const DEFAULT_BUDGET: u64 = 100_000;

/// Nested MiniLang calls deeper than this raise `StackOverflow`.
pub const MAX_CALL_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Normal,
    Exception { kind: ExcKind, action: usize },
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    pub valuation: ExecutionValuation,
    /// (file, line) of every executed statement, entered entity header,
    /// initialized field declaration and taken `else`.
    pub covered_lines: BTreeSet<(String, u32)>,
    pub steps_used: u64,
    pub terminated: Termination,
    /// (file, line of the branching statement, outcome).
    pub branches: BTreeSet<(String, u32, bool)>,
    pub entered: BTreeSet<EntityId>,
}

impl ExecutionResult {
    pub fn raised(&self) -> bool {
        !matches!(self.terminated, Termination::Normal)
    }
}

enum Fault {
    Raise(ExcKind),
    OutOfBudget,
}

enum Flow {
    Normal,
    Return(Value),
}

struct Obj {
    class: usize,
    fields: Vec<Value>,
}

struct Frame {
    this: Option<u32>,
    file: usize,
    locals: Vec<(String, Value)>,
}

impl Frame {
    fn get(&self, name: &str) -> Value {
        self.locals.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v).expect("checked local")
    }

    fn set(&mut self, name: &str, v: Value) {
        let slot = self.locals.iter_mut().rev().find(|(n, _)| n == name).expect("checked local");
        slot.1 = v;
    }
}

struct Machine<'p> {
    program: &'p Program,
    heap: Vec<Obj>,
    steps: u64,
    budget: u64,
    depth: usize,
    covered: BTreeSet<(usize, u32)>,
    branches: BTreeSet<(usize, u32, bool)>,
    entered: BTreeSet<EntityId>,
}

type Exec<T> = Result<T, Fault>;

impl<'p> Machine<'p> {
    fn tick(&mut self) -> Exec<()> {
        if self.steps >= self.budget {
            return Err(Fault::OutOfBudget);
        }
        self.steps += 1;
        Ok(())
    }

    fn class_index(&self, name: &str) -> Option<usize> {
        self.program.classes.iter().position(|c| c.name == name)
    }

    fn instantiate(&mut self, class: usize, args: Vec<Value>) -> Exec<u32> {
        self.tick()?;
        let program = self.program;
        let cd = &program.classes[class];
        self.covered.insert((cd.span.file, cd.span.start_line));
        let mut fields = Vec::with_capacity(cd.fields.len());
        for f in &cd.fields {
            self.covered.insert((f.span.file, f.span.start_line));
            fields.push(match f.init {
                Literal::Int(v) => Value::Int(v),
                Literal::Bool(b) => Value::Bool(b),
            });
        }
        let id = self.heap.len() as u32;
        self.heap.push(Obj { class, fields });
        if let Some(ctor) = &cd.constructor {
            self.call(Some(&cd.name), EntityKind::Constructor, ctor, Some(id), args)?;
        }
        Ok(id)
    }

    fn call(
        &mut self,
        owner: Option<&str>,
        kind: EntityKind,
        m: &'p MethodDef,
        this: Option<u32>,
        args: Vec<Value>,
    ) -> Exec<Value> {
        self.tick()?;
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Fault::Raise(ExcKind::StackOverflow));
        }
        self.entered.insert(EntityId::new(owner.unwrap_or(""), kind, &m.name, m.arity()));
        self.covered.insert((m.span.file, m.span.start_line));
        let mut frame = Frame {
            this,
            file: m.span.file,
            locals: m.params.iter().map(|p| p.name.clone()).zip(args).collect(),
        };
        self.depth += 1;
        let flow = self.block(&mut frame, &m.body);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::Void),
        }
    }

    fn block(&mut self, frame: &mut Frame, stmts: &'p [Stmt]) -> Exec<Flow> {
        let mark = frame.locals.len();
        for s in stmts {
            if let Flow::Return(v) = self.stmt(frame, s)? {
                frame.locals.truncate(mark);
                return Ok(Flow::Return(v));
            }
        }
        frame.locals.truncate(mark);
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, frame: &mut Frame, s: &'p Stmt) -> Exec<Flow> {
        self.tick()?;
        self.covered.insert((frame.file, s.line));
        match &s.kind {
            StmtKind::VarDecl { name, init, .. } => {
                let v = self.eval(frame, init)?;
                frame.locals.push((name.clone(), v));
            }
            StmtKind::Assign { name, value } => {
                let v = self.eval(frame, value)?;
                frame.set(name, v);
            }
            StmtKind::FieldAssign { field, value } => {
                let v = self.eval(frame, value)?;
                let this = frame.this.expect("checked this");
                let obj = &mut self.heap[this as usize];
                let idx = self.program.classes[obj.class].field_index(field).expect("checked field");
                obj.fields[idx] = v;
            }
            StmtKind::If { cond, then_body, else_body, else_line } => {
                let taken = self.eval(frame, cond)? == Value::Bool(true);
                self.branches.insert((frame.file, s.line, taken));
                if taken {
                    return self.block(frame, then_body);
                } else if let Some(e) = else_body {
                    if let Some(l) = else_line {
                        self.covered.insert((frame.file, *l));
                    }
                    return self.block(frame, e);
                }
            }
            StmtKind::While { cond, body } => loop {
                let taken = self.eval(frame, cond)? == Value::Bool(true);
                self.branches.insert((frame.file, s.line, taken));
                if !taken {
                    break;
                }
                if let Flow::Return(v) = self.block(frame, body)? {
                    return Ok(Flow::Return(v));
                }
                self.tick()?;
            },
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(frame, e)?,
                    None => Value::Void,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Expr(e) => {
                self.eval(frame, e)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn args(&mut self, frame: &mut Frame, args: &'p [Expr]) -> Exec<Vec<Value>> {
        args.iter().map(|a| self.eval(frame, a)).collect()
    }

    fn eval(&mut self, frame: &mut Frame, e: &'p Expr) -> Exec<Value> {
        Ok(match &e.kind {
            ExprKind::Lit(Literal::Int(v)) => Value::Int(*v),
            ExprKind::Lit(Literal::Bool(b)) => Value::Bool(*b),
            ExprKind::Local(name) => frame.get(name),
            ExprKind::FieldRead(field) => {
                let obj = &self.heap[frame.this.expect("checked this") as usize];
                let idx = self.program.classes[obj.class].field_index(field).expect("checked field");
                obj.fields[idx]
            }
            ExprKind::Unary(UnOp::Neg, inner) => match self.eval(frame, inner)? {
                Value::Int(v) => Value::Int(v.wrapping_neg()),
                other => unreachable!("checked neg operand {other:?}"),
            },
            ExprKind::Unary(UnOp::Not, inner) => match self.eval(frame, inner)? {
                Value::Bool(b) => Value::Bool(!b),
                other => unreachable!("checked not operand {other:?}"),
            },
            ExprKind::Binary(BinOp::And, l, r) => {
                if self.eval(frame, l)? == Value::Bool(false) {
                    Value::Bool(false)
                } else {
                    self.eval(frame, r)?
                }
            }
            ExprKind::Binary(BinOp::Or, l, r) => {
                if self.eval(frame, l)? == Value::Bool(true) {
                    Value::Bool(true)
                } else {
                    self.eval(frame, r)?
                }
            }
            ExprKind::Binary(op, l, r) => {
                let lv = self.eval(frame, l)?;
                let rv = self.eval(frame, r)?;
                binary(*op, lv, rv)?
            }
            ExprKind::CallSelf { method, args } => {
                let argv = self.args(frame, args)?;
                let this = frame.this.expect("checked this");
                let cd = &self.program.classes[self.heap[this as usize].class];
                let m = cd.method(method, argv.len()).expect("checked method");
                self.call(Some(&cd.name), EntityKind::Method, m, Some(this), argv)?
            }
            ExprKind::CallFn { name, args } => {
                let argv = self.args(frame, args)?;
                let f = self.program.function(name, argv.len()).expect("checked function");
                self.call(None, EntityKind::Method, f, None, argv)?
            }
            ExprKind::CallOn { recv, method, args } => {
                let target = match self.eval(frame, recv)? {
                    Value::ObjectRef(id) => id,
                    other => unreachable!("checked receiver {other:?}"),
                };
                let argv = self.args(frame, args)?;
                let cd = &self.program.classes[self.heap[target as usize].class];
                let m = cd.method(method, argv.len()).expect("checked method");
                self.call(Some(&cd.name), EntityKind::Method, m, Some(target), argv)?
            }
            ExprKind::New { class, args } => {
                let argv = self.args(frame, args)?;
                let idx = self.class_index(class).expect("checked class");
                Value::ObjectRef(self.instantiate(idx, argv)?)
            }
        })
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> Exec<Value> {
    use BinOp::*;
    Ok(match (op, l, r) {
        (Add, Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_add(b)),
        (Sub, Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_sub(b)),
        (Mul, Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_mul(b)),
        (Div | Rem, Value::Int(_), Value::Int(0)) => return Err(Fault::Raise(ExcKind::DivByZero)),
        (Div, Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_div(b)),
        (Rem, Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_rem(b)),
        (Lt, Value::Int(a), Value::Int(b)) => Value::Bool(a < b),
        (Le, Value::Int(a), Value::Int(b)) => Value::Bool(a <= b),
        (Gt, Value::Int(a), Value::Int(b)) => Value::Bool(a > b),
        (Ge, Value::Int(a), Value::Int(b)) => Value::Bool(a >= b),
        (Eq, a, b) => Value::Bool(a == b),
        (Ne, a, b) => Value::Bool(a != b),
        (op, a, b) => unreachable!("checked operands {op:?} {a:?} {b:?}"),
    })
}

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Int(v) => Value::Int(*v),
        Literal::Bool(b) => Value::Bool(*b),
    }
}

fn args_match(params: &[Param], args: &[Literal]) -> bool {
    params.len() == args.len() && params.iter().zip(args).all(|(p, a)| p.ty == a.ty())
}

/// Runs one test against one program version.
///
/// Never fails: unresolvable references show up as `LinkError` values and do
/// not stop the run, raised exceptions and budget exhaustion stop it and leave
/// every later slot `Unobserved`.
pub fn run_test(program: &Program, test: &TestCase, budget: u64) -> ExecutionResult {
    let points = test.observation_points();
    let mut values: Vec<Value> = Vec::with_capacity(points.len());
    let mut m = Machine {
        program,
        heap: Vec::new(),
        steps: 0,
        budget,
        depth: 0,
        covered: BTreeSet::new(),
        branches: BTreeSet::new(),
        entered: BTreeSet::new(),
    };
    let mut labels: HashMap<&str, Option<u32>> = HashMap::new();
    let mut terminated = Termination::Normal;

    for (k, action) in test.actions.iter().enumerate() {
        let slots = action.point_count();
        if terminated != Termination::Normal {
            values.extend(std::iter::repeat(Value::Unobserved).take(slots));
            continue;
        }
        let outcome: Result<Value, Option<Fault>> = match action {
            Action::Construct { class, args, label } => {
                let res = match m.class_index(class) {
                    Some(ci) => {
                        let cd = &program.classes[ci];
                        let ok = match &cd.constructor {
                            Some(c) => args_match(&c.params, args),
                            None => args.is_empty(),
                        };
                        if ok {
                            m.instantiate(ci, args.iter().map(literal_value).collect()).map_err(Some)
                        } else {
                            Err(None)
                        }
                    }
                    None => Err(None),
                };
                labels.insert(label.as_str(), res.as_ref().ok().copied());
                res.map(|_| Value::Bool(false))
            }
            Action::Invoke { receiver, method, args, .. } => {
                let argv: Vec<Value> = args.iter().map(literal_value).collect();
                match receiver {
                    Receiver::Toplevel => match program.function(method, args.len()) {
                        Some(f) if args_match(&f.params, args) => m.call(None, EntityKind::Method, f, None, argv).map_err(Some),
                        _ => Err(None),
                    },
                    Receiver::Object(label) => match labels.get(label.as_str()).copied().flatten() {
                        Some(obj) => {
                            let cd = &program.classes[m.heap[obj as usize].class];
                            match cd.method(method, args.len()) {
                                Some(md) if args_match(&md.params, args) => {
                                    m.call(Some(&cd.name), EntityKind::Method, md, Some(obj), argv).map_err(Some)
                                }
                                _ => Err(None),
                            }
                        }
                        None => Err(None),
                    },
                }
            }
            Action::ObserveField { label, field } => match labels.get(label.as_str()).copied().flatten() {
                Some(obj) => {
                    let o = &m.heap[obj as usize];
                    match program.classes[o.class].field_index(field) {
                        Some(i) => Ok(o.fields[i]),
                        None => Err(None),
                    }
                }
                None => Err(None),
            },
        };

        let (primary, marker) = match outcome {
            Ok(v) => (v, Value::Bool(false)),
            Err(None) => (Value::Exc(ExcKind::LinkError), Value::Exc(ExcKind::LinkError)),
            Err(Some(Fault::Raise(kind))) => {
                terminated = Termination::Exception { kind, action: k };
                (Value::Exc(kind), Value::Exc(kind))
            }
            Err(Some(Fault::OutOfBudget)) => {
                terminated = Termination::BudgetExhausted;
                (Value::Exc(ExcKind::BudgetExhausted), Value::Exc(ExcKind::BudgetExhausted))
            }
        };
        if action.has_primary_point() {
            values.push(primary);
        }
        values.push(marker);
    }

    debug_assert_eq!(values.len(), points.len());
    let file = |i: usize| program.file_name(i).to_string();
    ExecutionResult {
        valuation: ExecutionValuation { slots: points.into_iter().zip(values).collect() },
        covered_lines: m.covered.into_iter().map(|(f, l)| (file(f), l)).collect(),
        steps_used: m.steps,
        terminated,
        branches: m.branches.into_iter().map(|(f, l, b)| (file(f), l, b)).collect(),
        entered: m.entered,
    }
}
