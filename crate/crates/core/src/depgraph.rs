//! Entity-level dependency graph of one program version.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::minilang::{visit_exprs, visit_stmts, ExprKind, MethodDef, Program, StmtKind, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Field,
    Constructor,
    Method,
}

impl EntityKind {
    pub fn is_callable(self) -> bool {
        !matches!(self, EntityKind::Field)
    }
}

/// Signature identity of a field, constructor or method.
///
/// Ordering is lexicographic on (class, kind, name, arity) with
/// field < constructor < method. Top-level functions have an empty class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId {
    pub class: String,
    pub kind: EntityKind,
    pub name: String,
    pub arity: usize,
}

impl EntityId {
    pub fn new(class: &str, kind: EntityKind, name: &str, arity: usize) -> Self {
        Self { class: class.to_string(), kind, name: name.to_string(), arity }
    }

    pub fn field(class: &str, name: &str) -> Self {
        Self::new(class, EntityKind::Field, name, 0)
    }

    pub fn method(class: &str, name: &str, arity: usize) -> Self {
        Self::new(class, EntityKind::Method, name, arity)
    }

    pub fn constructor(class: &str, arity: usize) -> Self {
        Self::new(class, EntityKind::Constructor, "init", arity)
    }

    pub fn function(name: &str, arity: usize) -> Self {
        Self::new("", EntityKind::Method, name, arity)
    }

    pub fn is_callable(&self) -> bool {
        self.kind.is_callable()
    }

    /// `Class.name/arity`, unambiguous even with overloading.
    pub fn signature(&self) -> String {
        match self.kind {
            EntityKind::Field => self.to_string(),
            _ => format!("{self}/{}", self.arity),
        }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.class.is_empty() {
            f.write_str(&self.name)
        } else {
            write!(f, "{}.{}", self.class, self.name)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Calls,
    Reads,
    Writes,
    /// Constructor assigns the field.
    Defines,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: EntityId,
    pub to: EntityId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<EntityId>,
    pub edges: BTreeSet<Edge>,
}

impl DependencyGraph {
    pub fn add_edge(&mut self, from: EntityId, to: EntityId, kind: EdgeKind) {
        self.edges.insert(Edge { from, to, kind });
    }

    /// Reverse dependents of `entity`, plus the fields it defines when it is a
    /// constructor. Unknown entities have no impact.
    pub fn get_impacted(&self, entity: &EntityId) -> BTreeSet<EntityId> {
        if !self.nodes.contains(entity) {
            return BTreeSet::new();
        }
        let mut out = BTreeSet::new();
        for e in &self.edges {
            match e.kind {
                EdgeKind::Calls | EdgeKind::Reads | EdgeKind::Writes if &e.to == entity => {
                    out.insert(e.from.clone());
                }
                EdgeKind::Defines if &e.from == entity => {
                    out.insert(e.to.clone());
                }
                _ => {}
            }
        }
        out
    }

    /// Fields a method or constructor writes (plain `writes` edges).
    pub fn fields_written(&self, entity: &EntityId) -> BTreeSet<EntityId> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Writes && &e.from == entity)
            .map(|e| e.to.clone())
            .collect()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph deps {\n");
        for n in &self.nodes {
            let shape = match n.kind {
                EntityKind::Field => "ellipse",
                EntityKind::Constructor => "diamond",
                EntityKind::Method => "box",
            };
            let _ = writeln!(out, "  \"{}\" [shape={shape}];", n.signature());
        }
        for e in &self.edges {
            let label = match e.kind {
                EdgeKind::Calls => "calls",
                EdgeKind::Reads => "reads",
                EdgeKind::Writes => "writes",
                EdgeKind::Defines => "defines",
            };
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label={label}];", e.from.signature(), e.to.signature());
        }
        out.push_str("}\n");
        out
    }
}

/// One node per field, constructor and method; edges for every syntactic
/// call (including `new`), field read, field write and constructor field
/// assignment.
pub fn extract_dependencies(program: &Program) -> DependencyGraph {
    let mut g = DependencyGraph::default();
    for c in &program.classes {
        for f in &c.fields {
            g.nodes.insert(EntityId::field(&c.name, &f.name));
        }
        if let Some(ctor) = &c.constructor {
            g.nodes.insert(EntityId::constructor(&c.name, ctor.arity()));
        }
        for m in &c.methods {
            g.nodes.insert(EntityId::method(&c.name, &m.name, m.arity()));
        }
    }
    for f in &program.functions {
        g.nodes.insert(EntityId::function(&f.name, f.arity()));
    }

    for c in &program.classes {
        if let Some(ctor) = &c.constructor {
            body_edges(program, Some(&c.name), EntityId::constructor(&c.name, ctor.arity()), ctor, &mut g);
        }
        for m in &c.methods {
            body_edges(program, Some(&c.name), EntityId::method(&c.name, &m.name, m.arity()), m, &mut g);
        }
    }
    for f in &program.functions {
        body_edges(program, None, EntityId::function(&f.name, f.arity()), f, &mut g);
    }
    g
}

fn body_edges(program: &Program, class: Option<&str>, from: EntityId, m: &MethodDef, g: &mut DependencyGraph) {
    let is_ctor = from.kind == EntityKind::Constructor;
    let owner = class.unwrap_or("");

    // Locals are never shadowed inside one body, so a flat map is exact.
    let mut local_types: HashMap<&str, &Type> = HashMap::new();
    visit_stmts(&m.body, &mut |s| {
        if let StmtKind::VarDecl { name, ty, .. } = &s.kind {
            local_types.insert(name, ty);
        }
        if let StmtKind::FieldAssign { field, .. } = &s.kind {
            let kind = if is_ctor { EdgeKind::Defines } else { EdgeKind::Writes };
            g.add_edge(from.clone(), EntityId::field(owner, field), kind);
        }
    });

    visit_exprs(&m.body, &mut |e| match &e.kind {
        ExprKind::FieldRead(f) => g.add_edge(from.clone(), EntityId::field(owner, f), EdgeKind::Reads),
        ExprKind::CallSelf { method, args } => {
            g.add_edge(from.clone(), EntityId::method(owner, method, args.len()), EdgeKind::Calls)
        }
        ExprKind::CallFn { name, args } => {
            g.add_edge(from.clone(), EntityId::function(name, args.len()), EdgeKind::Calls)
        }
        ExprKind::CallOn { recv, method, args } => {
            let recv_class = match &recv.kind {
                ExprKind::Local(name) => match local_types.get(name.as_str()) {
                    Some(Type::Object(c)) => Some(c.as_str()),
                    _ => None,
                },
                ExprKind::New { class, .. } => Some(class.as_str()),
                _ => None,
            };
            if let Some(c) = recv_class {
                g.add_edge(from.clone(), EntityId::method(c, method, args.len()), EdgeKind::Calls);
            }
        }
        ExprKind::New { class, args } => {
            if program.class(class).is_some_and(|cd| cd.constructor.is_some()) {
                g.add_edge(from.clone(), EntityId::constructor(class, args.len()), EdgeKind::Calls);
            }
        }
        _ => {}
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_str;

    const SETGET_BASE: &str = "class C {
  var x: int = 0;
  var y: int = 0;
  fn setX(x: int): void { this.x = x; }
  fn setY(y: int): void { this.y = y; }
  fn getSum(): int { return this.x + this.y; }
}
";

    #[test]
    fn setters_and_getter_edges() {
        let g = extract_dependencies(&parse_str("c.mlg", SETGET_BASE).unwrap());
        let x = EntityId::field("C", "x");
        let y = EntityId::field("C", "y");
        let sum = EntityId::method("C", "getSum", 0);
        let set_x = EntityId::method("C", "setX", 1);
        let set_y = EntityId::method("C", "setY", 1);
        let expected: BTreeSet<Edge> = [
            (sum.clone(), x.clone(), EdgeKind::Reads),
            (sum.clone(), y.clone(), EdgeKind::Reads),
            (set_x.clone(), x.clone(), EdgeKind::Writes),
            (set_y.clone(), y.clone(), EdgeKind::Writes),
        ]
        .into_iter()
        .map(|(from, to, kind)| Edge { from, to, kind })
        .collect();
        assert_eq!(g.edges, expected);
        assert_eq!(g.nodes.len(), 5);
        assert_eq!(g.get_impacted(&x), BTreeSet::from([set_x, sum.clone()]));
        assert!(g.get_impacted(&sum).is_empty());
    }

    #[test]
    fn single_call_edge() {
        let g = extract_dependencies(
            &parse_str("c.mlg", "class C { fn m1(): int { return 1; } fn m2(): int { return this.m1(); } }").unwrap(),
        );
        let m1 = EntityId::method("C", "m1", 0);
        let m2 = EntityId::method("C", "m2", 0);
        assert!(g.edges.contains(&Edge { from: m2.clone(), to: m1.clone(), kind: EdgeKind::Calls }));
        assert_eq!(g.get_impacted(&m1), BTreeSet::from([m2]));
    }

    #[test]
    fn empty_class_has_no_nodes() {
        let g = extract_dependencies(&parse_str("c.mlg", "class C { }").unwrap());
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn constructor_defines_and_new_calls() {
        let src = "class C {
  var f: int = 0;
  init(v: int) { this.f = v; }
  fn m1(): int { return this.f; }
}
class D {
  fn make(): int { var c: C = new C(3); return c.m1(); }
}";
        let g = extract_dependencies(&parse_str("c.mlg", src).unwrap());
        let ctor = EntityId::constructor("C", 1);
        let f = EntityId::field("C", "f");
        let make = EntityId::method("D", "make", 0);
        assert!(g.edges.contains(&Edge { from: ctor.clone(), to: f.clone(), kind: EdgeKind::Defines }));
        assert!(g.edges.contains(&Edge { from: make.clone(), to: EntityId::method("C", "m1", 0), kind: EdgeKind::Calls }));
        // Defined fields plus callers of the constructor.
        assert_eq!(g.get_impacted(&ctor), BTreeSet::from([f, make]));
        for e in &g.edges {
            assert!(g.nodes.contains(&e.from) && g.nodes.contains(&e.to));
            if e.kind == EdgeKind::Defines {
                assert_eq!(e.from.kind, EntityKind::Constructor);
            }
        }
    }

    #[test]
    fn unknown_entity_has_no_impact() {
        let g = extract_dependencies(&parse_str("c.mlg", SETGET_BASE).unwrap());
        assert!(g.get_impacted(&EntityId::method("Nope", "m", 0)).is_empty());
    }

    #[test]
    fn entity_order() {
        let mut ids = vec![
            EntityId::method("C", "a", 0),
            EntityId::constructor("C", 0),
            EntityId::field("C", "z"),
            EntityId::function("f", 0),
        ];
        ids.sort();
        assert_eq!(ids[0], EntityId::function("f", 0));
        assert_eq!(ids[1].kind, EntityKind::Field);
        assert_eq!(ids[2].kind, EntityKind::Constructor);
        assert_eq!(ids[3].kind, EntityKind::Method);
    }

    #[test]
    fn dot_output_mentions_every_edge() {
        let g = extract_dependencies(&parse_str("c.mlg", SETGET_BASE).unwrap());
        let dot = g.to_dot();
        assert_eq!(dot.matches("->").count(), g.edges.len());
    }
}
