//! Search for regression tests that reveal merge conflicts.
//!
//! For every generation target (the merge first, then each parent) the units
//! under test are selected, a seeded evolutionary search looks for tests that
//! cover the target's changed lines, and each candidate is executed on the
//! oracle counterparts it can possibly behave differently on. Candidates whose
//! unanimously supported assertions satisfy the oracle verdict, and which are
//! stable across reruns, are reported.

pub mod case;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depgraph::{extract_dependencies, DependencyGraph, EdgeKind, EntityId, EntityKind};
use crate::diffing::{deletion_gaps, line_diff};
use crate::minilang::{
    run_test, visit_stmts, ExcKind, ExecutionResult, Literal, MethodDef, Program, StmtKind, Termination, Type, Value,
    DEFAULT_BUDGET,
};
use crate::oracle::{
    classify_violations, lost_behavior, unexpected_behavior, ExecutionValuation, OracleVerdict, PointKind,
    ViolationWitness,
};
use crate::scenario::{MergeScenario, Role};
use crate::uut_select::{impacted_closure, select_uuts, SelectedUut, SelectionConfig, SelectionError};
pub use case::{Action, Assertion, Provenance, Receiver, TestCase, TestScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criteria {
    /// Fitness is the fraction of changed lines covered.
    DiffLine,
    /// Changed lines plus branch, method and exception objectives.
    Multi,
}

pub const DEFAULT_INT_POOL: [i64; 9] = [-2, -1, 0, 1, 2, 10, 100, i64::MIN, i64::MAX];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    /// Interpreter steps per execution of one test on one version.
    pub exec_budget: u64,
    /// Candidate evaluations per generation target.
    pub search_budget: usize,
    pub population: usize,
    /// Probability that an offspring is mutated after crossover.
    pub mutation_rate: f64,
    pub criteria: Criteria,
    pub stability_runs: usize,
    pub int_pool: Vec<i64>,
    pub stop_first: bool,
    /// Longest action sequence (before the trailing field observations).
    pub max_actions: usize,
    pub max_reported: usize,
    pub selection: SelectionConfig,
    /// Worker threads for candidate evaluation; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Also execute skipped counterparts to confirm that skipping never hid
    /// a difference. Violations are counted in the statistics.
    pub verify_skip: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            exec_budget: DEFAULT_BUDGET,
            search_budget: 2000,
            population: 20,
            mutation_rate: 0.8,
            criteria: Criteria::DiffLine,
            stability_runs: 5,
            int_pool: DEFAULT_INT_POOL.to_vec(),
            stop_first: true,
            max_actions: 10,
            max_reported: 10,
            selection: SelectionConfig::default(),
            jobs: None,
            verify_skip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        self.selection.validate()?;
        if self.stability_runs == 0 {
            return Err(GenError::Config("stability runs must be at least 1".into()));
        }
        if self.population == 0 {
            return Err(GenError::Config("population must be at least 1".into()));
        }
        if self.int_pool.is_empty() {
            return Err(GenError::Config("integer literal pool is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(GenError::Config("mutation rate must lie in [0, 1]".into()));
        }
        if self.max_actions == 0 {
            return Err(GenError::Config("max actions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Runs tests on program versions. The interpreter is the production
/// implementation; tests substitute doubles.
pub trait Executor: Sync {
    fn execute(&self, program: &Program, test: &TestCase, budget: u64) -> ExecutionResult;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Interpreter;

impl Executor for Interpreter {
    fn execute(&self, program: &Program, test: &TestCase, budget: u64) -> ExecutionResult {
        run_test(program, test, budget)
    }
}

/// True iff `runs` executions of `test` on each version agree exactly.
pub fn check_stability(
    executor: &dyn Executor,
    test: &TestCase,
    versions: &[&Program],
    runs: usize,
    budget: u64,
) -> bool {
    versions.iter().all(|p| {
        let first = executor.execute(p, test, budget);
        (1..runs).all(|_| executor.execute(p, test, budget) == first)
    })
}

/// An assertion and the counterpart roles whose execution disagrees with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportedAssertion {
    pub assertion: Assertion,
    pub supported_by: Vec<Role>,
}

/// One assertion per point where the target differs from some variant, with
/// the target's value as expectation.
pub fn synthesize_assertions(
    target: &ExecutionResult,
    variants: &[(Role, &ExecutionResult)],
) -> Vec<SupportedAssertion> {
    let tv = &target.valuation;
    (0..tv.len())
        .filter(|&i| tv.value(i) != Value::Unobserved)
        .filter_map(|i| {
            let supported_by: Vec<Role> = variants
                .iter()
                .filter(|(_, r)| r.valuation.slots.get(i).map(|s| s.1) != Some(tv.value(i)))
                .map(|(role, _)| *role)
                .collect();
            (!supported_by.is_empty()).then(|| SupportedAssertion {
                assertion: Assertion { point: tv.point(i).clone(), expected: tv.value(i) },
                supported_by,
            })
        })
        .collect()
}

/// The subset of `assertions` every one of `variants` disagrees with.
pub fn unanimous(assertions: &[SupportedAssertion], variants: usize) -> Vec<Assertion> {
    assertions.iter().filter(|a| a.supported_by.len() == variants).map(|a| a.assertion.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Lost-behavior verdicts need a common ancestor.
    NoAncestor,
    NoUuts,
    /// An earlier target already produced a conflict and the run stops at
    /// the first one.
    StoppedEarly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum TargetStatus {
    Completed,
    Skipped(SkipReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictTest {
    pub test: TestCase,
    /// `.mlgtest` text of the test with its assertions.
    pub script: String,
    pub assertions: Vec<Assertion>,
    pub verdict: OracleVerdict,
    /// Versions the assertions fail on.
    pub counterparts: Vec<Role>,
    /// Per-slot classification over ancestor, both parents and merge; empty
    /// unless the scenario is a 3-way merge.
    pub witnesses: Vec<ViolationWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionTest {
    pub test: TestCase,
    pub script: String,
    pub exception: ExcKind,
    pub action: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub candidates_evaluated: usize,
    pub target_executions: usize,
    pub variant_executions: usize,
    pub skipped_executions: usize,
    /// Changed-line goals per counterpart.
    pub goals: BTreeMap<Role, usize>,
    /// Best fraction of each counterpart's goals covered by one test.
    pub max_coverage: BTreeMap<Role, f64>,
    pub unstable_rejected: usize,
    pub skip_soundness_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: Role,
    #[serde(flatten)]
    pub status: TargetStatus,
    pub uuts: Vec<SelectedUut>,
    pub fallback_used: bool,
    pub counterparts: Vec<Role>,
    pub conflicts: Vec<ConflictTest>,
    pub exception_tests: Vec<ExceptionTest>,
    pub stats: SearchStats,
}

impl TargetResult {
    fn skipped(target: Role, reason: SkipReason) -> Self {
        Self {
            target,
            status: TargetStatus::Skipped(reason),
            uuts: Vec::new(),
            fallback_used: false,
            counterparts: Vec::new(),
            conflicts: Vec::new(),
            exception_tests: Vec::new(),
            stats: SearchStats::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub scenario: String,
    pub targets: Vec<TargetResult>,
}

impl ConflictReport {
    pub fn conflict_count(&self) -> usize {
        self.targets.iter().map(|t| t.conflicts.len()).sum()
    }

    pub fn has_conflicts(&self) -> bool {
        self.conflict_count() > 0
    }
}

/// Versions a target's tests are judged against.
pub fn oracle_counterparts(scenario: &MergeScenario, target: Role) -> Option<Vec<Role>> {
    match target {
        Role::Merge => {
            let mut out: Vec<Role> = scenario.ancestor.iter().map(|_| Role::Ancestor).collect();
            out.extend((1..=scenario.parents.len()).map(Role::Parent));
            Some(out)
        }
        Role::Parent(_) if scenario.ancestor.is_some() => Some(vec![Role::Ancestor, Role::Merge]),
        _ => None,
    }
}

/// Runs the whole pipeline over every generation target in order.
pub fn detect(scenario: &MergeScenario, config: &GenConfig) -> Result<ConflictReport, GenError> {
    detect_with(&Interpreter, scenario, config)
}

pub fn detect_with(
    executor: &dyn Executor,
    scenario: &MergeScenario,
    config: &GenConfig,
) -> Result<ConflictReport, GenError> {
    config.validate()?;
    let mut targets = Vec::new();
    let mut stop = false;
    for role in scenario.generation_targets() {
        if oracle_counterparts(scenario, role).is_none() {
            targets.push(TargetResult::skipped(role, SkipReason::NoAncestor));
            continue;
        }
        if stop {
            targets.push(TargetResult::skipped(role, SkipReason::StoppedEarly));
            continue;
        }
        let target = scenario.version(role).expect("generation target exists");
        let others: Vec<&Program> =
            scenario.roles().into_iter().filter(|r| *r != role).filter_map(|r| scenario.version(r)).collect();
        let selection = select_uuts(target, &others, config.selection)?;
        let mut result = generate_for_target_with(executor, scenario, role, &selection.uuts, config)?;
        result.fallback_used = selection.fallback_used;
        stop = config.stop_first && !result.conflicts.is_empty();
        targets.push(result);
    }
    Ok(ConflictReport { scenario: scenario.id.clone(), targets })
}

pub fn generate_for_target(
    scenario: &MergeScenario,
    target: Role,
    uuts: &[SelectedUut],
    config: &GenConfig,
) -> Result<TargetResult, GenError> {
    generate_for_target_with(&Interpreter, scenario, target, uuts, config)
}

type Line = (String, u32);

/// Maps every source line to the traced line that executes whenever code on
/// it can: the statement starting the enclosing statement head, else the
/// enclosing field, member or class header.
struct LineAnchors {
    /// (file, line) -> (statement-level anchor, entity-level anchor)
    map: HashMap<Line, (u32, u32)>,
}

impl LineAnchors {
    fn new(program: &Program) -> Self {
        let mut map = HashMap::new();
        let set = |file: &str, from: u32, to: u32, stmt: u32, entity: u32, map: &mut HashMap<Line, (u32, u32)>| {
            for l in from..=to {
                map.insert((file.to_string(), l), (stmt, entity));
            }
        };
        let method = |m: &MethodDef, map: &mut HashMap<Line, (u32, u32)>| {
            let file = program.file_name(m.span.file);
            let header = m.span.start_line;
            set(file, m.span.start_line, m.span.end_line, header, header, map);
            visit_stmts(&m.body, &mut |s| {
                set(file, s.line, s.head_end_line, s.line, header, map);
                if let StmtKind::If { else_line: Some(l), .. } = &s.kind {
                    set(file, *l, *l, *l, header, map);
                }
            });
        };
        for c in &program.classes {
            let file = program.file_name(c.span.file);
            let header = c.span.start_line;
            set(file, c.span.start_line, c.span.end_line, header, header, &mut map);
            for f in &c.fields {
                set(file, f.span.start_line, f.span.end_line, f.span.start_line, header, &mut map);
            }
            c.constructor.iter().chain(&c.methods).for_each(|m| method(m, &mut map));
        }
        program.functions.iter().for_each(|f| method(f, &mut map));
        Self { map }
    }

    fn stmt(&self, file: &str, line: u32) -> Option<Line> {
        self.map.get(&(file.to_string(), line)).map(|(s, _)| (file.to_string(), *s))
    }

    fn entity(&self, file: &str, line: u32) -> Option<Line> {
        self.map.get(&(file.to_string(), line)).map(|(_, e)| (file.to_string(), *e))
    }
}

/// Traced lines of `target` a test must reach before its behavior on
/// `target` can differ from `variant`.
fn goal_lines(target: &Program, variant: &Program, files: &BTreeSet<String>, anchors: &LineAnchors) -> BTreeSet<Line> {
    let mut out = BTreeSet::new();
    for f in target.files.iter().filter(|f| files.contains(&f.name)) {
        let before = variant.files.iter().find(|v| v.name == f.name).map_or("", |v| v.text.as_str());
        for l in line_diff(before, &f.text) {
            out.extend(anchors.stmt(&f.name, l));
        }
        for gap in deletion_gaps(before, &f.text) {
            out.extend(anchors.entity(&f.name, gap));
            out.extend(anchors.entity(&f.name, gap + 1));
        }
    }
    out
}

fn entity_file(program: &Program, id: &EntityId) -> Option<String> {
    let span = if id.class.is_empty() {
        program.function(&id.name, id.arity)?.span
    } else {
        program.class(&id.class)?.span
    };
    Some(program.file_name(span.file).to_string())
}

/// Files whose code a test over `uuts` may execute or whose behavior the
/// UUTs impact.
fn goal_files(program: &Program, graph: &DependencyGraph, uuts: &[EntityId], depth: usize) -> BTreeSet<String> {
    let mut reach: BTreeSet<EntityId> = uuts.iter().cloned().collect();
    for u in uuts {
        if let Some(c) = program.class(&u.class) {
            reach.insert(EntityId::constructor(&c.name, c.constructor_arity()));
        }
    }
    let mut frontier: Vec<EntityId> = reach.iter().cloned().collect();
    while let Some(e) = frontier.pop() {
        for edge in graph.edges.iter().filter(|x| x.from == e) {
            let mut next = vec![edge.to.clone()];
            if edge.kind == EdgeKind::Calls && edge.to.kind == EntityKind::Constructor {
                next.push(EntityId::field(&edge.to.class, ""));
            }
            for n in next {
                if reach.insert(n.clone()) {
                    frontier.push(n);
                }
            }
        }
    }
    let seeds: BTreeSet<EntityId> = uuts.iter().cloned().collect();
    reach.extend(impacted_closure(graph, &seeds, depth).entries.into_keys());
    reach.iter().filter_map(|e| entity_file(program, e)).collect()
}

#[derive(Debug, Clone)]
struct CallSig {
    name: String,
    params: Vec<Type>,
    observe: bool,
}

impl CallSig {
    fn of(m: &MethodDef) -> Self {
        Self { name: m.name.clone(), params: m.params.iter().map(|p| p.ty.clone()).collect(), observe: m.ret != Type::Void }
    }
}

#[derive(Debug, Clone)]
struct ClassVocab {
    name: String,
    ctor: Vec<Type>,
    methods: Vec<CallSig>,
    fields: Vec<String>,
}

/// Everything a generated test may construct or call.
#[derive(Debug, Clone)]
struct Vocab {
    classes: Vec<ClassVocab>,
    functions: Vec<CallSig>,
    uuts: Vec<EntityId>,
}

#[derive(Debug, Clone)]
enum Callee {
    Method(usize, usize),
    Function(usize),
    Construct(usize),
}

impl Vocab {
    fn new(program: &Program, uuts: &[EntityId]) -> Self {
        let mut classes: Vec<ClassVocab> = Vec::new();
        let mut functions = Vec::new();
        for u in uuts {
            if u.class.is_empty() {
                if let Some(f) = program.function(&u.name, u.arity) {
                    functions.push(CallSig::of(f));
                }
            } else if !classes.iter().any(|c| c.name == u.class) {
                if let Some(c) = program.class(&u.class) {
                    classes.push(ClassVocab {
                        name: c.name.clone(),
                        ctor: c.constructor.iter().flat_map(|k| k.params.iter().map(|p| p.ty.clone())).collect(),
                        methods: c.methods.iter().map(CallSig::of).collect(),
                        fields: c.fields.iter().map(|f| f.name.clone()).collect(),
                    });
                }
            }
        }
        Self { classes, functions, uuts: uuts.to_vec() }
    }

    fn class(&self, name: &str) -> Option<&ClassVocab> {
        self.classes.iter().find(|c| c.name == name)
    }

    fn callees(&self) -> Vec<Callee> {
        let mut out = Vec::new();
        for (ci, c) in self.classes.iter().enumerate() {
            out.push(Callee::Construct(ci));
            out.extend((0..c.methods.len()).map(|mi| Callee::Method(ci, mi)));
        }
        out.extend((0..self.functions.len()).map(Callee::Function));
        out
    }

    fn uut_callee(&self, id: &EntityId) -> Option<Callee> {
        if id.class.is_empty() {
            let fi = self.functions.iter().position(|f| f.name == id.name && f.params.len() == id.arity)?;
            return Some(Callee::Function(fi));
        }
        let ci = self.classes.iter().position(|c| c.name == id.class)?;
        match id.kind {
            EntityKind::Constructor => Some(Callee::Construct(ci)),
            EntityKind::Method => {
                let mi = self.classes[ci].methods.iter().position(|m| m.name == id.name && m.params.len() == id.arity)?;
                Some(Callee::Method(ci, mi))
            }
            EntityKind::Field => None,
        }
    }
}

/// Seeded generator and variation operators over action lists.
struct Breeder<'a> {
    vocab: &'a Vocab,
    pool: &'a [i64],
    max_actions: usize,
    rng: ChaCha8Rng,
    next_label: usize,
}

impl Breeder<'_> {
    fn literal(&mut self, ty: &Type) -> Literal {
        match ty {
            Type::Bool => Literal::Bool(self.rng.gen()),
            _ => Literal::Int(*self.pool.choose(&mut self.rng).expect("non-empty pool")),
        }
    }

    fn args(&mut self, params: &[Type]) -> Vec<Literal> {
        params.iter().map(|t| self.literal(t)).collect()
    }

    fn fresh_label(&mut self) -> String {
        self.next_label += 1;
        format!("t{}", self.next_label)
    }

    fn construct(&mut self, ci: usize) -> Action {
        let c = &self.vocab.classes[ci];
        let (class, params) = (c.name.clone(), c.ctor.clone());
        Action::Construct { class, args: self.args(&params), label: self.fresh_label() }
    }

    /// Actions realizing one call, inserted so that they can use objects
    /// constructed in `before`.
    fn call_block(&mut self, callee: &Callee, before: &[Action]) -> Vec<Action> {
        match *callee {
            Callee::Construct(ci) => vec![self.construct(ci)],
            Callee::Function(fi) => {
                let f = self.vocab.functions[fi].clone();
                vec![Action::Invoke { receiver: Receiver::Toplevel, method: f.name, args: self.args(&f.params), observe: f.observe }]
            }
            Callee::Method(ci, mi) => {
                let class = &self.vocab.classes[ci].name;
                let labels: Vec<String> = before
                    .iter()
                    .filter_map(|a| match a {
                        Action::Construct { class: c, label, .. } if c == class => Some(label.clone()),
                        _ => None,
                    })
                    .collect();
                let mut out = Vec::new();
                let label = match labels.choose(&mut self.rng) {
                    Some(l) if self.rng.gen_bool(0.85) => l.clone(),
                    _ => {
                        let c = self.construct(ci);
                        let Action::Construct { label, .. } = &c else { unreachable!() };
                        let label = label.clone();
                        out.push(c);
                        label
                    }
                };
                let m = self.vocab.classes[ci].methods[mi].clone();
                out.push(Action::Invoke {
                    receiver: Receiver::Object(label),
                    method: m.name,
                    args: self.args(&m.params),
                    observe: m.observe,
                });
                out
            }
        }
    }

    fn random_callee(&mut self) -> Callee {
        if self.rng.gen_bool(0.4) {
            if let Some(u) = self.vocab.uuts.choose(&mut self.rng).and_then(|u| self.vocab.uut_callee(u)) {
                return u;
            }
        }
        let all = self.vocab.callees();
        all.choose(&mut self.rng).cloned().expect("vocabulary is non-empty")
    }

    fn random_test(&mut self) -> Vec<Action> {
        let len = self.rng.gen_range(1..=self.max_actions.min(6));
        let mut actions = Vec::new();
        for _ in 0..len {
            let callee = self.random_callee();
            let block = self.call_block(&callee, &actions);
            actions.extend(block);
        }
        self.repair(actions)
    }

    fn invokes(&self, actions: &[Action], uut: &EntityId) -> bool {
        let classes: HashMap<&str, &str> = actions
            .iter()
            .filter_map(|a| match a {
                Action::Construct { class, label, .. } => Some((label.as_str(), class.as_str())),
                _ => None,
            })
            .collect();
        actions.iter().any(|a| match (a, uut.kind) {
            (Action::Construct { class, args, .. }, EntityKind::Constructor) => {
                *class == uut.class && args.len() == uut.arity
            }
            (Action::Invoke { receiver: Receiver::Toplevel, method, args, .. }, EntityKind::Method) => {
                uut.class.is_empty() && *method == uut.name && args.len() == uut.arity
            }
            (Action::Invoke { receiver: Receiver::Object(l), method, args, .. }, EntityKind::Method) => {
                classes.get(l.as_str()) == Some(&uut.class.as_str()) && *method == uut.name && args.len() == uut.arity
            }
            _ => false,
        })
    }

    /// Drops dangling references and duplicate labels, bounds the length and
    /// makes sure every UUT is exercised.
    fn repair(&mut self, actions: Vec<Action>) -> Vec<Action> {
        let mut defined = BTreeSet::new();
        let mut out: Vec<Action> = Vec::new();
        for a in actions {
            let keep = match &a {
                Action::Construct { label, .. } => defined.insert(label.clone()),
                Action::Invoke { receiver: Receiver::Object(l), .. } => defined.contains(l),
                Action::Invoke { receiver: Receiver::Toplevel, .. } => true,
                Action::ObserveField { .. } => false,
            };
            if keep {
                out.push(a);
            }
        }
        out.truncate(self.max_actions);
        while out.last().is_some_and(|a| matches!(a, Action::Construct { .. })) && out.len() > 1 {
            out.pop();
        }
        for uut in self.vocab.uuts.clone() {
            if !self.invokes(&out, &uut) {
                if let Some(callee) = self.vocab.uut_callee(&uut) {
                    let block = self.call_block(&callee, &out);
                    out.extend(block);
                }
            }
        }
        out
    }

    fn mutate(&mut self, mut actions: Vec<Action>) -> Vec<Action> {
        match self.rng.gen_range(0..5) {
            0 => {
                // Perturb one literal.
                let sites: Vec<(usize, usize)> = actions
                    .iter()
                    .enumerate()
                    .flat_map(|(i, a)| (0..a.args().len()).map(move |j| (i, j)))
                    .collect();
                if let Some(&(i, j)) = sites.choose(&mut self.rng) {
                    let ty = actions[i].args()[j].ty();
                    let lit = self.literal(&ty);
                    actions[i].args_mut().expect("has args")[j] = lit;
                }
            }
            1 if actions.len() < self.max_actions => {
                let pos = self.rng.gen_range(0..=actions.len());
                let callee = self.random_callee();
                let block = self.call_block(&callee, &actions[..pos]);
                actions.splice(pos..pos, block);
            }
            2 if actions.len() > 1 => {
                let pos = self.rng.gen_range(0..actions.len());
                actions.remove(pos);
            }
            3 if actions.len() > 1 => {
                let i = self.rng.gen_range(0..actions.len());
                let j = self.rng.gen_range(0..actions.len());
                actions.swap(i, j);
            }
            _ => {
                // Re-draw every argument of one call.
                if !actions.is_empty() {
                    let i = self.rng.gen_range(0..actions.len());
                    let types: Vec<Type> = actions[i].args().iter().map(Literal::ty).collect();
                    let fresh = self.args(&types);
                    if let Some(args) = actions[i].args_mut() {
                        *args = fresh;
                    }
                }
            }
        }
        self.repair(actions)
    }

    fn crossover(&mut self, a: &[Action], b: &[Action]) -> Vec<Action> {
        let i = self.rng.gen_range(0..=a.len());
        let j = self.rng.gen_range(0..=b.len());
        let mut child = a[..i].to_vec();
        child.extend_from_slice(&b[j..]);
        self.repair(child)
    }
}

/// Renames labels to `o0, o1, ...` in construction order and appends a field
/// observation for every field of every constructed object.
fn materialize(actions: &[Action], vocab: &Vocab, provenance: Provenance) -> TestCase {
    let mut rename: HashMap<String, String> = HashMap::new();
    let mut objects: Vec<(String, String)> = Vec::new();
    let mut out = Vec::with_capacity(actions.len());
    for a in actions {
        let mut a = a.clone();
        match &mut a {
            Action::Construct { class, label, .. } => {
                let fresh = format!("o{}", rename.len());
                rename.insert(label.clone(), fresh.clone());
                objects.push((fresh.clone(), class.clone()));
                *label = fresh;
            }
            Action::Invoke { receiver: Receiver::Object(l), .. } | Action::ObserveField { label: l, .. } => {
                *l = rename[l.as_str()].clone();
            }
            Action::Invoke { .. } => {}
        }
        out.push(a);
    }
    for (label, class) in objects {
        if let Some(c) = vocab.class(&class) {
            for f in &c.fields {
                out.push(Action::ObserveField { label: label.clone(), field: f.clone() });
            }
        }
    }
    TestCase { actions: out, provenance }
}

/// Replaces the counterpart's observations of actions that did not resolve
/// there (missing entity) by the target's, so such actions never count as a
/// behavioral difference.
fn mask_link_errors(target: &ExecutionValuation, other: &ExecutionValuation) -> ExecutionValuation {
    let missing: BTreeSet<usize> = other
        .slots
        .iter()
        .zip(&target.slots)
        .filter(|((_, o), (_, t))| *o == Value::Exc(ExcKind::LinkError) && *t != Value::Exc(ExcKind::LinkError))
        .map(|((p, _), _)| p.action)
        .collect();
    let mut out = other.clone();
    for (slot, t) in out.slots.iter_mut().zip(&target.slots) {
        if missing.contains(&slot.0.action) {
            slot.1 = t.1;
        }
    }
    out
}

struct Evaluation {
    test: TestCase,
    target: ExecutionResult,
    /// Per counterpart: `None` when skipped because no goal was covered.
    variants: Vec<Option<ExecutionResult>>,
    covered_goals: Vec<usize>,
    fitness: f64,
    soundness_violations: usize,
}

struct Context<'a> {
    executor: &'a dyn Executor,
    config: &'a GenConfig,
    target: &'a Program,
    counterparts: Vec<(Role, &'a Program)>,
    goals: Vec<BTreeSet<Line>>,
    all_goals: BTreeSet<Line>,
    branch_points: BTreeSet<(String, u32, bool)>,
    uut_ids: BTreeSet<EntityId>,
}

impl Context<'_> {
    fn evaluate(&self, test: TestCase) -> Evaluation {
        let budget = self.config.exec_budget;
        let target = self.executor.execute(self.target, &test, budget);
        let mut variants = Vec::with_capacity(self.counterparts.len());
        let mut covered_goals = Vec::with_capacity(self.counterparts.len());
        let mut soundness_violations = 0;
        for ((_, program), goals) in self.counterparts.iter().zip(&self.goals) {
            let hit = goals.iter().filter(|g| target.covered_lines.contains(*g)).count();
            covered_goals.push(hit);
            if hit > 0 {
                variants.push(Some(self.executor.execute(program, &test, budget)));
            } else {
                if self.config.verify_skip {
                    let r = self.executor.execute(program, &test, budget);
                    if r.valuation != target.valuation {
                        soundness_violations += 1;
                    }
                }
                variants.push(None);
            }
        }
        let covered_all = self.all_goals.iter().filter(|g| target.covered_lines.contains(*g)).count();
        let diff_line = if self.all_goals.is_empty() { 0.0 } else { covered_all as f64 / self.all_goals.len() as f64 };
        let fitness = match self.config.criteria {
            Criteria::DiffLine => diff_line,
            Criteria::Multi => {
                let branch = if self.branch_points.is_empty() {
                    1.0
                } else {
                    self.branch_points.intersection(&target.branches).count() as f64 / self.branch_points.len() as f64
                };
                let methods = self.uut_ids.intersection(&target.entered).count() as f64 / self.uut_ids.len().max(1) as f64;
                let exceptions = if target.raised() { 1.0 } else { 0.0 };
                (diff_line + branch + methods + exceptions) / 4.0
            }
        };
        Evaluation { test, target, variants, covered_goals, fitness, soundness_violations }
    }
}

fn branch_points(program: &Program, uuts: &[EntityId]) -> BTreeSet<(String, u32, bool)> {
    let mut out = BTreeSet::new();
    for u in uuts {
        let body = if u.class.is_empty() {
            program.function(&u.name, u.arity)
        } else {
            program.class(&u.class).and_then(|c| match u.kind {
                EntityKind::Constructor => c.constructor.as_ref(),
                _ => c.method(&u.name, u.arity),
            })
        };
        if let Some(m) = body {
            let file = program.file_name(m.span.file);
            visit_stmts(&m.body, &mut |s| {
                if matches!(s.kind, StmtKind::If { .. } | StmtKind::While { .. }) {
                    out.insert((file.to_string(), s.line, true));
                    out.insert((file.to_string(), s.line, false));
                }
            });
        }
    }
    out
}

/// Key identifying what a conflict test pins down, used to drop duplicates.
fn conflict_key(test: &TestCase, assertions: &[Assertion]) -> Vec<String> {
    assertions
        .iter()
        .map(|a| {
            let what = match &test.actions[a.point.action] {
                Action::Construct { class, .. } => format!("new {class}"),
                Action::Invoke { method, .. } => method.clone(),
                Action::ObserveField { field, .. } => field.clone(),
            };
            let kind = match &a.point.kind {
                PointKind::ReturnValue => "return".to_string(),
                PointKind::ExceptionMarker => "raised".to_string(),
                PointKind::FieldState { class, field, .. } => format!("{class}.{field}"),
            };
            format!("{what} {kind} {}", a.expected)
        })
        .collect()
}

pub fn generate_for_target_with(
    executor: &dyn Executor,
    scenario: &MergeScenario,
    role: Role,
    uuts: &[SelectedUut],
    config: &GenConfig,
) -> Result<TargetResult, GenError> {
    config.validate()?;
    let Some(counterpart_roles) = oracle_counterparts(scenario, role) else {
        return Ok(TargetResult::skipped(role, SkipReason::NoAncestor));
    };
    let mut result = TargetResult::skipped(role, SkipReason::NoUuts);
    result.uuts = uuts.to_vec();
    result.counterparts = counterpart_roles.clone();
    if uuts.is_empty() {
        return Ok(result);
    }
    result.status = TargetStatus::Completed;

    let target = scenario.version(role).expect("target version exists");
    let uut_ids: Vec<EntityId> = uuts.iter().map(|u| u.id.clone()).collect();
    let graph = extract_dependencies(target);
    let files = goal_files(target, &graph, &uut_ids, config.selection.max_depth);
    let anchors = LineAnchors::new(target);
    let counterparts: Vec<(Role, &Program)> =
        counterpart_roles.iter().map(|r| (*r, scenario.version(*r).expect("counterpart exists"))).collect();
    let goals: Vec<BTreeSet<Line>> = counterparts.iter().map(|(_, p)| goal_lines(target, p, &files, &anchors)).collect();
    let all_goals: BTreeSet<Line> = goals.iter().flatten().cloned().collect();
    for ((r, _), g) in counterparts.iter().zip(&goals) {
        result.stats.goals.insert(*r, g.len());
        result.stats.max_coverage.insert(*r, 0.0);
    }
    if all_goals.is_empty() {
        return Ok(result);
    }

    let vocab = Vocab::new(target, &uut_ids);
    if vocab.callees().is_empty() {
        result.status = TargetStatus::Skipped(SkipReason::NoUuts);
        return Ok(result);
    }
    let ctx = Context {
        executor,
        config,
        target,
        counterparts,
        goals,
        all_goals,
        branch_points: branch_points(target, &uut_ids),
        uut_ids: uut_ids.iter().cloned().collect(),
    };
    let role_salt = match role {
        Role::Merge => 0,
        Role::Parent(k) => k as u64,
        Role::Ancestor => u64::MAX,
    };
    let mut breeder = Breeder {
        vocab: &vocab,
        pool: &config.int_pool,
        max_actions: config.max_actions,
        rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(role_salt)),
        next_label: 0,
    };
    let pool = config.jobs.map(|j| rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build().expect("thread pool"));
    let evaluate_batch = |batch: Vec<TestCase>| -> Vec<Evaluation> {
        let run = || batch.into_par_iter().map(|t| ctx.evaluate(t)).collect::<Vec<_>>();
        match &pool {
            Some(p) => p.install(run),
            None => run(),
        }
    };

    let mut population: Vec<(Vec<Action>, f64)> = Vec::new();
    let mut seen_keys: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut seen_exceptions: BTreeSet<(ExcKind, String)> = BTreeSet::new();
    let mut iteration: u64 = 0;
    let mut done = false;

    while !done && result.stats.candidates_evaluated < config.search_budget {
        let remaining = config.search_budget - result.stats.candidates_evaluated;
        let batch_size = config.population.min(remaining);
        let genomes: Vec<Vec<Action>> = (0..batch_size)
            .map(|_| {
                if population.len() < config.population {
                    breeder.random_test()
                } else {
                    let pick = |b: &mut Breeder| {
                        let i = b.rng.gen_range(0..population.len());
                        let j = b.rng.gen_range(0..population.len());
                        if population[i].1 >= population[j].1 { i } else { j }
                    };
                    let (p1, p2) = (pick(&mut breeder), pick(&mut breeder));
                    let mut child = breeder.crossover(&population[p1].0, &population[p2].0);
                    if breeder.rng.gen_bool(config.mutation_rate) {
                        child = breeder.mutate(child);
                    }
                    child
                }
            })
            .collect();
        let tests: Vec<TestCase> = genomes
            .iter()
            .map(|g| {
                iteration += 1;
                materialize(g, &vocab, Provenance { seed: config.seed, iteration })
            })
            .collect();
        let evaluations = evaluate_batch(tests);

        for (genome, eval) in genomes.into_iter().zip(evaluations) {
            let stats = &mut result.stats;
            stats.candidates_evaluated += 1;
            stats.target_executions += 1;
            stats.skip_soundness_violations += eval.soundness_violations;
            for (((r, _), g), hit) in ctx.counterparts.iter().zip(&ctx.goals).zip(&eval.covered_goals) {
                if !g.is_empty() {
                    let frac = *hit as f64 / g.len() as f64;
                    let best = stats.max_coverage.entry(*r).or_insert(0.0);
                    *best = best.max(frac);
                }
            }
            stats.variant_executions += eval.variants.iter().filter(|v| v.is_some()).count();
            stats.skipped_executions += eval.variants.iter().filter(|v| v.is_none()).count();

            if !done {
                if let Some(conflict) = judge(&ctx, scenario, role, &eval, &mut result, &mut seen_exceptions) {
                    let key = conflict_key(&conflict.test, &conflict.assertions);
                    if seen_keys.insert(key) {
                        result.conflicts.push(conflict);
                        if config.stop_first || result.conflicts.len() >= config.max_reported {
                            done = true;
                        }
                    }
                }
            }

            if population.len() < config.population {
                population.push((genome, eval.fitness));
            } else {
                let worst = (0..population.len())
                    .min_by(|&a, &b| population[a].1.total_cmp(&population[b].1))
                    .expect("non-empty population");
                if eval.fitness >= population[worst].1 {
                    population[worst] = (genome, eval.fitness);
                }
            }
        }
    }
    Ok(result)
}

/// Applies assertion synthesis, the oracle verdict and the stability check
/// to one evaluated candidate.
fn judge(
    ctx: &Context<'_>,
    scenario: &MergeScenario,
    role: Role,
    eval: &Evaluation,
    result: &mut TargetResult,
    seen_exceptions: &mut BTreeSet<(ExcKind, String)>,
) -> Option<ConflictTest> {
    let executed: Vec<(Role, &ExecutionResult)> =
        ctx.counterparts.iter().zip(&eval.variants).filter_map(|((r, _), v)| Some((*r, v.as_ref()?))).collect();
    if executed.is_empty() {
        return None;
    }

    if let Termination::Exception { .. } | Termination::BudgetExhausted = eval.target.terminated {
        let differs = executed.iter().any(|(_, r)| r.valuation != eval.target.valuation);
        let (exception, action) = match eval.target.terminated {
            Termination::Exception { kind, action } => (kind, Some(action)),
            _ => (ExcKind::BudgetExhausted, None),
        };
        let at = action.map(|a| eval.test.actions[a].to_string()).unwrap_or_default();
        if differs && result.exception_tests.len() < ctx.config.max_reported && seen_exceptions.insert((exception, at)) {
            let script = TestScript { test: eval.test.clone(), assertions: Vec::new() }.to_string();
            result.exception_tests.push(ExceptionTest { test: eval.test.clone(), script, exception, action });
        }
        return None;
    }

    // A counterpart that was skipped behaves like the target by construction.
    let target_val = &eval.target.valuation;
    let valuations: Vec<ExecutionValuation> = ctx
        .counterparts
        .iter()
        .zip(&eval.variants)
        .map(|(_, v)| match v {
            Some(r) => mask_link_errors(target_val, &r.valuation),
            None => target_val.clone(),
        })
        .collect();
    let verdict = match role {
        Role::Merge => {
            let refs: Vec<&ExecutionValuation> = valuations.iter().collect();
            unexpected_behavior(target_val, &refs).ok()??
        }
        Role::Parent(k) => lost_behavior(k, target_val, &valuations[0], &valuations[1]).ok()??,
        Role::Ancestor => return None,
    };

    let masked: Vec<ExecutionResult> = valuations
        .iter()
        .map(|v| ExecutionResult { valuation: v.clone(), ..eval.target.clone() })
        .collect();
    let supports: Vec<(Role, &ExecutionResult)> =
        ctx.counterparts.iter().map(|(r, _)| *r).zip(masked.iter()).collect();
    let assertions = unanimous(&synthesize_assertions(&eval.target, &supports), supports.len());
    debug_assert_eq!(assertions.len(), verdict.witness_slots.len());
    if assertions.is_empty() {
        return None;
    }

    let mut versions: Vec<&Program> = vec![ctx.target];
    versions.extend(ctx.counterparts.iter().map(|(_, p)| *p));
    if !check_stability(ctx.executor, &eval.test, &versions, ctx.config.stability_runs, ctx.config.exec_budget) {
        result.stats.unstable_rejected += 1;
        return None;
    }

    let witnesses = match (&scenario.ancestor, scenario.parents.as_slice()) {
        (Some(o), [a, b]) => {
            let run = |p: &Program| ctx.executor.execute(p, &eval.test, ctx.config.exec_budget).valuation;
            classify_violations(&run(o), &run(a), &run(b), &run(&scenario.merge)).unwrap_or_default()
        }
        _ => Vec::new(),
    };
    let script = TestScript { test: eval.test.clone(), assertions: assertions.clone() }.to_string();
    Some(ConflictTest {
        test: eval.test.clone(),
        script,
        assertions,
        verdict,
        counterparts: ctx.counterparts.iter().map(|(r, _)| *r).collect(),
        witnesses,
    })
}

/// Re-executes a reported conflict test: every assertion must hold on the
/// generation target and fail on every counterpart.
pub fn replay(scenario: &MergeScenario, target: Role, conflict: &ConflictTest, budget: u64) -> bool {
    let run = |role: Role| scenario.version(role).map(|p| run_test(p, &conflict.test, budget));
    let Some(on_target) = run(target) else { return false };
    if !conflict.assertions.iter().all(|a| a.holds(&on_target)) {
        return false;
    }
    conflict.counterparts.iter().all(|r| match run(*r) {
        Some(res) => conflict.assertions.iter().all(|a| !a.holds(&res)),
        None => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_str;
    use crate::oracle::ObservationPoint;

    fn result_with(values: &[Value]) -> ExecutionResult {
        let test = TestCase::default();
        let mut r = run_test(&parse_str("c.mlg", "fn f(): int { return 1; }").unwrap(), &test, 10);
        r.valuation = ExecutionValuation::from_values(values.iter().copied());
        r
    }

    #[test]
    fn unanimous_assertion_qualifies() {
        let t = result_with(&[Value::Int(5)]);
        let (a, b) = (result_with(&[Value::Int(4)]), result_with(&[Value::Int(4)]));
        let s = synthesize_assertions(&t, &[(Role::Parent(1), &a), (Role::Parent(2), &b)]);
        assert_eq!(s.len(), 1);
        assert_eq!(unanimous(&s, 2).len(), 1);
        assert_eq!(s[0].assertion.expected, Value::Int(5));

        let c = result_with(&[Value::Int(5)]);
        let s = synthesize_assertions(&t, &[(Role::Parent(1), &a), (Role::Parent(2), &c)]);
        assert!(unanimous(&s, 2).is_empty());
    }

    #[test]
    fn assertions_for_every_point_of_a_raising_action() {
        let mut t = result_with(&[]);
        let mut v = result_with(&[]);
        let ret = ObservationPoint { action: 2, kind: PointKind::ReturnValue };
        let marker = ObservationPoint { action: 2, kind: PointKind::ExceptionMarker };
        t.valuation.slots = vec![(ret.clone(), Value::Int(1)), (marker.clone(), Value::Bool(false))];
        v.valuation.slots =
            vec![(ret.clone(), Value::Exc(ExcKind::DivByZero)), (marker.clone(), Value::Exc(ExcKind::DivByZero))];
        let s = synthesize_assertions(&t, &[(Role::Parent(1), &v)]);
        let points: Vec<_> = s.iter().map(|a| a.assertion.point.clone()).collect();
        assert_eq!(points, vec![ret, marker]);
    }

    #[test]
    fn link_errors_are_masked_per_action() {
        let p = |a, k| ObservationPoint { action: a, kind: k };
        let target = ExecutionValuation {
            slots: vec![
                (p(0, PointKind::ReturnValue), Value::Int(1)),
                (p(0, PointKind::ExceptionMarker), Value::Bool(false)),
                (p(1, PointKind::ExceptionMarker), Value::Bool(false)),
            ],
        };
        let mut other = target.clone();
        other.slots[0].1 = Value::Exc(ExcKind::LinkError);
        other.slots[1].1 = Value::Exc(ExcKind::LinkError);
        other.slots[2].1 = Value::Exc(ExcKind::DivByZero);
        let masked = mask_link_errors(&target, &other);
        assert_eq!(masked.value(0), Value::Int(1));
        assert_eq!(masked.value(1), Value::Bool(false));
        assert_eq!(masked.value(2), Value::Exc(ExcKind::DivByZero));
    }

    #[test]
    fn anchors_follow_statement_heads() {
        let src = "class C {\n  var x: int = 0;\n  fn m(a: int): int {\n    if (a >\n        0) {\n      return 1;\n    } else {\n      return 2;\n    }\n  }\n}\n";
        let p = parse_str("c.mlg", src).unwrap();
        let a = LineAnchors::new(&p);
        assert_eq!(a.stmt("c.mlg", 5), Some(("c.mlg".into(), 4)));
        assert_eq!(a.stmt("c.mlg", 7), Some(("c.mlg".into(), 7)));
        assert_eq!(a.stmt("c.mlg", 9), Some(("c.mlg".into(), 3)));
        assert_eq!(a.stmt("c.mlg", 2), Some(("c.mlg".into(), 2)));
        assert_eq!(a.entity("c.mlg", 6), Some(("c.mlg".into(), 3)));
        assert_eq!(a.stmt("c.mlg", 11), Some(("c.mlg".into(), 1)));
        assert_eq!(a.stmt("c.mlg", 12), None);
    }
}
