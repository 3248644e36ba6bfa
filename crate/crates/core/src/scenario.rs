//! Merge scenarios, their JSON manifests, and construction of conflicting
//! merge benchmarks from a bug fix by mutation and textual merging.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diffing::{entity_diff, merge_programs, octopus_merge_programs, ProgramMerge};
use crate::minilang::lexer::{tokenize, TokenKind};
use crate::minilang::{self, run_test, visit_stmts, Diagnostics, Program, SourceFile, StmtKind, DEFAULT_BUDGET};
use crate::testgen::case::TestScript;

/// Role of one version inside a merge scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Merge,
    /// 1-based parent index.
    Parent(usize),
    Ancestor,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Merge => f.write_str("merge"),
            Role::Parent(k) => write!(f, "parent{k}"),
            Role::Ancestor => f.write_str("ancestor"),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "merge" => Ok(Role::Merge),
            "ancestor" => Ok(Role::Ancestor),
            _ => s
                .strip_prefix("parent")
                .and_then(|k| k.parse().ok())
                .filter(|k| *k >= 1)
                .map(Role::Parent)
                .ok_or_else(|| format!("unknown role `{s}` (expected merge, ancestor or parentN)")),
        }
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "2way")]
    TwoWay,
    #[serde(rename = "3way")]
    ThreeWay,
    #[serde(rename = "octopus")]
    Octopus,
}

#[derive(Debug, Clone)]
pub struct MergeScenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub ancestor: Option<Program>,
    pub parents: Vec<Program>,
    pub merge: Program,
    /// Test certifying the scenario as a conflict: fails on the merge,
    /// passes on the first parent.
    pub fix_test: Option<TestScript>,
}

impl MergeScenario {
    pub fn new(
        id: impl Into<String>,
        kind: ScenarioKind,
        ancestor: Option<Program>,
        parents: Vec<Program>,
        merge: Program,
    ) -> Result<Self, ScenarioError> {
        let id = id.into();
        check_shape(&id, kind, ancestor.is_some(), parents.len())?;
        let ancestor = ancestor.map(|p| p.with_label("ancestor"));
        let parents = parents.into_iter().enumerate().map(|(i, p)| p.with_label(format!("parent{}", i + 1))).collect();
        Ok(Self { id, kind, ancestor, parents, merge: merge.with_label("merge"), fix_test: None })
    }

    pub fn version(&self, role: Role) -> Option<&Program> {
        match role {
            Role::Merge => Some(&self.merge),
            Role::Parent(k) => self.parents.get(k.checked_sub(1)?),
            Role::Ancestor => self.ancestor.as_ref(),
        }
    }

    /// Every version present, ancestor first and merge last.
    pub fn roles(&self) -> Vec<Role> {
        let mut out = Vec::new();
        if self.ancestor.is_some() {
            out.push(Role::Ancestor);
        }
        out.extend((1..=self.parents.len()).map(Role::Parent));
        out.push(Role::Merge);
        out
    }

    /// Generation order: the merge first, then each parent.
    pub fn generation_targets(&self) -> Vec<Role> {
        std::iter::once(Role::Merge).chain((1..=self.parents.len()).map(Role::Parent)).collect()
    }
}

fn check_shape(id: &str, kind: ScenarioKind, has_ancestor: bool, parents: usize) -> Result<(), ScenarioError> {
    let ok = match kind {
        ScenarioKind::TwoWay => !has_ancestor && parents == 2,
        ScenarioKind::ThreeWay => has_ancestor && parents == 2,
        ScenarioKind::Octopus => has_ancestor && parents >= 3,
    };
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Schema {
            path: PathBuf::from(id),
            message: format!(
                "{kind:?} scenario cannot have {parents} parents {} an ancestor",
                if has_ancestor { "and" } else { "without" }
            ),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: invalid manifest: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{role} version at {}: {diagnostics}", path.display())]
    Parse { role: String, path: PathBuf, diagnostics: Diagnostics },
    #[error("{}: {source}", path.display())]
    Script { path: PathBuf, source: crate::testgen::case::ScriptError },
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioManifest {
    pub id: String,
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancestor: Option<PathBuf>,
    pub parents: Vec<PathBuf>,
    pub merge: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix_test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixManifest {
    pub id: String,
    pub buggy: PathBuf,
    pub fixed: PathBuf,
    pub fix_test: PathBuf,
}

/// A bug, its fix, and the test telling them apart.
#[derive(Debug, Clone)]
pub struct FixScenarioInput {
    pub id: String,
    pub buggy: Program,
    pub fixed: Program,
    pub fix_test: TestScript,
}

impl FixScenarioInput {
    /// Checks that the fix test fails on the buggy and passes on the fixed
    /// version.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if passes(&self.buggy, &self.fix_test) {
            return Err(ScenarioError::Precondition(format!("{}: fix test passes on the buggy version", self.id)));
        }
        if !passes(&self.fixed, &self.fix_test) {
            return Err(ScenarioError::Precondition(format!("{}: fix test fails on the fixed version", self.id)));
        }
        Ok(())
    }
}

/// Whether every assertion of `script` holds on `program`.
pub fn passes(program: &Program, script: &TestScript) -> bool {
    let result = run_test(program, &script.test, DEFAULT_BUDGET);
    script.assertions.iter().all(|a| a.holds(&result))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Schema { path: path.into(), message: e.to_string() })
}

/// Loads and checks every `.mlg` file of a version directory.
pub fn load_version(dir: &Path, role: &str) -> Result<Program, ScenarioError> {
    let files = minilang::load_dir(dir).map_err(|source| ScenarioError::Io { path: dir.into(), source })?;
    if files.is_empty() {
        return Err(ScenarioError::Schema {
            path: dir.into(),
            message: format!("{role} version directory has no .mlg files"),
        });
    }
    minilang::parse(&files)
        .map(|p| p.with_label(role))
        .map_err(|diagnostics| ScenarioError::Parse { role: role.to_string(), path: dir.into(), diagnostics })
}

pub fn load_script(path: &Path) -> Result<TestScript, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    text.parse().map_err(|source| ScenarioError::Script { path: path.into(), source })
}

fn base_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new("."))
}

/// Loads a scenario manifest and all versions it names. Paths are relative to
/// the manifest. A manifest with a `fix_test` is re-validated: the merge must
/// fail it and the first parent must pass it.
pub fn load_scenario(manifest: &Path) -> Result<MergeScenario, ScenarioError> {
    let m: ScenarioManifest = read_json(manifest)?;
    let dir = base_dir(manifest);
    check_shape(&m.id, m.kind, m.ancestor.is_some(), m.parents.len())
        .map_err(|e| match e {
            ScenarioError::Schema { message, .. } => ScenarioError::Schema { path: manifest.into(), message },
            other => other,
        })?;
    let ancestor = m.ancestor.as_ref().map(|p| load_version(&dir.join(p), "ancestor")).transpose()?;
    let parents = m
        .parents
        .iter()
        .enumerate()
        .map(|(i, p)| load_version(&dir.join(p), &format!("parent{}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let merge = load_version(&dir.join(&m.merge), "merge")?;
    let mut scenario = MergeScenario::new(m.id, m.kind, ancestor, parents, merge)?;
    if let Some(t) = &m.fix_test {
        let script = load_script(&dir.join(t))?;
        if passes(&scenario.merge, &script) {
            return Err(ScenarioError::Precondition(format!("{}: merge passes the fix test", scenario.id)));
        }
        if !passes(&scenario.parents[0], &script) {
            return Err(ScenarioError::Precondition(format!("{}: first parent fails the fix test", scenario.id)));
        }
        scenario.fix_test = Some(script);
    }
    Ok(scenario)
}

pub fn load_fix_input(manifest: &Path) -> Result<FixScenarioInput, ScenarioError> {
    let m: FixManifest = read_json(manifest)?;
    let dir = base_dir(manifest);
    let input = FixScenarioInput {
        id: m.id,
        buggy: load_version(&dir.join(&m.buggy), "buggy")?,
        fixed: load_version(&dir.join(&m.fixed), "fixed")?,
        fix_test: load_script(&dir.join(&m.fix_test))?,
    };
    input.validate()?;
    Ok(input)
}

fn write_version(dir: &Path, p: &Program) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in &p.files {
        std::fs::write(dir.join(&f.name), &f.text)?;
    }
    Ok(())
}

/// Writes a scenario as a directory with one sub-directory per version and a
/// `manifest.json`. Returns the manifest path.
pub fn write_scenario(scenario: &MergeScenario, dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut parents = Vec::new();
    for (i, p) in scenario.parents.iter().enumerate() {
        let name = format!("parent{}", i + 1);
        write_version(&dir.join(&name), p)?;
        parents.push(PathBuf::from(name));
    }
    if let Some(a) = &scenario.ancestor {
        write_version(&dir.join("ancestor"), a)?;
    }
    write_version(&dir.join("merge"), &scenario.merge)?;
    if let Some(t) = &scenario.fix_test {
        std::fs::write(dir.join("fix_test.mlgtest"), t.to_string())?;
    }
    let manifest = ScenarioManifest {
        id: scenario.id.clone(),
        kind: scenario.kind,
        ancestor: scenario.ancestor.as_ref().map(|_| PathBuf::from("ancestor")),
        parents,
        merge: PathBuf::from("merge"),
        fix_test: scenario.fix_test.as_ref().map(|_| PathBuf::from("fix_test.mlgtest")),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOperator {
    /// Arithmetic operator replacement.
    Aor,
    /// Relational operator replacement.
    Ror,
    /// Integer constant `c` to `c+1`, `c-1` or `0`.
    Constant,
    /// Deletion of a single-line statement other than `return`.
    StatementDeletion,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 4] =
        [MutationOperator::Aor, MutationOperator::Ror, MutationOperator::Constant, MutationOperator::StatementDeletion];
}

#[derive(Debug, Clone)]
pub struct Mutant {
    pub program: Program,
    pub operator: MutationOperator,
    pub file: String,
    pub line: u32,
    pub description: String,
}

struct Edit {
    file: usize,
    start: usize,
    end: usize,
    replacement: String,
    operator: MutationOperator,
    line: u32,
}

const ARITH: [&str; 5] = ["+", "-", "*", "/", "%"];
const REL: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];

fn ends_operand(kind: &TokenKind) -> bool {
    matches!(kind, TokenKind::Ident(_) | TokenKind::Int(_) | TokenKind::True | TokenKind::False | TokenKind::RParen)
}

fn collect_edits(program: &Program, targets: &BTreeSet<(String, u32)>, ops: &[MutationOperator]) -> Vec<Edit> {
    let mut edits = Vec::new();
    let on_target = |file: usize, line: u32| targets.contains(&(program.files[file].name.clone(), line));
    for (fi, file) in program.files.iter().enumerate() {
        let Ok(tokens) = tokenize(&file.name, &file.text) else { continue };
        for (ti, tok) in tokens.iter().enumerate() {
            if !on_target(fi, tok.line) {
                continue;
            }
            let text = tok.kind.text();
            let mut push = |replacement: String, operator| {
                edits.push(Edit { file: fi, start: tok.start, end: tok.end, replacement, operator, line: tok.line })
            };
            let prev = ti.checked_sub(1).map(|p| &tokens[p].kind);
            if ops.contains(&MutationOperator::Aor) && ARITH.contains(&text.as_str()) && prev.is_some_and(ends_operand) {
                for r in ARITH.iter().filter(|r| **r != text) {
                    push(r.to_string(), MutationOperator::Aor);
                }
            }
            if ops.contains(&MutationOperator::Ror) && REL.contains(&text.as_str()) {
                for r in REL.iter().filter(|r| **r != text) {
                    push(r.to_string(), MutationOperator::Ror);
                }
            }
            if let (true, TokenKind::Int(v)) = (ops.contains(&MutationOperator::Constant), &tok.kind) {
                let negated = prev == Some(&TokenKind::Minus)
                    && !ti.checked_sub(2).is_some_and(|p| ends_operand(&tokens[p].kind));
                let Ok(c) = i64::try_from(*v) else { continue };
                let c = if negated { -c } else { c };
                let mut seen = BTreeSet::new();
                for r in [c.wrapping_add(1), c.wrapping_sub(1), 0] {
                    if r == c || !seen.insert(r) {
                        continue;
                    }
                    // Write the new value in place of the magnitude, keeping a
                    // preceding minus sign meaningful.
                    let shown = if negated { r.wrapping_neg() } else { r };
                    let replacement = if shown < 0 { format!("({shown})") } else { shown.to_string() };
                    push(replacement, MutationOperator::Constant);
                }
            }
        }
    }
    if ops.contains(&MutationOperator::StatementDeletion) {
        let mut add = |m: &minilang::MethodDef| {
            visit_stmts(&m.body, &mut |s| {
                if let (Some((start, end)), false) = (s.range, matches!(s.kind, StmtKind::Return(_))) {
                    if s.line == s.head_end_line && on_target(m.span.file, s.line) {
                        edits.push(Edit {
                            file: m.span.file,
                            start,
                            end,
                            replacement: String::new(),
                            operator: MutationOperator::StatementDeletion,
                            line: s.line,
                        });
                    }
                }
            })
        };
        for c in &program.classes {
            c.constructor.iter().chain(&c.methods).for_each(&mut add);
        }
        program.functions.iter().for_each(&mut add);
    }
    edits
}

/// Normalized token stream of every file, used to tell mutants apart.
pub fn token_stream(program: &Program) -> Vec<String> {
    let mut out = Vec::new();
    for f in &program.files {
        out.push(format!("@{}", f.name));
        if let Ok(tokens) = tokenize(&f.name, &f.text) {
            out.extend(tokens.iter().map(|t| t.kind.text()));
        }
    }
    out
}

/// Single-edit mutants of `program` on `target_lines`, distinct from each
/// other and from the original, all parsing. Order is a seeded shuffle of the
/// applicable sites; at most `limit` are returned.
pub fn mutate(
    program: &Program,
    target_lines: &BTreeSet<(String, u32)>,
    operators: &[MutationOperator],
    seed: u64,
    limit: usize,
) -> Vec<Mutant> {
    let mut edits = collect_edits(program, target_lines, operators);
    edits.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut seen: HashSet<Vec<String>> = HashSet::from([token_stream(program)]);
    let mut out = Vec::new();
    for e in edits {
        if out.len() >= limit {
            break;
        }
        let original = &program.files[e.file];
        let mut text = original.text.clone();
        let before = text[e.start..e.end].to_string();
        text.replace_range(e.start..e.end, &e.replacement);
        let mut files = program.files.clone();
        files[e.file] = SourceFile::new(original.name.clone(), text);
        let Ok(mutated) = minilang::parse(&files) else { continue };
        if !seen.insert(token_stream(&mutated)) {
            continue;
        }
        let description = if e.replacement.is_empty() {
            format!("delete `{before}`")
        } else {
            format!("`{before}` -> `{}`", e.replacement)
        };
        out.push(Mutant {
            program: mutated.with_label("mutant"),
            operator: e.operator,
            file: original.name.clone(),
            line: e.line,
            description,
        });
    }
    out
}

/// One constructed conflict scenario together with the mutant it contains.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub scenario: MergeScenario,
    pub mutant: Mutant,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub scenarios: Vec<BuiltScenario>,
    /// Every mutant generated on the covered lines, in generation order.
    pub mutants: Vec<Mutant>,
}

/// Builds 3-way conflict scenarios: mutants of the buggy version on lines the
/// fix test covers are merged with the fix; merges that are clean, parse and
/// fail the fix test are kept, up to `limit` of them.
pub fn build_conflict_3way(
    input: &FixScenarioInput,
    operators: &[MutationOperator],
    seed: u64,
    limit: usize,
) -> Result<BenchOutput, ScenarioError> {
    input.validate()?;
    let covered = run_test(&input.buggy, &input.fix_test.test, DEFAULT_BUDGET).covered_lines;
    let mutants = mutate(&input.buggy, &covered, operators, seed, usize::MAX);
    let mut scenarios = Vec::new();
    for mutant in &mutants {
        if scenarios.len() >= limit {
            break;
        }
        let ProgramMerge::Clean(merged) = merge_programs(&input.buggy, &input.fixed, &mutant.program) else {
            continue;
        };
        if passes(&merged, &input.fix_test) {
            continue;
        }
        let id = format!("{}-3way-{:03}", input.id, scenarios.len() + 1);
        let mut scenario = MergeScenario::new(
            id,
            ScenarioKind::ThreeWay,
            Some(input.buggy.clone()),
            vec![input.fixed.clone(), mutant.program.clone()],
            merged,
        )?;
        scenario.fix_test = Some(input.fix_test.clone());
        scenarios.push(BuiltScenario { scenario, mutant: mutant.clone() });
    }
    Ok(BenchOutput { scenarios, mutants })
}

fn mutated_classes(buggy: &Program, mutant: &Program) -> BTreeSet<String> {
    let d = entity_diff(buggy, mutant);
    d.changed.iter().chain(&d.added).map(|e| e.class.clone()).collect()
}

/// Extends a 3-way scenario with a second mutant of the same class into an
/// octopus merge. Candidates are tried in seeded random order; the first that
/// merges cleanly, parses and still fails the fix test wins.
pub fn build_conflict_octopus(
    base: &BuiltScenario,
    input: &FixScenarioInput,
    pool: &[Mutant],
    seed: u64,
) -> Option<MergeScenario> {
    let first = &base.mutant.program;
    let classes = mutated_classes(&input.buggy, first);
    let first_stream = token_stream(first);
    let mut candidates: Vec<&Mutant> = pool
        .iter()
        .filter(|m| !mutated_classes(&input.buggy, &m.program).is_disjoint(&classes))
        .filter(|m| token_stream(&m.program) != first_stream)
        .collect();
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for second in candidates {
        let branches = [&input.fixed, first, &second.program];
        let ProgramMerge::Clean(merged) = octopus_merge_programs(&input.buggy, &branches) else {
            continue;
        };
        if passes(&merged, &input.fix_test) {
            continue;
        }
        let id = base.scenario.id.replace("-3way-", "-octopus-");
        let parents = branches.iter().map(|p| (*p).clone()).collect();
        let mut scenario =
            MergeScenario::new(id, ScenarioKind::Octopus, Some(input.buggy.clone()), parents, merged).ok()?;
        scenario.fix_test = Some(input.fix_test.clone());
        return Some(scenario);
    }
    None
}
