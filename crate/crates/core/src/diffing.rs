//! Entity-level and line-level differencing plus textual three-way and
//! octopus merging.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::depgraph::EntityId;
use crate::minilang::{self, Diagnostics, Literal, MethodDef, Program, SourceFile, Type};

/// Entities a target version added or changed relative to one variant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDelta {
    pub added: BTreeSet<EntityId>,
    pub changed: BTreeSet<EntityId>,
    pub variant: String,
    pub target: String,
}

impl EntityDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.changed.is_empty()
    }

    /// `added ∪ changed`.
    pub fn seeds(&self) -> BTreeSet<EntityId> {
        self.added.union(&self.changed).cloned().collect()
    }
}

#[derive(PartialEq, Eq)]
enum Fingerprint<'a> {
    Field(&'a Type, Literal),
    Body(&'a [String]),
}

fn fingerprints(program: &Program) -> BTreeMap<EntityId, Fingerprint<'_>> {
    let mut out = BTreeMap::new();
    fn body(m: &MethodDef) -> Fingerprint<'_> {
        Fingerprint::Body(&m.normalized)
    }
    for c in &program.classes {
        for f in &c.fields {
            out.insert(EntityId::field(&c.name, &f.name), Fingerprint::Field(&f.ty, f.init));
        }
        if let Some(ctor) = &c.constructor {
            out.insert(EntityId::constructor(&c.name, ctor.arity()), body(ctor));
        }
        for m in &c.methods {
            out.insert(EntityId::method(&c.name, &m.name, m.arity()), body(m));
        }
    }
    for f in &program.functions {
        out.insert(EntityId::function(&f.name, f.arity()), body(f));
    }
    out
}

/// Entities of `target` that are new or differ from `variant`. Deleted
/// entities are not reported.
pub fn entity_diff(variant: &Program, target: &Program) -> EntityDelta {
    let before = fingerprints(variant);
    let mut delta = EntityDelta { variant: variant.label.clone(), target: target.label.clone(), ..Default::default() };
    for (id, fp) in fingerprints(target) {
        match before.get(&id) {
            None => {
                delta.added.insert(id);
            }
            Some(old) if *old != fp => {
                delta.changed.insert(id);
            }
            Some(_) => {}
        }
    }
    delta
}

/// One step of a line alignment (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    Equal(usize, usize),
    Delete(usize),
    Insert(usize),
}

/// Longest-common-subsequence alignment of `a` onto `b`.
pub fn align<T: PartialEq>(a: &[T], b: &[T]) -> Vec<DiffOp> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..].iter().rev().zip(b[prefix..].iter().rev()).take_while(|(x, y)| x == y).count();
    let (a_mid, b_mid) = (&a[prefix..a.len() - suffix], &b[prefix..b.len() - suffix]);
    let (n, m) = (a_mid.len(), b_mid.len());

    // table[i][j] = LCS length of a_mid[i..] and b_mid[j..]
    let mut table = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a_mid[i] == b_mid[j] { table[i + 1][j + 1] + 1 } else { table[i + 1][j].max(table[i][j + 1]) };
        }
    }

    let mut ops: Vec<DiffOp> = (0..prefix).map(|k| DiffOp::Equal(k, k)).collect();
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a_mid[i] == b_mid[j] {
            ops.push(DiffOp::Equal(prefix + i, prefix + j));
            i += 1;
            j += 1;
        } else if j == m || (i < n && table[i + 1][j] >= table[i][j + 1]) {
            ops.push(DiffOp::Delete(prefix + i));
            i += 1;
        } else {
            ops.push(DiffOp::Insert(prefix + j));
            j += 1;
        }
    }
    ops.extend((0..suffix).map(|k| DiffOp::Equal(a.len() - suffix + k, b.len() - suffix + k)));
    ops
}

/// 1-based lines of `target` not matched to an identical line of `variant`.
pub fn line_diff(variant: &str, target: &str) -> BTreeSet<u32> {
    let a: Vec<&str> = variant.lines().collect();
    let b: Vec<&str> = target.lines().collect();
    align(&a, &b)
        .into_iter()
        .filter_map(|op| match op {
            DiffOp::Insert(j) => Some(j as u32 + 1),
            _ => None,
        })
        .collect()
}

/// Positions in `target` where `variant` lines vanished without a replacement
/// line: each entry is the number of target lines preceding the gap.
pub fn deletion_gaps(variant: &str, target: &str) -> BTreeSet<u32> {
    let a: Vec<&str> = variant.lines().collect();
    let b: Vec<&str> = target.lines().collect();
    let ops = align(&a, &b);
    let mut out = BTreeSet::new();
    let mut target_pos = 0u32;
    let mut run_has_insert = false;
    let mut run_has_delete = false;
    let mut flush = |pos: u32, ins: &mut bool, del: &mut bool| {
        if *del && !*ins {
            out.insert(pos);
        }
        *ins = false;
        *del = false;
    };
    let mut run_start = 0u32;
    for op in ops {
        match op {
            DiffOp::Equal(..) => {
                flush(run_start, &mut run_has_insert, &mut run_has_delete);
                target_pos += 1;
                run_start = target_pos;
            }
            DiffOp::Delete(_) => run_has_delete = true,
            DiffOp::Insert(_) => {
                run_has_insert = true;
                target_pos += 1;
            }
        }
    }
    flush(run_start, &mut run_has_insert, &mut run_has_delete);
    out
}

/// Changed target lines per file name.
pub type DiffLines = BTreeMap<String, BTreeSet<u32>>;

/// [`line_diff`] for every file of `target`; a file missing from `variant`
/// counts as entirely new.
pub fn program_line_diff(variant: &Program, target: &Program) -> DiffLines {
    target
        .files
        .iter()
        .map(|f| {
            let before = variant.files.iter().find(|v| v.name == f.name).map_or("", |v| v.text.as_str());
            (f.name.clone(), line_diff(before, &f.text))
        })
        .filter(|(_, lines)| !lines.is_empty())
        .collect()
}

/// Line ranges of one conflicting region as (1-based start, length).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRegion {
    pub base: (usize, usize),
    pub left: (usize, usize),
    pub right: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "data", rename_all = "snake_case")]
pub enum MergeOutcome {
    Clean(Vec<String>),
    Conflicted(Vec<ConflictRegion>),
}

impl MergeOutcome {
    pub fn is_clean(&self) -> bool {
        matches!(self, MergeOutcome::Clean(_))
    }

    /// Merged text with a trailing newline, if clean.
    pub fn text(&self) -> Option<String> {
        match self {
            MergeOutcome::Clean(lines) => Some(join_lines(lines)),
            MergeOutcome::Conflicted(_) => None,
        }
    }
}

fn join_lines<S: AsRef<str>>(lines: &[S]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    out
}

fn matched_pairs(base: &[&str], other: &[&str]) -> Vec<Option<usize>> {
    let mut map = vec![None; base.len()];
    for op in align(base, other) {
        if let DiffOp::Equal(i, j) = op {
            map[i] = Some(j);
        }
    }
    map
}

/// Line-based diff3 over already split lines.
pub fn diff3_lines(base: &[&str], left: &[&str], right: &[&str]) -> MergeOutcome {
    let to_left = matched_pairs(base, left);
    let to_right = matched_pairs(base, right);

    // Sync points: base lines kept by both sides, plus an end sentinel.
    let mut syncs: Vec<(usize, usize, usize)> = (0..base.len())
        .filter_map(|i| Some((i, to_left[i]?, to_right[i]?)))
        .collect();
    syncs.push((base.len(), left.len(), right.len()));

    let mut merged: Vec<String> = Vec::new();
    let mut conflicts = Vec::new();
    let (mut bi, mut li, mut ri) = (0, 0, 0);
    for (bs, ls, rs) in syncs {
        let (bc, lc, rc) = (&base[bi..bs], &left[li..ls], &right[ri..rs]);
        let pick = if lc == rc || rc == bc {
            Some(lc)
        } else if lc == bc {
            Some(rc)
        } else {
            None
        };
        match pick {
            Some(chunk) => merged.extend(chunk.iter().map(|s| s.to_string())),
            None => conflicts.push(ConflictRegion {
                base: (bi + 1, bc.len()),
                left: (li + 1, lc.len()),
                right: (ri + 1, rc.len()),
            }),
        }
        if bs < base.len() {
            merged.push(base[bs].to_string());
        }
        (bi, li, ri) = (bs + 1, ls + 1, rs + 1);
    }
    if conflicts.is_empty() {
        MergeOutcome::Clean(merged)
    } else {
        MergeOutcome::Conflicted(conflicts)
    }
}

/// Textual three-way merge of one file.
pub fn diff3_merge(base: &str, left: &str, right: &str) -> MergeOutcome {
    fn split(s: &str) -> Vec<&str> {
        s.lines().collect()
    }
    diff3_lines(&split(base), &split(left), &split(right))
}

/// Folds `branches` into `base` one diff3 at a time, aborting on the first
/// conflict.
///
/// # Panics
///
/// Panics if `branches` is empty.
pub fn octopus_merge<S: AsRef<str>>(base: &str, branches: &[S]) -> MergeOutcome {
    assert!(!branches.is_empty(), "octopus merge needs at least one branch");
    let base_lines: Vec<&str> = base.lines().collect();
    let mut acc: Vec<String> = base_lines.iter().map(|s| s.to_string()).collect();
    for b in branches {
        let acc_refs: Vec<&str> = acc.iter().map(String::as_str).collect();
        let branch: Vec<&str> = b.as_ref().lines().collect();
        match diff3_lines(&base_lines, &acc_refs, &branch) {
            MergeOutcome::Clean(lines) => acc = lines,
            conflicted => return conflicted,
        }
    }
    MergeOutcome::Clean(acc)
}

/// Result of merging whole program versions file by file.
#[derive(Debug, Clone)]
pub enum ProgramMerge {
    Clean(Program),
    Conflicted { file: String, regions: Vec<ConflictRegion> },
    /// Textually clean but the result does not parse or type-check.
    Rejected(Diagnostics),
}

fn file_text<'a>(p: &'a Program, name: &str) -> &'a str {
    p.files.iter().find(|f| f.name == name).map_or("", |f| f.text.as_str())
}

fn merge_files(base: &Program, others: &[&Program], merge: impl Fn(&str, &[&str]) -> MergeOutcome) -> ProgramMerge {
    let mut names: BTreeSet<&str> = base.files.iter().map(|f| f.name.as_str()).collect();
    for p in others {
        names.extend(p.files.iter().map(|f| f.name.as_str()));
    }
    let mut files = Vec::new();
    for name in names {
        let texts: Vec<&str> = others.iter().map(|p| file_text(p, name)).collect();
        match merge(file_text(base, name), &texts) {
            MergeOutcome::Clean(lines) => files.push(SourceFile::new(name, join_lines(&lines))),
            MergeOutcome::Conflicted(regions) => return ProgramMerge::Conflicted { file: name.to_string(), regions },
        }
    }
    match minilang::parse(&files) {
        Ok(p) => ProgramMerge::Clean(p.with_label("merge")),
        Err(d) => ProgramMerge::Rejected(d),
    }
}

/// Per-file [`diff3_merge`] of two program versions against their base.
pub fn merge_programs(base: &Program, left: &Program, right: &Program) -> ProgramMerge {
    merge_files(base, &[left, right], |b, t| diff3_merge(b, t[0], t[1]))
}

/// Per-file [`octopus_merge`] of several branches against their base.
pub fn octopus_merge_programs(base: &Program, branches: &[&Program]) -> ProgramMerge {
    merge_files(base, branches, |b, t| octopus_merge(b, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_str;

    fn lines(s: &[&str]) -> String {
        join_lines(s)
    }

    #[test]
    fn line_diff_examples() {
        assert_eq!(line_diff(&lines(&["a", "b", "c"]), &lines(&["a", "x", "c"])), BTreeSet::from([2]));
        assert!(line_diff("a\nb\n", "a\nb\n").is_empty());
        assert_eq!(line_diff(&lines(&["a", "b"]), &lines(&["a", "b", "c", "d"])), BTreeSet::from([3, 4]));
        assert_eq!(line_diff("", "a\n"), BTreeSet::from([1]));
    }

    #[test]
    fn deletion_gap_positions() {
        assert_eq!(deletion_gaps("a\nb\nc\n", "a\nc\n"), BTreeSet::from([1]));
        assert_eq!(deletion_gaps("a\nb\n", "b\n"), BTreeSet::from([0]));
        assert_eq!(deletion_gaps("a\nb\n", "a\n"), BTreeSet::from([1]));
        // A replacement is not a pure deletion.
        assert!(deletion_gaps("a\nb\nc\n", "a\nx\nc\n").is_empty());
        assert!(deletion_gaps("a\n", "a\nb\n").is_empty());
    }

    #[test]
    fn diff3_examples() {
        let clean = diff3_merge("a\nb\nc\n", "a2\nb\nc\n", "a\nb\nc2\n");
        assert_eq!(clean.text().unwrap(), "a2\nb\nc2\n");
        match diff3_merge("a\nb\nc\n", "a\nx\nc\n", "a\ny\nc\n") {
            MergeOutcome::Conflicted(r) => {
                assert_eq!(r.len(), 1);
                assert_eq!(r[0].base, (2, 1));
            }
            other => panic!("expected conflict, got {other:?}"),
        }
        assert_eq!(diff3_merge("a\nb\n", "a\nb\n", "a\nb\n").text().unwrap(), "a\nb\n");
    }

    #[test]
    fn identical_edits_merge_cleanly() {
        assert_eq!(diff3_merge("a\nb\n", "a\nz\n", "a\nz\n").text().unwrap(), "a\nz\n");
    }

    #[test]
    fn octopus_examples() {
        let base = "1\n2\n3\n4\n5\n";
        assert_eq!(octopus_merge(base, &["1\nX\n3\n4\n5\n"]).text().unwrap(), "1\nX\n3\n4\n5\n");
        let both = octopus_merge(base, &["1\nX\n3\n4\n5\n", "1\n2\n3\n4\nY\n"]);
        assert_eq!(both.text().unwrap(), "1\nX\n3\n4\nY\n");
        assert!(!octopus_merge(base, &["1\nX\n3\n4\n5\n", "1\nZ\n3\n4\n5\n"]).is_clean());
    }

    const SETGET_A: &str = "class C {
  var x: int = 0;
  var y: int = 0;
  fn setX(x: int): void { this.x = x + 1; }
  fn setY(y: int): void { this.y = y; }
  fn getSum(): int { return this.x + this.y; }
}
";

    #[test]
    fn entity_diff_examples() {
        let v = parse_str("c.mlg", "class C { fn m(): int { return 1; } }").unwrap();
        let t = parse_str("c.mlg", "class C { fn m(): int { return 2; } }").unwrap();
        let d = entity_diff(&v, &t);
        assert_eq!(d.changed, BTreeSet::from([EntityId::method("C", "m", 0)]));
        assert!(d.added.is_empty());
        assert!(entity_diff(&v, &v).is_empty());

        let a = parse_str("c.mlg", SETGET_A).unwrap();
        let m = parse_str("c.mlg", &SETGET_A.replace("this.y = y;", "this.y = y + 1;")).unwrap();
        let d = entity_diff(&a, &m);
        assert_eq!(d.changed, BTreeSet::from([EntityId::method("C", "setY", 1)]));
        assert!(d.added.is_empty());
    }

    #[test]
    fn reformatting_is_not_a_change() {
        let v = parse_str("c.mlg", "class C { fn m(): int { return 1; } }").unwrap();
        let t = parse_str("c.mlg", "class C {\n  // note\n  fn m(): int {\n    return 1;\n  }\n}").unwrap();
        assert!(entity_diff(&v, &t).is_empty());
    }

    #[test]
    fn added_and_field_changes() {
        let v = parse_str("c.mlg", "class C { var x: int = 0; }").unwrap();
        let t = parse_str("c.mlg", "class C { var x: int = 1; fn m(): int { return 1; } }").unwrap();
        let d = entity_diff(&v, &t);
        assert_eq!(d.changed, BTreeSet::from([EntityId::field("C", "x")]));
        assert_eq!(d.added, BTreeSet::from([EntityId::method("C", "m", 0)]));
        // Deleted entities are ignored.
        assert!(entity_diff(&t, &v).added.is_empty());
    }

    #[test]
    fn program_merge_rejects_broken_result() {
        let base = "fn f(): int {\n  var a: int = 1;\n  var b: int = 2;\n  var c: int = 3;\n  return a + c;\n}\n";
        let left = base.replace("  var b: int = 2;\n", "");
        let right = base.replace("return a + c", "return b + c");
        let p = |s: &str| parse_str("c.mlg", s).unwrap();
        match merge_programs(&p(base), &p(&left), &p(&right)) {
            ProgramMerge::Rejected(d) => assert!(d.to_string().contains('b')),
            other => panic!("expected rejection, got {other:?}"),
        }
        let conflicting = base.replace("return a + c", "return c");
        assert!(matches!(
            merge_programs(&p(base), &p(&conflicting), &p(&right)),
            ProgramMerge::Conflicted { .. }
        ));
    }
}
