use std::collections::HashSet;
use std::path::{Path, PathBuf};

use tom_core::minilang::parse_str;
use tom_core::scenario::{
    build_conflict_3way, build_conflict_octopus, load_fix_input, load_scenario, passes, token_stream,
    write_scenario, FixScenarioInput, MutationOperator, Role, ScenarioError, ScenarioKind,
};
use tom_core::testgen::TestScript;

fn samples() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

fn accounting() -> FixScenarioInput {
    load_fix_input(&samples().join("accounting/fix.json")).unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

#[test]
fn sample_manifests_load() {
    let s = load_scenario(&samples().join("setget/manifest.json")).unwrap();
    assert_eq!(s.kind, ScenarioKind::ThreeWay);
    assert_eq!(s.roles(), vec![Role::Ancestor, Role::Parent(1), Role::Parent(2), Role::Merge]);
    let t = load_scenario(&samples().join("twoway/manifest.json")).unwrap();
    assert!(t.ancestor.is_none());
}

#[test]
fn manifest_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    write(&m, r#"{"id": "x", "kind": "3way", "ancestor": "o", "parents": ["a", "b"]}"#);
    let err = load_scenario(&m).unwrap_err();
    assert!(matches!(err, ScenarioError::Schema { .. }));
    assert!(err.to_string().contains("merge"), "{err}");

    assert!(matches!(load_scenario(&dir.path().join("none.json")), Err(ScenarioError::Io { .. })));

    write(&m, r#"{"id": "x", "kind": "2way", "ancestor": "o", "parents": ["a", "b"], "merge": "m"}"#);
    assert!(matches!(load_scenario(&m), Err(ScenarioError::Schema { .. })));

    for v in ["o", "a", "b"] {
        write(&dir.path().join(v).join("c.mlg"), "class C { }\n");
    }
    write(&dir.path().join("m/c.mlg"), "class C { fn f(): int { } }\n");
    write(&m, r#"{"id": "x", "kind": "3way", "ancestor": "o", "parents": ["a", "b"], "merge": "m"}"#);
    match load_scenario(&m) {
        Err(ScenarioError::Parse { role, path, .. }) => {
            assert_eq!(role, "merge");
            assert!(path.ends_with("m"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn octopus_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    for v in ["o", "a", "b", "c", "m"] {
        write(&dir.path().join(v).join("c.mlg"), "class C { var x: int = 0; }\n");
    }
    let m = dir.path().join("m.json");
    write(&m, r#"{"id": "oct", "kind": "octopus", "ancestor": "o", "parents": ["a", "b", "c"], "merge": "m"}"#);
    let s = load_scenario(&m).unwrap();
    assert_eq!(s.kind, ScenarioKind::Octopus);
    assert_eq!(s.generation_targets(), vec![Role::Merge, Role::Parent(1), Role::Parent(2), Role::Parent(3)]);
}

#[test]
fn emitted_scenarios_revalidate_after_writing() {
    let input = accounting();
    let out = build_conflict_3way(&input, &MutationOperator::ALL, 1, 5).unwrap();
    assert!(!out.scenarios.is_empty());
    assert!(out.scenarios.len() <= 5);
    let dir = tempfile::tempdir().unwrap();
    for b in &out.scenarios {
        let s = &b.scenario;
        assert!(!passes(&s.merge, &input.fix_test));
        assert!(passes(&s.parents[0], &input.fix_test));
        let manifest = write_scenario(s, &dir.path().join(&s.id)).unwrap();
        let back = load_scenario(&manifest).unwrap();
        assert_eq!(back.id, s.id);
        assert_eq!(back.merge.files, s.merge.files);
        assert!(back.fix_test.is_some());
    }
}

#[test]
fn benchmark_construction_is_deterministic() {
    let input = accounting();
    let ids = |seed| {
        let out = build_conflict_3way(&input, &MutationOperator::ALL, seed, 50).unwrap();
        out.scenarios.iter().map(|b| (b.scenario.id.clone(), b.mutant.description.clone())).collect::<Vec<_>>()
    };
    assert_eq!(ids(1), ids(1));
    assert_eq!(ids(2), ids(2));
    assert!(build_conflict_3way(&input, &MutationOperator::ALL, 1, 0).unwrap().scenarios.is_empty());
}

#[test]
fn mutants_are_distinct() {
    let out = build_conflict_3way(&accounting(), &MutationOperator::ALL, 3, 50).unwrap();
    let streams: HashSet<Vec<String>> = out.mutants.iter().map(|m| token_stream(&m.program)).collect();
    assert_eq!(streams.len(), out.mutants.len());
}

#[test]
fn octopus_scenarios_fail_the_fix_test() {
    let input = accounting();
    let out = build_conflict_3way(&input, &MutationOperator::ALL, 1, 50).unwrap();
    let octo = out
        .scenarios
        .iter()
        .find_map(|b| build_conflict_octopus(b, &input, &out.mutants, 1))
        .expect("an octopus scenario");
    assert_eq!(octo.kind, ScenarioKind::Octopus);
    assert_eq!(octo.parents.len(), 3);
    assert!(!passes(&octo.merge, &input.fix_test));
    assert!(passes(&octo.parents[0], &input.fix_test));
    assert_ne!(token_stream(&octo.parents[1]), token_stream(&octo.parents[2]));
}

const GUARDED: &str = "class G {
  var hits: int = 0;

  fn run(a: int): int {
    if (a > 100) {
      this.hits = this.hits + 1;
    }

    return a * 2;
  }
}
";

fn guarded_input() -> FixScenarioInput {
    let fixed = GUARDED.replace("a * 2", "a * 3");
    let test: TestScript = "let o0 = new G()\nobserve o0.run(1)\nassert @1 return == 3\n".parse().unwrap();
    FixScenarioInput {
        id: "guarded".into(),
        buggy: parse_str("g.mlg", GUARDED).unwrap(),
        fixed: parse_str("g.mlg", &fixed).unwrap(),
        fix_test: test,
    }
}

#[test]
fn mutants_on_lines_the_fix_test_skips_never_qualify() {
    let input = guarded_input();
    input.validate().unwrap();
    let out = build_conflict_3way(&input, &MutationOperator::ALL, 1, 100).unwrap();
    assert!(out.mutants.iter().all(|m| m.line != 6));
    for b in &out.scenarios {
        assert_ne!(b.mutant.line, 6);
        assert_ne!(b.mutant.line, 9, "mutants on the fixed line conflict textually");
    }
}

#[test]
fn failing_preconditions_are_reported() {
    let mut input = guarded_input();
    std::mem::swap(&mut input.buggy, &mut input.fixed);
    assert!(matches!(input.validate(), Err(ScenarioError::Precondition(_))));
    assert!(build_conflict_3way(&input, &MutationOperator::ALL, 1, 10).is_err());
}
