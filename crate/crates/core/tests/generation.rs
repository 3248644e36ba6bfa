use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use tom_core::depgraph::EntityId;
use tom_core::minilang::{parse_str, run_test, ExecutionResult, Program, Value};
use tom_core::oracle::{lost_behavior, unexpected_behavior, VerdictKind};
use tom_core::scenario::{load_scenario, MergeScenario, Role, ScenarioKind};
use tom_core::testgen::{
    check_stability, detect, detect_with, generate_for_target, generate_for_target_with, replay,
    synthesize_assertions, unanimous, Criteria, Executor, GenConfig, Interpreter, SkipReason, TargetStatus, TestCase,
    TestScript,
};
use tom_core::uut_select::{select_uuts, SelectedUut, SelectionConfig};

fn sample(name: &str) -> MergeScenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples").join(name).join("manifest.json");
    load_scenario(&path).unwrap()
}

fn config(seed: u64) -> GenConfig {
    GenConfig { seed, ..GenConfig::default() }
}

fn uut(class: &str, name: &str, arity: usize) -> Vec<SelectedUut> {
    vec![SelectedUut { id: EntityId::method(class, name, arity), depth: 1 }]
}

#[test]
fn merge_target_finds_the_getsum_conflict() {
    let s = sample("setget");
    let r = generate_for_target(&s, Role::Merge, &uut("C", "getSum", 0), &config(42)).unwrap();
    assert_eq!(r.status, TargetStatus::Completed);
    let c = r.conflicts.first().expect("a conflict test");
    assert_eq!(c.verdict.kind, VerdictKind::UnexpectedBehavior);
    assert!(c.test.actions.iter().any(|a| a.to_string().contains("getSum")));
    assert!(replay(&s, Role::Merge, c, GenConfig::default().exec_budget));
    assert!(!c.witnesses.is_empty());
}

#[test]
fn verdicts_recheck_against_the_oracle() {
    let s = sample("setget");
    let cfg = GenConfig { stop_first: false, search_budget: 400, ..config(7) };
    let report = detect(&s, &cfg).unwrap();
    assert!(report.has_conflicts());
    for t in &report.targets {
        for c in &t.conflicts {
            let run = |role: Role| run_test(s.version(role).unwrap(), &c.test, cfg.exec_budget).valuation;
            let target = run(t.target);
            let verdict = match t.target {
                Role::Merge => {
                    let others: Vec<_> = c.counterparts.iter().map(|r| run(*r)).collect();
                    unexpected_behavior(&target, &others.iter().collect::<Vec<_>>()).unwrap()
                }
                Role::Parent(k) => lost_behavior(k, &target, &run(Role::Ancestor), &run(Role::Merge)).unwrap(),
                Role::Ancestor => unreachable!(),
            };
            assert_eq!(verdict.map(|v| v.witness_slots), Some(c.verdict.witness_slots.clone()));
            assert!(replay(&s, t.target, c, cfg.exec_budget));
        }
    }
}

#[test]
fn identical_versions_never_execute_variants() {
    let s = sample("identical");
    let r = generate_for_target(&s, Role::Merge, &uut("C", "getSum", 0), &config(1)).unwrap();
    assert_eq!(r.stats.variant_executions, 0);
    assert!(r.conflicts.is_empty());
    let report = detect(&s, &config(1)).unwrap();
    assert!(report.targets.iter().all(|t| t.status == TargetStatus::Skipped(SkipReason::NoUuts)));
}

const DEAD: &str = "class D {
  var v: int = 0;

  fn get(a: int): int {
    if (false) {
      return a + CHANGE;
    }
    return a;
  }
}
";

fn dead_scenario() -> MergeScenario {
    let version = |c: &str| parse_str("d.mlg", &DEAD.replace("CHANGE", c)).unwrap();
    MergeScenario::new("dead", ScenarioKind::ThreeWay, Some(version("0")), vec![version("1"), version("2")], version("3"))
        .unwrap()
}

#[test]
fn unreachable_changes_yield_zero_coverage() {
    let s = dead_scenario();
    let cfg = GenConfig { search_budget: 200, ..config(3) };
    let r = generate_for_target(&s, Role::Merge, &uut("D", "get", 1), &cfg).unwrap();
    assert_eq!(r.stats.candidates_evaluated, 200);
    assert!(r.stats.max_coverage.values().all(|c| *c == 0.0));
    assert!(r.stats.goals.values().all(|g| *g > 0));
    assert_eq!(r.stats.variant_executions, 0);
    assert!(r.conflicts.is_empty());
}

#[test]
fn reports_are_reproducible_and_independent_of_workers() {
    let s = sample("setget");
    let cfg = GenConfig { stop_first: false, search_budget: 300, ..config(11) };
    let a = detect(&s, &GenConfig { jobs: Some(1), ..cfg.clone() }).unwrap();
    let b = detect(&s, &GenConfig { jobs: Some(4), ..cfg.clone() }).unwrap();
    let c = detect(&s, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn skipping_never_hides_a_difference() {
    for (name, seed) in [("setget", 5), ("twoway", 6), ("income", 7)] {
        let s = sample(name);
        let cfg = GenConfig { verify_skip: true, stop_first: false, search_budget: 300, ..config(seed) };
        let report = detect(&s, &cfg).unwrap();
        for t in &report.targets {
            assert_eq!(t.stats.skip_soundness_violations, 0, "{name} {}", t.target);
        }
    }
}

#[test]
fn two_way_parents_are_skipped() {
    let report = detect(&sample("twoway"), &GenConfig { stop_first: false, ..config(2) }).unwrap();
    let merge = &report.targets[0];
    assert_eq!(merge.target, Role::Merge);
    assert!(!merge.conflicts.is_empty());
    assert_eq!(merge.counterparts, vec![Role::Parent(1), Role::Parent(2)]);
    for t in &report.targets[1..] {
        assert_eq!(t.status, TargetStatus::Skipped(SkipReason::NoAncestor));
        assert!(t.conflicts.is_empty());
    }
}

#[test]
fn stop_first_skips_later_targets() {
    let report = detect(&sample("setget"), &config(42)).unwrap();
    assert_eq!(report.targets[0].conflicts.len(), 1);
    for t in &report.targets[1..] {
        assert_eq!(t.status, TargetStatus::Skipped(SkipReason::StoppedEarly));
    }
}

#[test]
fn multi_criteria_search_also_detects() {
    let cfg = GenConfig { criteria: Criteria::Multi, ..config(42) };
    let report = detect(&sample("setget"), &cfg).unwrap();
    assert!(report.has_conflicts());
}

#[test]
fn parent_targets_report_lost_behavior() {
    let s = sample("setget");
    let others: Vec<&Program> = [Role::Ancestor, Role::Parent(2), Role::Merge].iter().map(|r| s.version(*r).unwrap()).collect();
    let sel = select_uuts(&s.parents[0], &others, SelectionConfig::default()).unwrap();
    let r = generate_for_target(&s, Role::Parent(1), &sel.uuts, &config(9)).unwrap();
    assert_eq!(r.counterparts, vec![Role::Ancestor, Role::Merge]);
    let c = r.conflicts.first().expect("lost behavior test");
    assert_eq!(c.verdict.kind, VerdictKind::LostBehavior { parent: 1 });
    assert!(replay(&s, Role::Parent(1), c, GenConfig::default().exec_budget));
}

#[test]
fn qualifying_assertions_need_every_counterpart() {
    let s = sample("setget");
    let test: TestCase =
        "let o0 = new C()\ncall o0.setX(1)\ncall o0.setY(2)\nobserve o0.getSum()\nfield o0.x\n".parse::<TestScript>().unwrap().test;
    let run = |r: Role| run_test(s.version(r).unwrap(), &test, 1000);
    let target = run(Role::Merge);
    let variants: Vec<(Role, ExecutionResult)> =
        [Role::Ancestor, Role::Parent(1), Role::Parent(2)].into_iter().map(|r| (r, run(r))).collect();
    let refs: Vec<(Role, &ExecutionResult)> = variants.iter().map(|(r, e)| (*r, e)).collect();
    let all = synthesize_assertions(&target, &refs);
    let qualifying = unanimous(&all, refs.len());
    assert_eq!(qualifying.len(), 1);
    assert_eq!(qualifying[0].expected, Value::Int(5));
    assert!(all.len() > qualifying.len());
}

/// Returns a different valuation on every call for one chosen program.
struct Flaky {
    calls: AtomicU64,
}

impl Executor for Flaky {
    fn execute(&self, program: &Program, test: &TestCase, budget: u64) -> ExecutionResult {
        let mut r = run_test(program, test, budget);
        if program.label == "merge" {
            let n = self.calls.fetch_add(1, Ordering::Relaxed);
            if let Some(slot) = r.valuation.slots.iter_mut().rev().find(|s| matches!(s.1, Value::Int(_))) {
                slot.1 = Value::Int(n as i64 * 1000 + 7);
            }
        }
        r
    }
}

#[test]
fn stability_check_rejects_nondeterminism() {
    let s = sample("setget");
    let test: TestCase = "let o0 = new C()\nobserve o0.getSum()\n".parse::<TestScript>().unwrap().test;
    let versions: Vec<&Program> = s.roles().into_iter().map(|r| s.version(r).unwrap()).collect();
    assert!(check_stability(&Interpreter, &test, &versions, 5, 1000));
    assert!(check_stability(&Interpreter, &test, &versions, 1, 1000));
    let flaky = Flaky { calls: AtomicU64::new(0) };
    assert!(!check_stability(&flaky, &test, &versions, 5, 1000));
    assert!(check_stability(&flaky, &test, &versions, 1, 1000));

    let cfg = GenConfig { search_budget: 200, ..config(42) };
    let r = generate_for_target_with(&flaky, &s, Role::Merge, &uut("C", "getSum", 0), &cfg).unwrap();
    assert!(r.conflicts.is_empty());
    assert!(r.stats.unstable_rejected > 0);
    let report = detect_with(&flaky, &s, &cfg).unwrap();
    assert!(report.targets[0].conflicts.is_empty());
}

#[test]
fn exceptions_on_the_target_are_listed_separately() {
    let version = |body: &str| {
        parse_str("r.mlg", &format!("class R {{\n  fn div(a: int): int {{\n    return {body};\n  }}\n}}\n")).unwrap()
    };
    let s = MergeScenario::new(
        "raise",
        ScenarioKind::ThreeWay,
        Some(version("a")),
        vec![version("a + 1"), version("a + 2")],
        version("100 / a"),
    )
    .unwrap();
    let cfg = GenConfig { stop_first: false, search_budget: 300, ..config(4) };
    let r = generate_for_target(&s, Role::Merge, &uut("R", "div", 1), &cfg).unwrap();
    assert!(!r.exception_tests.is_empty());
    for e in &r.exception_tests {
        let res = run_test(&s.merge, &e.test, cfg.exec_budget);
        assert!(res.raised());
    }
    for c in &r.conflicts {
        assert!(!run_test(&s.merge, &c.test, cfg.exec_budget).raised());
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let s = sample("setget");
    for bad in [
        GenConfig { stability_runs: 0, ..GenConfig::default() },
        GenConfig { population: 0, ..GenConfig::default() },
        GenConfig { int_pool: vec![], ..GenConfig::default() },
        GenConfig { selection: SelectionConfig { max_depth: 0, max_uuts: 3 }, ..GenConfig::default() },
    ] {
        assert!(detect(&s, &bad).is_err());
    }
}
