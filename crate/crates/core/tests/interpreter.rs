use proptest::prelude::*;
use tom_core::minilang::{parse_str, run_test, DiagnosticKind, ExcKind, Literal, Program, Termination, Value};
use tom_core::testgen::{Action, Receiver, TestCase, TestScript};

const BASE: &str = "class C {
  var x: int = 0;
  var y: int = 0;

  fn setX(x: int): void {
    this.x = x;
  }

  fn setY(y: int): void {
    this.y = y;
  }

  fn getSum(): int {
    return this.x + this.y;
  }
}
";

const MERGE: &str = "class C {
  var x: int = 0;
  var y: int = 0;

  fn setX(x: int): void {
    this.x = x + 1;
  }

  fn setY(y: int): void {
    this.y = y + 1;
  }

  fn getSum(): int {
    return this.x + this.y;
  }
}
";

const COUNTER: &str = "class Counter {
  var n: int = 0;
  var limit: int = 3;

  fn step(by: int): int {
    if (this.n + by > this.limit) {
      this.n = 0;
    } else {
      this.n = this.n + by;
    }
    return this.n;
  }

  fn ratio(d: int): int {
    return 100 / d;
  }

  fn spin(k: int): int {
    var i: int = 0;
    while (i < k) {
      i = i + 1;
    }
    return i;
  }
}

fn twice(a: int): int {
  return a * 2;
}
";

fn script(text: &str) -> TestCase {
    text.parse::<TestScript>().unwrap().test
}

#[test]
fn parse_examples() {
    let p = parse_str("c.mlg", "class C { var x: int = 0; fn getX(): int { return this.x; } }").unwrap();
    assert_eq!(p.classes.len(), 1);
    assert_eq!(p.classes[0].fields.len(), 1);
    assert_eq!(p.classes[0].methods.len(), 1);

    let err = parse_str("c.mlg", "class C { fn m(): int { } }").unwrap_err();
    assert_eq!(err.0[0].kind, DiagnosticKind::Type);

    for src in [BASE, MERGE] {
        let p = parse_str("c.mlg", src).unwrap();
        assert_eq!((p.classes.len(), p.classes[0].fields.len(), p.classes[0].methods.len()), (1, 2, 3));
    }
}

#[test]
fn setter_getter_values() {
    let t = script("let o0 = new C()\ncall o0.setX(1)\ncall o0.setY(2)\nobserve o0.getSum()\n");
    let base = run_test(&parse_str("c.mlg", BASE).unwrap(), &t, 1000);
    let merge = run_test(&parse_str("c.mlg", MERGE).unwrap(), &t, 1000);
    let last = |r: &tom_core::minilang::ExecutionResult| {
        let v = &r.valuation;
        (0..v.len()).rev().map(|i| v.value(i)).find(|v| matches!(v, Value::Int(_)))
    };
    assert_eq!(last(&base), Some(Value::Int(3)));
    assert_eq!(last(&merge), Some(Value::Int(5)));
}

#[test]
fn budget_exhaustion_is_exact() {
    let p = parse_str("l.mlg", "fn loop(): int {\n  while (true) {\n  }\n  return 0;\n}\n").unwrap();
    let r = run_test(&p, &script("observe loop()\nobserve loop()\n"), 1000);
    assert_eq!(r.terminated, Termination::BudgetExhausted);
    assert_eq!(r.steps_used, 1000);
    let exhausted = Value::Exc(ExcKind::BudgetExhausted);
    assert_eq!((r.valuation.value(0), r.valuation.value(1)), (exhausted, exhausted));
    assert_eq!((r.valuation.value(2), r.valuation.value(3)), (Value::Unobserved, Value::Unobserved));
}

fn counter() -> Program {
    parse_str("counter.mlg", COUNTER).unwrap()
}

fn action() -> impl Strategy<Value = Action> {
    let lit = -5i64..6;
    let obj = |m: &'static str, observe: bool| {
        (0usize..2, -5i64..6).prop_map(move |(o, a)| Action::Invoke {
            receiver: Receiver::Object(format!("o{o}")),
            method: m.to_string(),
            args: vec![Literal::Int(a)],
            observe,
        })
    };
    prop_oneof![
        obj("step", true),
        obj("step", false),
        obj("ratio", true),
        obj("spin", true),
        obj("nothing", true),
        lit.prop_map(|a| Action::Invoke {
            receiver: Receiver::Toplevel,
            method: "twice".into(),
            args: vec![Literal::Int(a)],
            observe: true,
        }),
        (0usize..2).prop_map(|o| Action::ObserveField { label: format!("o{o}"), field: "n".into() }),
    ]
}

fn test_case() -> impl Strategy<Value = TestCase> {
    prop::collection::vec(action(), 0..8).prop_map(|body| {
        let mut actions: Vec<Action> = (0..2)
            .map(|i| Action::Construct { class: "Counter".into(), args: vec![], label: format!("o{i}") })
            .collect();
        actions.extend(body);
        TestCase::new(actions)
    })
}

proptest! {
    #[test]
    fn runs_are_deterministic(t in test_case(), budget in 1u64..400) {
        let p = counter();
        prop_assert_eq!(run_test(&p, &t, budget), run_test(&p, &t, budget));
    }

    #[test]
    fn runs_are_isolated(t1 in test_case(), t2 in test_case()) {
        let p = counter();
        let alone = run_test(&p, &t2, 10_000);
        let _ = run_test(&p, &t1, 10_000);
        prop_assert_eq!(run_test(&p, &t2, 10_000), alone);
    }

    #[test]
    fn coverage_grows_with_prefix(t in test_case(), cut in 0usize..10) {
        let p = counter();
        let cut = cut.min(t.actions.len());
        let prefix = TestCase::new(t.actions[..cut].to_vec());
        let full = run_test(&p, &t, 100_000);
        let part = run_test(&p, &prefix, 100_000);
        prop_assume!(full.terminated != Termination::BudgetExhausted);
        prop_assert!(part.covered_lines.is_subset(&full.covered_lines));
    }

    #[test]
    fn valuation_matches_points(t in test_case(), budget in 1u64..400) {
        let r = run_test(&counter(), &t, budget);
        let points = t.observation_points();
        prop_assert_eq!(r.valuation.len(), points.len());
        for (i, p) in points.iter().enumerate() {
            prop_assert_eq!(r.valuation.point(i), p);
        }
        if r.terminated == Termination::BudgetExhausted {
            prop_assert_eq!(r.steps_used, budget);
        }
        prop_assert!(r.steps_used <= budget);
    }

    #[test]
    fn slots_after_termination_are_unobserved(t in test_case()) {
        let r = run_test(&counter(), &t, 100_000);
        if let Termination::Exception { action, .. } = r.terminated {
            for i in 0..r.valuation.len() {
                if r.valuation.point(i).action > action {
                    prop_assert_eq!(r.valuation.value(i), Value::Unobserved);
                }
            }
        }
    }
}

#[test]
fn covered_lines_exist_in_program() {
    let p = counter();
    let lines = p.traceable_lines();
    let t = script("let o0 = new Counter()\nobserve o0.step(2)\nobserve o0.step(2)\nobserve o0.spin(3)\nobserve twice(4)\n");
    let r = run_test(&p, &t, 10_000);
    assert!(!r.covered_lines.is_empty());
    assert!(r.covered_lines.is_subset(&lines));
}
