use std::collections::BTreeSet;

use tom_core::minilang::Value;
use tom_core::oracle::{
    check_conflict_free_original, check_conflict_free_revised, classify_violations, lost_behavior,
    unexpected_behavior, ExecutionValuation, OracleError, VerdictKind, ViolationKind,
};

fn tuples(values: &[i64], slots: usize) -> Vec<[Vec<i64>; 4]> {
    let n = values.len().pow(4 * slots as u32);
    (0..n)
        .map(|mut code| {
            let mut out: [Vec<i64>; 4] = Default::default();
            for _ in 0..slots {
                for v in out.iter_mut() {
                    v.push(values[code % values.len()]);
                    code /= values.len();
                }
            }
            out
        })
        .collect()
}

fn val(xs: &[i64]) -> ExecutionValuation {
    ExecutionValuation::ints(xs)
}

fn all_tuples() -> Vec<[Vec<i64>; 4]> {
    let mut t = tuples(&[0, 1, 2], 1);
    t.extend(tuples(&[0, 1], 2));
    t
}

#[test]
fn classification_empty_iff_revised_holds() {
    for [o, a, b, m] in all_tuples() {
        let (o, a, b, m) = (val(&o), val(&a), val(&b), val(&m));
        let empty = classify_violations(&o, &a, &b, &m).unwrap().is_empty();
        assert_eq!(empty, check_conflict_free_revised(&o, &a, &b, &m).unwrap());
    }
}

#[test]
fn revised_is_strictly_stronger() {
    let mut strict = 0;
    for [o, a, b, m] in all_tuples() {
        let (o, a, b, m) = (val(&o), val(&a), val(&b), val(&m));
        let revised = check_conflict_free_revised(&o, &a, &b, &m).unwrap();
        let original = check_conflict_free_original(&o, &a, &b, &m).unwrap();
        if revised {
            assert!(original);
        } else if original {
            strict += 1;
        }
    }
    assert!(strict > 0);
}

#[test]
fn witnesses_satisfy_their_inequalities() {
    for [o, a, b, m] in all_tuples() {
        let (vo, va, vb, vm) = (val(&o), val(&a), val(&b), val(&m));
        for w in classify_violations(&vo, &va, &vb, &vm).unwrap() {
            let i = w.slot;
            assert_eq!((w.base, w.left, w.right, w.merge), (vo.value(i), va.value(i), vb.value(i), vm.value(i)));
            match w.kind {
                ViolationKind::ChangeLost { variant: 0 } => assert!(o[i] != a[i] && a[i] != m[i]),
                ViolationKind::ChangeLost { variant: 1 } => assert!(o[i] != b[i] && b[i] != m[i]),
                ViolationKind::MergeDivergent => assert!(a[i] != m[i] && m[i] != b[i]),
                ViolationKind::ChangeLost { .. } => panic!("unexpected variant index"),
            }
        }
    }
}

#[test]
fn unexpected_behavior_matches_brute_force() {
    for [o, a, b, m] in all_tuples() {
        let expected: BTreeSet<usize> =
            (0..m.len()).filter(|&i| m[i] != o[i] && m[i] != a[i] && m[i] != b[i]).collect();
        let got = unexpected_behavior(&val(&m), &[&val(&o), &val(&a), &val(&b)]).unwrap();
        match got {
            Some(v) => {
                assert_eq!(v.kind, VerdictKind::UnexpectedBehavior);
                assert_eq!(v.witness_slots, expected);
            }
            None => assert!(expected.is_empty()),
        }
    }
}

#[test]
fn lost_behavior_matches_brute_force() {
    for [o, a, _, m] in all_tuples() {
        let expected: BTreeSet<usize> = (0..a.len()).filter(|&i| a[i] != o[i] && a[i] != m[i]).collect();
        let got = lost_behavior(1, &val(&a), &val(&o), &val(&m)).unwrap();
        assert_eq!(got.map(|v| v.witness_slots).unwrap_or_default(), expected);
    }
}

#[test]
fn verdict_examples() {
    let three = val(&[3]);
    let v = unexpected_behavior(&val(&[5]), &[&three, &three, &three]).unwrap().unwrap();
    assert_eq!(v.witness_slots, BTreeSet::from([0]));
    assert_eq!(v.assertion.expected, Value::Int(5));
    assert!(unexpected_behavior(&val(&[5]), &[&val(&[3]), &val(&[5])]).unwrap().is_none());
    let lost = lost_behavior(1, &val(&[7]), &val(&[3]), &val(&[3])).unwrap().unwrap();
    assert_eq!(lost.kind, VerdictKind::LostBehavior { parent: 1 });
    assert!(lost_behavior(1, &val(&[7]), &val(&[3]), &val(&[7])).unwrap().is_none());
}

#[test]
fn predicate_examples() {
    let (one, two) = (val(&[1]), val(&[2]));
    assert!(!check_conflict_free_original(&one, &two, &one, &one).unwrap());
    assert!(check_conflict_free_revised(&one, &two, &one, &two).unwrap());
    assert!(check_conflict_free_original(&one, &one, &one, &one).unwrap());
    assert!(check_conflict_free_revised(&one, &one, &one, &one).unwrap());
    assert_eq!(
        check_conflict_free_revised(&one, &one, &one, &val(&[1, 2])),
        Err(OracleError::PointMismatch)
    );
}

#[test]
fn setget_sum_slot_classification() {
    let kinds: Vec<ViolationKind> = classify_violations(&val(&[3]), &val(&[4]), &val(&[4]), &val(&[5]))
        .unwrap()
        .into_iter()
        .map(|w| w.kind)
        .collect();
    assert_eq!(
        kinds,
        vec![
            ViolationKind::ChangeLost { variant: 0 },
            ViolationKind::ChangeLost { variant: 1 },
            ViolationKind::MergeDivergent
        ]
    );
}
