//! Conflict predicates over concrete execution valuations and the n-parent
//! test-oracle verdicts built on them.
//!
//! All functions compare valuations slot by slot. A valuation is the ordered
//! vector of observations one test produced on one version; valuations are
//! only comparable when they come from the same test, i.e. share one point
//! list.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::minilang::Value;
use crate::testgen::case::Assertion;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointKind {
    ReturnValue,
    FieldState { class: String, label: String, field: String },
    ExceptionMarker,
}

/// Where in a test an observation is taken.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObservationPoint {
    pub action: usize,
    #[serde(flatten)]
    pub kind: PointKind,
}

impl fmt::Display for ObservationPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PointKind::ReturnValue => write!(f, "@{} return", self.action),
            PointKind::ExceptionMarker => write!(f, "@{} raised", self.action),
            PointKind::FieldState { label, field, .. } => write!(f, "@{} field {label}.{field}", self.action),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionValuation {
    pub slots: Vec<(ObservationPoint, Value)>,
}

impl ExecutionValuation {
    /// Builds a valuation with synthetic points, one return slot per value.
    pub fn from_values(values: impl IntoIterator<Item = Value>) -> Self {
        Self {
            slots: values
                .into_iter()
                .enumerate()
                .map(|(i, v)| (ObservationPoint { action: i, kind: PointKind::ReturnValue }, v))
                .collect(),
        }
    }

    pub fn ints(values: &[i64]) -> Self {
        Self::from_values(values.iter().map(|v| Value::Int(*v)))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn value(&self, i: usize) -> Value {
        self.slots[i].1
    }

    pub fn point(&self, i: usize) -> &ObservationPoint {
        &self.slots[i].0
    }

    pub fn same_points(&self, other: &ExecutionValuation) -> bool {
        self.slots.len() == other.slots.len() && self.slots.iter().zip(&other.slots).all(|(a, b)| a.0 == b.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("valuations do not share one observation-point list")]
    PointMismatch,
    #[error("at least one parent valuation is required")]
    NoParents,
}

fn shared_len(vals: &[&ExecutionValuation]) -> Result<usize, OracleError> {
    let first = vals[0];
    if vals.iter().all(|v| v.same_points(first)) {
        Ok(first.len())
    } else {
        Err(OracleError::PointMismatch)
    }
}

/// Check used by the original verification approach:
/// `(changes of A kept ∧ changes of B kept) ∨ all four versions agree everywhere`.
///
/// Misses a merge that invents a value on a slot none of the other three
/// versions touched.
pub fn check_conflict_free_original(
    o: &ExecutionValuation,
    a: &ExecutionValuation,
    b: &ExecutionValuation,
    m: &ExecutionValuation,
) -> Result<bool, OracleError> {
    let n = shared_len(&[o, a, b, m])?;
    let (o, a, b, m) = (|i| o.value(i), |i| a.value(i), |i| b.value(i), |i| m.value(i));
    let keeps_a = (0..n).all(|i| o(i) == a(i) || a(i) == m(i));
    let keeps_b = (0..n).all(|i| o(i) == b(i) || b(i) == m(i));
    let all_equal = (0..n).all(|i| o(i) == a(i) && a(i) == b(i) && b(i) == m(i));
    Ok((keeps_a && keeps_b) || all_equal)
}

/// Revised check: every slot keeps A's change, keeps B's change, and keeps the
/// base value wherever neither variant changed it.
pub fn check_conflict_free_revised(
    o: &ExecutionValuation,
    a: &ExecutionValuation,
    b: &ExecutionValuation,
    m: &ExecutionValuation,
) -> Result<bool, OracleError> {
    let n = shared_len(&[o, a, b, m])?;
    Ok((0..n).all(|i| {
        let (o, a, b, m) = (o.value(i), a.value(i), b.value(i), m.value(i));
        let keeps_a = o == a || a == m;
        let keeps_b = o == b || b == m;
        let keeps_base = !(o == a && a == b) || o == m;
        keeps_a && keeps_b && keeps_base
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Variant `variant` (0 = first, 1 = second) changed the slot relative to
    /// the base and the merge does not carry that change.
    ChangeLost { variant: usize },
    /// The merge differs from both variants.
    MergeDivergent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationWitness {
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub slot: usize,
    pub base: Value,
    pub left: Value,
    pub right: Value,
    pub merge: Value,
}

/// Lists every (slot, violation) pair of a four-version valuation tuple.
///
/// The list is empty exactly when [`check_conflict_free_revised`] holds.
pub fn classify_violations(
    o: &ExecutionValuation,
    a: &ExecutionValuation,
    b: &ExecutionValuation,
    m: &ExecutionValuation,
) -> Result<Vec<ViolationWitness>, OracleError> {
    let n = shared_len(&[o, a, b, m])?;
    let mut out = Vec::new();
    for i in 0..n {
        let (ov, av, bv, mv) = (o.value(i), a.value(i), b.value(i), m.value(i));
        let mut push = |kind| out.push(ViolationWitness { kind, slot: i, base: ov, left: av, right: bv, merge: mv });
        if ov != av && av != mv {
            push(ViolationKind::ChangeLost { variant: 0 });
        }
        if ov != bv && bv != mv {
            push(ViolationKind::ChangeLost { variant: 1 });
        }
        if av != mv && mv != bv {
            push(ViolationKind::MergeDivergent);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind {
    /// The generation target disagrees with every other parent.
    UnexpectedBehavior,
    /// Parent `parent` (1-based) introduced behavior that the merge dropped.
    LostBehavior { parent: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleVerdict {
    #[serde(flatten)]
    pub kind: VerdictKind,
    pub witness_slots: BTreeSet<usize>,
    /// Assertion on the first witness slot, expected value from the target.
    pub assertion: Assertion,
}

fn verdict(kind: VerdictKind, target: &ExecutionValuation, slots: BTreeSet<usize>) -> Option<OracleVerdict> {
    let first = *slots.iter().next()?;
    let assertion = Assertion { point: target.point(first).clone(), expected: target.value(first) };
    Some(OracleVerdict { kind, witness_slots: slots, assertion })
}

/// Slots where `target` differs from every parent. Slots the target never
/// observed cannot carry an assertion and are skipped.
pub fn unexpected_behavior(
    target: &ExecutionValuation,
    parents: &[&ExecutionValuation],
) -> Result<Option<OracleVerdict>, OracleError> {
    if parents.is_empty() {
        return Err(OracleError::NoParents);
    }
    let mut all = vec![target];
    all.extend_from_slice(parents);
    let n = shared_len(&all)?;
    let slots = (0..n)
        .filter(|&i| target.value(i) != Value::Unobserved)
        .filter(|&i| parents.iter().all(|p| p.value(i) != target.value(i)))
        .collect();
    Ok(verdict(VerdictKind::UnexpectedBehavior, target, slots))
}

/// Slots where parent `parent` (1-based) departs from the ancestor and the
/// merge does not follow it.
pub fn lost_behavior(
    parent: usize,
    variant: &ExecutionValuation,
    ancestor: &ExecutionValuation,
    merge: &ExecutionValuation,
) -> Result<Option<OracleVerdict>, OracleError> {
    let n = shared_len(&[variant, ancestor, merge])?;
    let slots = (0..n)
        .filter(|&i| variant.value(i) != Value::Unobserved)
        .filter(|&i| variant.value(i) != ancestor.value(i) && variant.value(i) != merge.value(i))
        .collect();
    Ok(verdict(VerdictKind::LostBehavior { parent }, variant, slots))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[i64]) -> ExecutionValuation {
        ExecutionValuation::ints(x)
    }

    #[test]
    fn original_check_misses_invented_merge_value() {
        let (o, m) = (v(&[0]), v(&[1]));
        assert!(check_conflict_free_original(&o, &o, &o, &m).unwrap());
        assert!(!check_conflict_free_revised(&o, &o, &o, &m).unwrap());
    }

    #[test]
    fn identity_is_conflict_free() {
        let x = v(&[4, 5]);
        assert!(check_conflict_free_original(&x, &x, &x, &x).unwrap());
        assert!(check_conflict_free_revised(&x, &x, &x, &x).unwrap());
        assert!(classify_violations(&x, &x, &x, &x).unwrap().is_empty());
    }

    #[test]
    fn change_dropped_by_merge() {
        let (o, a, b, m) = (v(&[1]), v(&[2]), v(&[1]), v(&[1]));
        assert!(!check_conflict_free_original(&o, &a, &b, &m).unwrap());
    }

    #[test]
    fn change_kept_by_merge() {
        let (o, a, b, m) = (v(&[1]), v(&[2]), v(&[1]), v(&[2]));
        assert!(check_conflict_free_revised(&o, &a, &b, &m).unwrap());
    }

    #[test]
    fn both_setters_changed_sum() {
        let w = classify_violations(&v(&[3]), &v(&[4]), &v(&[4]), &v(&[5])).unwrap();
        let kinds: Vec<_> = w.iter().map(|w| w.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::ChangeLost { variant: 0 },
                ViolationKind::ChangeLost { variant: 1 },
                ViolationKind::MergeDivergent
            ]
        );
        assert!(w.iter().all(|w| w.slot == 0 && w.merge == Value::Int(5)));
    }

    #[test]
    fn mismatched_points_rejected() {
        let a = v(&[1]);
        let b = v(&[1, 2]);
        assert_eq!(check_conflict_free_revised(&a, &a, &a, &b), Err(OracleError::PointMismatch));
        assert_eq!(unexpected_behavior(&a, &[]), Err(OracleError::NoParents));
    }

    #[test]
    fn unexpected_behavior_needs_unanimity() {
        let p = v(&[3]);
        let hit = unexpected_behavior(&v(&[5]), &[&p, &p, &p]).unwrap().unwrap();
        assert_eq!(hit.kind, VerdictKind::UnexpectedBehavior);
        assert_eq!(hit.witness_slots, BTreeSet::from([0]));
        assert_eq!(hit.assertion.expected, Value::Int(5));
        assert!(unexpected_behavior(&v(&[5]), &[&v(&[3]), &v(&[5])]).unwrap().is_none());
    }

    #[test]
    fn lost_behavior_cases() {
        let lost = lost_behavior(1, &v(&[7]), &v(&[3]), &v(&[3])).unwrap().unwrap();
        assert_eq!(lost.kind, VerdictKind::LostBehavior { parent: 1 });
        assert!(lost_behavior(1, &v(&[7]), &v(&[3]), &v(&[7])).unwrap().is_none());
    }

    #[test]
    fn unobserved_target_slots_are_not_witnesses() {
        let t = ExecutionValuation::from_values([Value::Unobserved, Value::Int(1)]);
        let p = v(&[0, 0]);
        let hit = unexpected_behavior(&t, &[&p]).unwrap().unwrap();
        assert_eq!(hit.witness_slots, BTreeSet::from([1]));
    }
}
