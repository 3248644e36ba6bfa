//! Selection of units under test: entities impacted by the changes of every
//! variant, found by layered impact propagation on the target's dependency
//! graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::depgraph::{extract_dependencies, DependencyGraph, EntityId};
use crate::diffing::entity_diff;
use crate::minilang::Program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub max_depth: usize,
    pub max_uuts: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { max_depth: 5, max_uuts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("max depth must be at least 1")]
    ZeroDepth,
    #[error("max UUT count must be at least 1")]
    ZeroUuts,
    #[error("at least one variant is required")]
    NoVariants,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.max_depth == 0 {
            Err(SelectionError::ZeroDepth)
        } else if self.max_uuts == 0 {
            Err(SelectionError::ZeroUuts)
        } else {
            Ok(())
        }
    }
}

/// Entities mapped to the depth at which they were first reached.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactedSet {
    pub entries: BTreeMap<EntityId, usize>,
}

impl ImpactedSet {
    pub fn contains(&self, id: &EntityId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn depth(&self, id: &EntityId) -> Option<usize> {
        self.entries.get(id).copied()
    }

    fn seeded(seeds: &BTreeSet<EntityId>) -> Self {
        Self { entries: seeds.iter().map(|s| (s.clone(), 0)).collect() }
    }

    /// Adds layer `depth` from the members first reached at `depth - 1`.
    fn expand(&mut self, graph: &DependencyGraph, depth: usize) {
        let frontier: Vec<EntityId> =
            self.entries.iter().filter(|(_, d)| **d + 1 == depth).map(|(e, _)| e.clone()).collect();
        for e in frontier {
            for next in step(graph, &e) {
                self.entries.entry(next).or_insert(depth);
            }
        }
    }
}

/// One propagation step: reverse dependents, fields a constructor defines and
/// fields a method writes.
pub fn step(graph: &DependencyGraph, entity: &EntityId) -> BTreeSet<EntityId> {
    let mut out = graph.get_impacted(entity);
    out.extend(graph.fields_written(entity));
    out
}

/// Breadth-first impact layers up to `depth` steps from `seeds`.
pub fn impacted_closure(graph: &DependencyGraph, seeds: &BTreeSet<EntityId>, depth: usize) -> ImpactedSet {
    let mut set = ImpactedSet::seeded(seeds);
    for d in 1..=depth {
        set.expand(graph, d);
    }
    set
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedUut {
    pub id: EntityId,
    /// Smallest depth at which any variant's closure reached the entity;
    /// 0 for fallback entries.
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UutSelection {
    pub uuts: Vec<SelectedUut>,
    pub fallback_used: bool,
}

impl UutSelection {
    pub fn ids(&self) -> Vec<EntityId> {
        self.uuts.iter().map(|u| u.id.clone()).collect()
    }
}

fn callable_intersection(sets: &[ImpactedSet]) -> Vec<SelectedUut> {
    let (first, rest) = sets.split_first().expect("at least one set");
    let mut out: Vec<SelectedUut> = first
        .entries
        .iter()
        .filter(|(id, _)| id.is_callable())
        .filter_map(|(id, d0)| {
            let mut depth = *d0;
            for s in rest {
                depth = depth.min(s.depth(id)?);
            }
            Some(SelectedUut { id: id.clone(), depth })
        })
        .collect();
    out.sort_by(|a, b| (a.depth, &a.id).cmp(&(b.depth, &b.id)));
    out
}

/// Selection over an explicit graph with one seed set per variant.
pub fn select_from_graph(
    graph: &DependencyGraph,
    seed_sets: &[BTreeSet<EntityId>],
    config: SelectionConfig,
) -> Result<UutSelection, SelectionError> {
    config.validate()?;
    if seed_sets.is_empty() {
        return Err(SelectionError::NoVariants);
    }
    let n = config.max_uuts;
    let mut sets: Vec<ImpactedSet> = seed_sets.iter().map(ImpactedSet::seeded).collect();
    let mut uuts = Vec::new();
    for depth in 1..=config.max_depth {
        for s in &mut sets {
            s.expand(graph, depth);
        }
        uuts = callable_intersection(&sets);
        if uuts.len() > n {
            uuts.truncate(n);
            return Ok(UutSelection { uuts, fallback_used: false });
        }
    }
    if !uuts.is_empty() {
        return Ok(UutSelection { uuts, fallback_used: false });
    }

    let changed: BTreeSet<&EntityId> = seed_sets.iter().flatten().collect();
    let fallback_used = !changed.is_empty();
    let uuts = changed
        .into_iter()
        .filter(|id| id.is_callable())
        .take(n)
        .map(|id| SelectedUut { id: id.clone(), depth: 0 })
        .collect();
    Ok(UutSelection { uuts, fallback_used })
}

/// Picks the UUTs of `target` given the other versions of a scenario.
pub fn select_uuts(
    target: &Program,
    variants: &[&Program],
    config: SelectionConfig,
) -> Result<UutSelection, SelectionError> {
    let graph = extract_dependencies(target);
    let seeds: Vec<BTreeSet<EntityId>> = variants.iter().map(|v| entity_diff(v, target).seeds()).collect();
    select_from_graph(&graph, &seeds, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::EdgeKind;

    fn m(name: &str) -> EntityId {
        EntityId::method("C", name, 0)
    }

    fn graph(edges: &[(&EntityId, &EntityId, EdgeKind)]) -> DependencyGraph {
        let mut g = DependencyGraph::default();
        for (a, b, k) in edges {
            g.nodes.insert((*a).clone());
            g.nodes.insert((*b).clone());
            g.add_edge((*a).clone(), (*b).clone(), *k);
        }
        g
    }

    #[test]
    fn linear_chain() {
        let (m1, m2, m3) = (m("m1"), m("m2"), m("m3"));
        let g = graph(&[(&m3, &m2, EdgeKind::Calls), (&m2, &m1, EdgeKind::Calls)]);
        let c = impacted_closure(&g, &BTreeSet::from([m1.clone()]), 2);
        assert_eq!(c.entries, BTreeMap::from([(m1.clone(), 0), (m2, 1), (m3, 2)]));
        let zero = impacted_closure(&g, &BTreeSet::from([m1.clone()]), 0);
        assert_eq!(zero.entries, BTreeMap::from([(m1, 0)]));
    }

    #[test]
    fn diamond() {
        let (m1, m2, m3, m4) = (m("m1"), m("m2"), m("m3"), m("m4"));
        let g = graph(&[
            (&m2, &m1, EdgeKind::Calls),
            (&m3, &m1, EdgeKind::Calls),
            (&m4, &m2, EdgeKind::Calls),
            (&m4, &m3, EdgeKind::Calls),
        ]);
        let c = impacted_closure(&g, &BTreeSet::from([m1.clone()]), 2);
        assert_eq!(c.entries, BTreeMap::from([(m1, 0), (m2, 1), (m3, 1), (m4, 2)]));
    }

    #[test]
    fn constructor_field_reader_chain() {
        let ctor = EntityId::constructor("C", 0);
        let f = EntityId::field("C", "f");
        let (m1, m2) = (m("m1"), m("m2"));
        let g = graph(&[
            (&ctor, &f, EdgeKind::Defines),
            (&m1, &f, EdgeKind::Reads),
            (&m2, &m1, EdgeKind::Calls),
        ]);
        let cfg = SelectionConfig { max_depth: 3, max_uuts: 3 };
        let sel = select_from_graph(&g, &[BTreeSet::from([ctor]), BTreeSet::from([m1.clone()])], cfg).unwrap();
        assert!(!sel.fallback_used);
        assert_eq!(sel.ids(), vec![m1, m2]);
    }

    #[test]
    fn no_changes_means_empty_without_fallback() {
        let g = graph(&[]);
        let sel = select_from_graph(&g, &[BTreeSet::new(), BTreeSet::new()], SelectionConfig::default()).unwrap();
        assert!(sel.uuts.is_empty());
        assert!(!sel.fallback_used);
    }

    #[test]
    fn disjoint_changes_fall_back() {
        let (m1, m2) = (m("m1"), m("m2"));
        let g = graph(&[(&m1, &m1, EdgeKind::Calls), (&m2, &m2, EdgeKind::Calls)]);
        let sel = select_from_graph(&g, &[BTreeSet::from([m1.clone()]), BTreeSet::from([m2.clone()])], SelectionConfig::default())
            .unwrap();
        assert!(sel.fallback_used);
        assert_eq!(sel.ids(), vec![m1, m2]);
    }

    #[test]
    fn invalid_config_rejected() {
        let g = graph(&[]);
        let bad = SelectionConfig { max_depth: 0, max_uuts: 3 };
        assert_eq!(select_from_graph(&g, &[BTreeSet::new()], bad), Err(SelectionError::ZeroDepth));
        assert_eq!(select_from_graph(&g, &[], SelectionConfig::default()), Err(SelectionError::NoVariants));
    }
}
