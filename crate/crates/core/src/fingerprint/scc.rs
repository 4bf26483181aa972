//! Strongly connected components (Tarjan), emitted dependencies-first.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::lang::{CallGraph, EntityId};

/// Dependency relation condensed into strongly connected components.
#[derive(Clone, Debug, Default)]
pub struct DepGraph {
    pub nodes: Vec<EntityId>,
    pub edges: CallGraph,
    /// Components in topological order: every dependency of a component
    /// lies in an earlier component or in the component itself.
    pub sccs: Vec<Vec<EntityId>>,
    component: HashMap<EntityId, usize>,
}

impl DepGraph {
    pub fn component_of(&self, id: &EntityId) -> Option<usize> {
        self.component.get(id).copied()
    }

    pub fn deps(&self, id: &EntityId) -> impl Iterator<Item = &EntityId> {
        self.edges.get(id).into_iter().flatten()
    }

    /// A component is cyclic if it has several members or a self-loop.
    pub fn is_cyclic(&self, idx: usize) -> bool {
        let c = &self.sccs[idx];
        c.len() > 1 || self.deps(&c[0]).any(|d| *d == c[0])
    }
}

/// Condenses `edges` over `nodes`. DFS roots are taken in the order of
/// `nodes` (source order), successors in sorted order, so the output is
/// deterministic. Edges to unknown nodes are ignored.
pub fn condense(nodes: &[EntityId], edges: &CallGraph) -> DepGraph {
    let index_of: HashMap<&EntityId, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let succ: Vec<Vec<usize>> = nodes
        .iter()
        .map(|n| {
            edges
                .get(n)
                .into_iter()
                .flatten()
                .filter_map(|d| index_of.get(d).copied())
                .collect()
        })
        .collect();

    const UNVISITED: usize = usize::MAX;
    let n = nodes.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut comps: Vec<Vec<usize>> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // Explicit call stack of (node, next successor position).
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }

    let sccs: Vec<Vec<EntityId>> = comps
        .into_iter()
        .map(|c| c.into_iter().map(|i| nodes[i].clone()).collect())
        .collect();
    let component = sccs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |id| (id.clone(), i)))
        .collect();
    let known: BTreeSet<&EntityId> = nodes.iter().collect();
    let edges: BTreeMap<EntityId, BTreeSet<EntityId>> = nodes
        .iter()
        .map(|n| {
            let ds = edges
                .get(n)
                .into_iter()
                .flatten()
                .filter(|d| known.contains(d))
                .cloned()
                .collect();
            (n.clone(), ds)
        })
        .collect();
    DepGraph {
        nodes: nodes.to_vec(),
        edges,
        sccs,
        component,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(n: &str) -> EntityId {
        EntityId::function(n)
    }

    fn graph(pairs: &[(&str, &str)]) -> CallGraph {
        let mut g = CallGraph::new();
        for (a, b) in pairs {
            g.entry(f(a)).or_default().insert(f(b));
        }
        g
    }

    #[test]
    fn empty() {
        let g = condense(&[], &CallGraph::new());
        assert!(g.sccs.is_empty());
    }

    #[test]
    fn mutual_recursion_is_one_component() {
        let g = condense(&[f("F"), f("G")], &graph(&[("F", "G"), ("G", "F")]));
        assert_eq!(g.sccs, vec![vec![f("F"), f("G")]]);
        assert!(g.is_cyclic(0));
    }

    #[test]
    fn self_loop_is_cyclic_singleton() {
        let g = condense(&[f("F")], &graph(&[("F", "F")]));
        assert_eq!(g.sccs.len(), 1);
        assert!(g.is_cyclic(0));
    }

    #[test]
    fn chain_is_dependencies_first() {
        let g = condense(&[f("A"), f("B"), f("C")], &graph(&[("A", "B"), ("B", "C")]));
        assert_eq!(g.sccs, vec![vec![f("C")], vec![f("B")], vec![f("A")]]);
        assert!(!g.is_cyclic(0));
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let names: Vec<String> = (0..50_000).map(|i| format!("N{i}")).collect();
        let nodes: Vec<EntityId> = names.iter().map(|n| f(n)).collect();
        let mut g = CallGraph::new();
        for w in nodes.windows(2) {
            g.entry(w[0].clone()).or_default().insert(w[1].clone());
        }
        let d = condense(&nodes, &g);
        assert_eq!(d.sccs.len(), 50_000);
        assert_eq!(d.sccs[0], vec![nodes[49_999].clone()]);
    }
}
