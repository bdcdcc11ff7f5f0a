//! Bemis–Murcko scaffolds.

use crate::element::ValenceTable;
use crate::graph::MolGraph;
use crate::valence;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("graph is not valence-consistent")]
pub struct InvalidGraph;

/// Repeatedly strip atoms of degree one or zero until none remain. Ring
/// systems and the linkers between them survive; acyclic molecules vanish.
pub fn scaffold(graph: &MolGraph) -> Result<MolGraph, InvalidGraph> {
    let table = ValenceTable::default();
    if !graph.is_valence_consistent(&table) {
        return Err(InvalidGraph);
    }
    let n = graph.atom_count();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&i| degree[i] <= 1).collect();
    while let Some(u) = queue.pop() {
        if !alive[u] {
            continue;
        }
        alive[u] = false;
        for &(v, _) in graph.neighbors(u) {
            if alive[v] {
                degree[v] -= 1;
                if degree[v] == 1 {
                    queue.push(v);
                }
            }
        }
    }
    let mut out = graph.induced_subgraph(&alive);
    valence::resolve_implicit_hydrogens(&mut out, &table);
    Ok(out)
}
