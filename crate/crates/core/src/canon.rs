//! Canonical atom ordering and canonical SMILES.
//!
//! Ordering starts from atom invariants, refines by neighbor colors until
//! stable, then individualizes atoms of the first tied cell and refines again.
//! Every branch of that search is explored (twins are pruned, since swapping
//! two twins is an automorphism) and the smallest certificate wins, so the
//! result does not depend on input atom order.

use crate::element::ValenceTable;
use crate::graph::{BondOrder, MolGraph};
use crate::parser::{parse_with, ParseError};
use crate::valence;
use std::fmt::Write as _;
use thiserror::Error;

/// Upper bound on explored search leaves. Graphs with more non-twin symmetry
/// than this keep the best leaf seen so far.
pub const LEAF_BUDGET: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("graph is not valence-consistent (atom {0})")]
    InvalidGraph(usize),
}

type Adjacency = Vec<Vec<(usize, u8)>>;

fn dense_rank<T: Ord + Clone>(sigs: &[T]) -> (Vec<usize>, usize) {
    let mut sorted: Vec<T> = sigs.to_vec();
    sorted.sort();
    sorted.dedup();
    let colors = sigs
        .iter()
        .map(|s| sorted.binary_search(s).expect("present"))
        .collect();
    (colors, sorted.len())
}

fn refine(colors: &mut Vec<usize>, adj: &Adjacency) {
    let n = colors.len();
    let mut classes = {
        let mut c = colors.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    loop {
        if classes == n {
            return;
        }
        let sigs: Vec<(usize, Vec<(usize, u8)>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<(usize, u8)> =
                    adj[v].iter().map(|&(u, l)| (colors[u], l)).collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let (next, count) = dense_rank(&sigs);
        *colors = next;
        if count == classes {
            return;
        }
        classes = count;
    }
}

fn are_twins(adj: &Adjacency, u: usize, v: usize) -> bool {
    let strip = |x: usize, other: usize| {
        let mut n: Vec<(usize, u8)> = adj[x].iter().copied().filter(|&(y, _)| y != other).collect();
        n.sort_unstable();
        n
    };
    strip(u, v) == strip(v, u)
}

struct Search<'a, C, F> {
    adj: &'a Adjacency,
    cert: F,
    best: Option<(C, Vec<usize>)>,
    leaves: usize,
}

impl<C: Ord, F: Fn(&[usize]) -> C> Search<'_, C, F> {
    fn run(&mut self, colors: Vec<usize>) {
        if self.leaves >= LEAF_BUDGET {
            return;
        }
        let n = colors.len();
        let mut counts = vec![0usize; n];
        for &c in &colors {
            counts[c] += 1;
        }
        let Some(target) = (0..n).find(|&c| counts[c] > 1) else {
            self.leaves += 1;
            let c = (self.cert)(&colors);
            if self.best.as_ref().is_none_or(|(b, _)| c < *b) {
                self.best = Some((c, colors));
            }
            return;
        };
        let cell: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
        let mut reps: Vec<usize> = Vec::new();
        for &v in &cell {
            if reps.iter().any(|&r| are_twins(self.adj, r, v)) {
                continue;
            }
            reps.push(v);
            let keys: Vec<(usize, bool)> = (0..n)
                .map(|u| (colors[u], !(u == v)))
                .collect();
            let (mut next, _) = dense_rank(&keys);
            refine(&mut next, self.adj);
            self.run(next);
        }
    }
}

/// Canonical ranks (a permutation: `ranks[v]` is the position of atom `v`)
/// for a labeled graph, choosing among equivalent orderings the one whose
/// certificate is smallest.
pub fn canonical_ranks<K, C, F>(keys: &[K], edges: &[(usize, usize, u8)], cert: F) -> Vec<usize>
where
    K: Ord + Clone,
    C: Ord,
    F: Fn(&[usize]) -> C,
{
    let n = keys.len();
    if n == 0 {
        return Vec::new();
    }
    let mut adj: Adjacency = vec![Vec::new(); n];
    for &(a, b, l) in edges {
        adj[a].push((b, l));
        adj[b].push((a, l));
    }
    let (mut colors, _) = dense_rank(keys);
    refine(&mut colors, &adj);
    let mut search = Search {
        adj: &adj,
        cert,
        best: None,
        leaves: 0,
    };
    search.run(colors);
    search.best.expect("search visits at least one leaf").1
}

/// Certificate of a labeled graph under a ranking: relabeled keys followed by
/// the sorted relabeled edge list. Equal certificates mean isomorphic graphs.
pub fn certificate<K: Clone>(keys: &[K], edges: &[(usize, usize, u8)], ranks: &[usize]) -> (Vec<K>, Vec<(usize, usize, u8)>) {
    let mut ordered: Vec<Option<K>> = vec![None; keys.len()];
    for (v, &r) in ranks.iter().enumerate() {
        ordered[r] = Some(keys[v].clone());
    }
    let mut e: Vec<(usize, usize, u8)> = edges
        .iter()
        .map(|&(a, b, l)| {
            let (x, y) = (ranks[a], ranks[b]);
            (x.min(y), x.max(y), l)
        })
        .collect();
    e.sort_unstable();
    (ordered.into_iter().map(|k| k.expect("ranks form a permutation")).collect(), e)
}

/// Invariant key of an atom for canonical ordering.
pub fn atom_key(graph: &MolGraph, i: usize) -> (u8, u16, i8, u8, bool) {
    let a = graph.atom(i);
    (
        a.element.atomic_number(),
        a.isotope.unwrap_or(0),
        a.charge,
        a.hydrogens,
        a.aromatic,
    )
}

pub fn bond_edges(graph: &MolGraph) -> Vec<(usize, usize, u8)> {
    graph
        .bonds()
        .iter()
        .map(|b| (b.a, b.b, b.order.code()))
        .collect()
}

/// Canonical SMILES with the default valence table.
pub fn canonicalize(graph: &MolGraph) -> Result<String, CanonError> {
    canonicalize_with(graph, &ValenceTable::default())
}

pub fn canonicalize_with(graph: &MolGraph, table: &ValenceTable) -> Result<String, CanonError> {
    for i in 0..graph.atom_count() {
        if !valence::atom_within_valence(graph, i, table) {
            return Err(CanonError::InvalidGraph(i));
        }
    }
    if let Err(e) = graph.check_aromatic_rings() {
        let atom = match e {
            crate::graph::GraphError::AromaticOutsideRing(a) => a,
            _ => 0,
        };
        return Err(CanonError::InvalidGraph(atom));
    }
    let keys: Vec<_> = (0..graph.atom_count()).map(|i| atom_key(graph, i)).collect();
    let edges = bond_edges(graph);
    let ranks = canonical_ranks(&keys, &edges, |r| write_smiles(graph, r, table));
    Ok(write_smiles(graph, &ranks, table))
}

/// Parse and canonicalize in one step.
pub fn canonical_smiles(smiles: &str) -> Result<String, ParseError> {
    let table = ValenceTable::default();
    let g = parse_with(smiles, &table)?;
    Ok(canonicalize_with(&g, &table).expect("parsed graphs are valence-consistent"))
}

fn atom_text(graph: &MolGraph, i: usize, table: &ValenceTable, out: &mut String) {
    let a = graph.atom(i);
    let organic_ok = a.element.is_organic_subset()
        && a.charge == 0
        && a.isotope.is_none()
        && (!a.aromatic || matches!(a.element.symbol(), "B" | "C" | "N" | "O" | "P" | "S"))
        && valence::implicit_hydrogens_in(graph, i, table) == Some(a.hydrogens);
    let symbol = if a.aromatic {
        a.element.symbol().to_ascii_lowercase()
    } else {
        a.element.symbol().to_string()
    };
    if organic_ok {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match a.hydrogens {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match a.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
}

fn bond_text(graph: &MolGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = graph.atom(a).aromatic && graph.atom(b).aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

/// Write SMILES by depth-first traversal, starting each component at its
/// lowest-ranked atom and visiting neighbors in rank order.
pub fn write_smiles(graph: &MolGraph, ranks: &[usize], table: &ValenceTable) -> String {
    let n = graph.atom_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| ranks[v]);

    let mut visited = vec![false; n];
    let mut ring_seen = vec![false; graph.bonds().len()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    // per atom: ring bonds as (partner, bond index, opens_here)
    let mut rings: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    let mut roots = Vec::new();

    // (atom, parent bond, neighbors by rank, next neighbor)
    type Frame = (usize, usize, Vec<(usize, usize)>, usize);
    let sorted_neighbors = |u: usize| {
        let mut nb: Vec<(usize, usize)> = graph.neighbors(u).to_vec();
        nb.sort_by_key(|&(v, _)| ranks[v]);
        nb
    };

    for &root in &order {
        if visited[root] {
            continue;
        }
        roots.push(root);
        // iterative DFS keeping neighbor iteration order identical to recursion
        let mut stack: Vec<Frame> = vec![(root, usize::MAX, sorted_neighbors(root), 0)];
        visited[root] = true;
        while let Some(frame) = stack.last_mut() {
            let (u, parent_bond) = (frame.0, frame.1);
            if frame.3 >= frame.2.len() {
                stack.pop();
                continue;
            }
            let (v, b) = frame.2[frame.3];
            frame.3 += 1;
            if b == parent_bond {
                continue;
            }
            if !visited[v] {
                visited[v] = true;
                children[u].push((v, b));
                stack.push((v, b, sorted_neighbors(v), 0));
            } else if !ring_seen[b] {
                ring_seen[b] = true;
                rings[v].push((u, b, true));
                rings[u].push((v, b, false));
            }
        }
    }

    let mut out = String::new();
    let mut digit_of_bond: Vec<usize> = vec![0; graph.bonds().len()];
    let mut in_use: Vec<bool> = vec![false; 100];
    for (ci, &root) in roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        // explicit stack of work items to avoid recursion on long chains
        enum Work {
            Atom(usize),
            Text(&'static str),
            Bond(usize, usize, usize),
        }
        let mut work = vec![Work::Atom(root)];
        while let Some(item) = work.pop() {
            match item {
                Work::Text(t) => out.push_str(t),
                Work::Bond(a, b, bond) => {
                    out.push_str(bond_text(graph, a, b, graph.bonds()[bond].order))
                }
                Work::Atom(u) => {
                    atom_text(graph, u, table, &mut out);
                    let mut items = rings[u].clone();
                    // closings first, then openings, each by partner rank
                    items.sort_by_key(|&(p, _, opens)| (opens, ranks[p]));
                    let mut to_free = Vec::new();
                    for (p, b, opens) in items {
                        if opens {
                            let d = (1..100).find(|&d| !in_use[d]).expect("fewer than 99 open rings");
                            in_use[d] = true;
                            digit_of_bond[b] = d;
                            out.push_str(bond_text(graph, u, p, graph.bonds()[b].order));
                            out.push_str(&ring_label(d));
                        } else {
                            let d = digit_of_bond[b];
                            out.push_str(&ring_label(d));
                            to_free.push(d);
                        }
                    }
                    for d in to_free {
                        in_use[d] = false;
                    }
                    let kids = &children[u];
                    // push in reverse so the first branch is written first
                    for (k, &(v, b)) in kids.iter().enumerate().rev() {
                        let last = k + 1 == kids.len();
                        if !last {
                            work.push(Work::Text(")"));
                        }
                        work.push(Work::Atom(v));
                        work.push(Work::Bond(u, v, b));
                        if !last {
                            work.push(Work::Text("("));
                        }
                    }
                }
            }
        }
    }
    out
}
