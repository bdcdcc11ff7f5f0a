//! Attributed molecular graph.

use crate::element::{Element, ValenceTable};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer label used for hashing and canonical ordering.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    /// Integral valence contribution; aromatic bonds are handled per atom.
    pub fn integral(self) -> Option<u8> {
        match self {
            BondOrder::Single => Some(1),
            BondOrder::Double => Some(2),
            BondOrder::Triple => Some(3),
            BondOrder::Aromatic => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    /// Total attached hydrogens (explicit for bracket atoms, resolved from the
    /// valence model otherwise).
    pub hydrogens: u8,
    pub aromatic: bool,
    pub isotope: Option<u16>,
    /// True when the hydrogen count was stated in brackets rather than derived.
    pub bracket: bool,
}

impl Atom {
    pub fn organic(element: Element) -> Atom {
        Atom {
            element,
            charge: 0,
            hydrogens: 0,
            aromatic: false,
            isotope: None,
            bracket: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("self-loop on atom {0}")]
    SelfLoop(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("atom index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("atom {0} violates its valence")]
    ValenceViolation(usize),
    #[error("aromatic atom {0} is not part of an aromatic ring")]
    AromaticOutsideRing(usize),
}

/// Atoms plus an adjacency list over bonds. Hydrogens are implicit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new() -> MolGraph {
        MolGraph::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<usize, GraphError> {
        let n = self.atoms.len();
        for idx in [a, b] {
            if idx >= n {
                return Err(GraphError::IndexOutOfRange(idx));
            }
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        if self.bond_between(a, b).is_some() {
            return Err(GraphError::DuplicateBond(a.min(b), a.max(b)));
        }
        self.bonds.push(Bond { a, b, order });
        let id = self.bonds.len() - 1;
        self.adjacency[a].push((b, id));
        self.adjacency[b].push((a, id));
        Ok(id)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbor, bond index)` pairs for an atom.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, id)| &self.bonds[id])
    }

    /// Keep only the atoms for which `keep` is true, preserving their order and
    /// the bonds among them.
    pub fn induced_subgraph(&self, keep: &[bool]) -> MolGraph {
        let mut remap = vec![usize::MAX; self.atoms.len()];
        let mut out = MolGraph::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if keep[i] {
                remap[i] = out.add_atom(atom.clone());
            }
        }
        for bond in &self.bonds {
            if keep[bond.a] && keep[bond.b] {
                out.add_bond(remap[bond.a], remap[bond.b], bond.order)
                    .expect("subgraph of a simple graph is simple");
            }
        }
        out
    }

    /// Relabel atoms: atom `i` of `self` becomes atom `perm[i]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let mut out = MolGraph::new();
        for &old in &inverse {
            out.add_atom(self.atoms[old].clone());
        }
        for bond in &self.bonds {
            out.add_bond(perm[bond.a], perm[bond.b], bond.order)
                .expect("permutation keeps the graph simple");
        }
        out
    }

    /// All-pairs shortest path lengths by BFS; `usize::MAX` when disconnected.
    pub fn distance_matrix(&self) -> Vec<Vec<usize>> {
        (0..self.atoms.len()).map(|s| self.bfs_distances(s)).collect()
    }

    pub fn bfs_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.atoms.len()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Flags each bond that lies on a cycle (i.e. is not a bridge).
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative DFS: (vertex, incoming bond, next neighbor slot)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(frame) = stack.last_mut() {
                let (u, parent_bond, slot) = *frame;
                if slot < self.adjacency[u].len() {
                    frame.2 += 1;
                    let (v, bond) = self.adjacency[u][slot];
                    if bond == parent_bond {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, bond, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            is_bridge[parent_bond] = true;
                        }
                    }
                }
            }
        }
        is_bridge.into_iter().map(|b| !b).collect()
    }

    /// Atoms incident to at least one ring bond.
    pub fn ring_atoms(&self) -> Vec<bool> {
        let ring = self.ring_bonds();
        let mut out = vec![false; self.atoms.len()];
        for (bond, &r) in self.bonds.iter().zip(&ring) {
            if r {
                out[bond.a] = true;
                out[bond.b] = true;
            }
        }
        out
    }

    /// Connected components as lists of atom indices, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for s in 0..self.atoms.len() {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Check every atom against the valence table and the aromatic-ring rule.
    pub fn check_valence(&self, table: &ValenceTable) -> Result<(), GraphError> {
        for i in 0..self.atoms.len() {
            if !crate::valence::atom_within_valence(self, i, table) {
                return Err(GraphError::ValenceViolation(i));
            }
        }
        self.check_aromatic_rings()
    }

    pub fn is_valence_consistent(&self, table: &ValenceTable) -> bool {
        self.check_valence(table).is_ok()
    }

    /// Every aromatic bond must join aromatic atoms and lie on a cycle, and
    /// every aromatic atom must carry at least two aromatic ring bonds.
    pub fn check_aromatic_rings(&self) -> Result<(), GraphError> {
        if !self.atoms.iter().any(|a| a.aromatic)
            && !self.bonds.iter().any(|b| b.order == BondOrder::Aromatic)
        {
            return Ok(());
        }
        let ring = self.ring_bonds();
        let mut aromatic_degree = vec![0usize; self.atoms.len()];
        for (bond, &in_ring) in self.bonds.iter().zip(&ring) {
            if bond.order != BondOrder::Aromatic {
                continue;
            }
            for end in [bond.a, bond.b] {
                if !self.atoms[end].aromatic || !in_ring {
                    return Err(GraphError::AromaticOutsideRing(end));
                }
                aromatic_degree[end] += 1;
            }
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.aromatic && aromatic_degree[i] < 2 {
                return Err(GraphError::AromaticOutsideRing(i));
            }
        }
        Ok(())
    }
}
