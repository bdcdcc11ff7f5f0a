//! Valence model: implicit hydrogen resolution and per-atom checks.
//!
//! Aromatic bonds contribute one unit each plus a single shared pi unit per
//! aromatic atom. An aromatic atom that cannot host the pi unit (furan `o`,
//! thiophene `s`, `[nH]`) falls back to the lone-pair form where each
//! aromatic bond counts one.

use crate::element::ValenceTable;
use crate::graph::{BondOrder, MolGraph};
use crate::element::Element;

/// `(sum of integral bond orders, number of aromatic bonds)` for an atom.
pub fn bond_sums(graph: &MolGraph, atom: usize) -> (u32, u32) {
    let mut integral = 0u32;
    let mut aromatic = 0u32;
    for &(_, bond) in graph.neighbors(atom) {
        match graph.bonds()[bond].order.integral() {
            Some(o) => integral += o as u32,
            None => aromatic += 1,
        }
    }
    (integral, aromatic)
}

/// Valence used by the bonds alone in the lone-pair form.
pub fn lone_pair_sum(integral: u32, aromatic_bonds: u32) -> u32 {
    integral + aromatic_bonds
}

/// Valence used by the bonds alone in the pi form.
pub fn pi_sum(integral: u32, aromatic_bonds: u32, is_aromatic: bool) -> u32 {
    integral + aromatic_bonds + u32::from(is_aromatic && aromatic_bonds > 0)
}

/// Implicit hydrogens for an organic-subset atom, or `None` when the bonds
/// already exceed every allowed valence. Elements without a table entry get
/// zero hydrogens.
pub fn implicit_hydrogens(
    element: Element,
    aromatic: bool,
    integral: u32,
    aromatic_bonds: u32,
    table: &ValenceTable,
) -> Option<u8> {
    let Some(allowed) = table.allowed(element, 0) else {
        return Some(0);
    };
    let lp = lone_pair_sum(integral, aromatic_bonds);
    let pi = pi_sum(integral, aromatic_bonds, aromatic);
    let target = allowed.iter().map(|&v| v as u32).find(|&v| v >= lp)?;
    let used = if pi <= target { pi } else { lp };
    Some((target - used) as u8)
}

/// Implicit hydrogen count for a non-bracket atom at its current position in
/// the graph.
pub fn implicit_hydrogens_in(graph: &MolGraph, atom: usize, table: &ValenceTable) -> Option<u8> {
    let (integral, arom) = bond_sums(graph, atom);
    let a = graph.atom(atom);
    implicit_hydrogens(a.element, a.aromatic, integral, arom, table)
}

pub fn atom_within_valence(graph: &MolGraph, atom: usize, table: &ValenceTable) -> bool {
    let a = graph.atom(atom);
    let Some(max) = table.max_valence(a.element, a.charge) else {
        return true;
    };
    let (integral, arom) = bond_sums(graph, atom);
    let used = lone_pair_sum(integral, arom) + a.hydrogens as u32;
    if used > max as u32 {
        return false;
    }
    if !a.bracket {
        // organic atoms must land exactly on an allowed valence
        return implicit_hydrogens(a.element, a.aromatic, integral, arom, table).is_some();
    }
    true
}

/// Recompute the hydrogen counts of every non-bracket atom, e.g. after atoms
/// were removed.
pub fn resolve_implicit_hydrogens(graph: &mut MolGraph, table: &ValenceTable) {
    for i in 0..graph.atom_count() {
        if !graph.atom(i).bracket {
            let h = implicit_hydrogens_in(graph, i, table).unwrap_or(0);
            graph.atom_mut(i).hydrogens = h;
        }
    }
}

/// Integral bond order sum counting aromatic bonds as 1.5, for reporting.
pub fn nominal_valence(graph: &MolGraph, atom: usize) -> f64 {
    graph
        .neighbors(atom)
        .iter()
        .map(|&(_, b)| match graph.bonds()[b].order {
            BondOrder::Aromatic => 1.5,
            o => o.integral().unwrap_or(0) as f64,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_h_for_common_cases() {
        let t = ValenceTable::default();
        // methane, ethane carbon, carbonyl O, nitrile N
        assert_eq!(implicit_hydrogens(Element::C, false, 0, 0, &t), Some(4));
        assert_eq!(implicit_hydrogens(Element::C, false, 1, 0, &t), Some(3));
        assert_eq!(implicit_hydrogens(Element::O, false, 2, 0, &t), Some(0));
        assert_eq!(implicit_hydrogens(Element::N, false, 3, 0, &t), Some(0));
        // hypervalent sulfur picks the next allowed valence
        assert_eq!(implicit_hydrogens(Element::S, false, 3, 0, &t), Some(1));
        // pentavalent carbon has no solution
        assert_eq!(implicit_hydrogens(Element::C, false, 5, 0, &t), None);
    }

    #[test]
    fn implicit_h_for_aromatic_atoms() {
        let t = ValenceTable::default();
        // benzene c, fused junction c, pyridine n, furan o, thiophene s
        assert_eq!(implicit_hydrogens(Element::C, true, 0, 2, &t), Some(1));
        assert_eq!(implicit_hydrogens(Element::C, true, 0, 3, &t), Some(0));
        assert_eq!(implicit_hydrogens(Element::N, true, 0, 2, &t), Some(0));
        assert_eq!(implicit_hydrogens(Element::O, true, 0, 2, &t), Some(0));
        assert_eq!(implicit_hydrogens(Element::S, true, 0, 2, &t), Some(0));
        // substituted benzene carbon
        assert_eq!(implicit_hydrogens(Element::C, true, 1, 2, &t), Some(0));
    }
}
