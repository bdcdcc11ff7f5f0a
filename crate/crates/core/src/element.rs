//! Periodic table lookups and the valence table used for validation.

use std::collections::BTreeMap;
use std::fmt;

const SYMBOLS: [&str; 86] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn",
];

/// A chemical element, stored by atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        SYMBOLS
            .iter()
            .position(|s| *s == symbol)
            .map(|i| Element(i as u8 + 1))
    }

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..=SYMBOLS.len() as u8).contains(&z).then_some(Element(z))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.0 as usize - 1]
    }

    /// Elements that may be written without brackets.
    pub fn is_organic_subset(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
    }

    /// Elements that may carry the lowercase aromatic form.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34 | 52)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Allowed valences per element, with the charge adjustment for N and O.
///
/// Elements without an entry are not valence-checked (bracket metals and the
/// like pass through).
#[derive(Debug, Clone, PartialEq)]
pub struct ValenceTable {
    entries: BTreeMap<Element, Vec<u8>>,
}

impl Default for ValenceTable {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(Element::B, vec![3]);
        entries.insert(Element::C, vec![4]);
        entries.insert(Element::N, vec![3]);
        entries.insert(Element::O, vec![2]);
        entries.insert(Element::P, vec![3, 5]);
        entries.insert(Element::S, vec![2, 4, 6]);
        for halogen in [Element::F, Element::CL, Element::BR, Element::I] {
            entries.insert(halogen, vec![1]);
        }
        entries.insert(Element::H, vec![1]);
        ValenceTable { entries }
    }
}

impl ValenceTable {
    /// Replace the allowed valences of one element. An empty list removes the
    /// entry, which disables checking for that element.
    pub fn set(&mut self, element: Element, mut valences: Vec<u8>) {
        if valences.is_empty() {
            self.entries.remove(&element);
        } else {
            valences.sort_unstable();
            valences.dedup();
            self.entries.insert(element, valences);
        }
    }

    /// Allowed valences for an element at a formal charge, ascending.
    pub fn allowed(&self, element: Element, charge: i8) -> Option<Vec<u8>> {
        let base = self.entries.get(&element)?;
        let shift: i16 = if element == Element::N || element == Element::O {
            charge.signum() as i16
        } else {
            0
        };
        Some(
            base.iter()
                .map(|&v| v as i16 + shift)
                .filter(|&v| v >= 0)
                .map(|v| v as u8)
                .collect(),
        )
    }

    pub fn max_valence(&self, element: Element, charge: i8) -> Option<u8> {
        self.allowed(element, charge)
            .and_then(|v| v.last().copied())
    }
}
