//! Small molecule generators and fixtures for tests and demos.

use crate::canon::canonical_smiles;
use crate::parser::is_valid;
use rand::seq::IndexedRandom;
use rand::Rng;

/// A handful of real drug-like molecules.
pub const DRUG_LIKE: &[&str] = &[
    "CC(=O)Oc1ccccc1C(=O)O",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "CC(=O)Nc1ccc(O)cc1",
    "OC(=O)c1ccccc1O",
    "c1ccc2ccccc2c1",
    "c1ccncc1",
    "c1ccoc1",
    "c1ccsc1",
    "C1CCNCC1",
    "O=C1CCCCC1",
    "CCN(CC)CC",
    "CC(C)(C)OC(=O)N",
    "COc1ccc(cc1)C=O",
    "Clc1ccc(Cl)cc1",
    "NC(=O)c1cccnc1",
    "C1CC1C(=O)O",
    "CCOC(=O)C=C",
    "OCC(O)CO",
    "CS(=O)(=O)C",
];

const ATOMS: &[&str] = &["C", "C", "C", "C", "N", "O"];
const BONDS: &[&str] = &["", "", "", "", "=", "#"];

/// Random aliphatic SMILES with branches and ring closures, in canonical
/// form. Retries until the string parses.
pub fn random_smiles<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize) -> String {
    loop {
        let s = random_candidate(rng, max_atoms.max(1));
        if is_valid(&s) {
            return canonical_smiles(&s).expect("valid SMILES canonicalizes");
        }
    }
}

fn random_candidate<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize) -> String {
    let n = rng.random_range(1..=max_atoms);
    let mut out = String::new();
    let mut depth = 0usize;
    let mut open_ring: Option<(u8, usize)> = None;
    for i in 0..n {
        if i > 0 {
            if depth > 0 && rng.random_bool(0.3) {
                out.push(')');
                depth -= 1;
            } else if i + 1 < n && rng.random_bool(0.2) {
                out.push('(');
                depth += 1;
            }
            out.push_str(BONDS.choose(rng).unwrap());
        }
        out.push_str(ATOMS.choose(rng).unwrap());
        match open_ring {
            None if i + 3 < n && rng.random_bool(0.15) => {
                out.push('1');
                open_ring = Some((1, i));
            }
            Some((d, at)) if i >= at + 2 && rng.random_bool(0.4) => {
                out.push((b'0' + d) as char);
                open_ring = None;
            }
            _ => {}
        }
    }
    if let Some((d, _)) = open_ring {
        out.push((b'0' + d) as char);
    }
    out.extend(std::iter::repeat_n(')', depth));
    out
}

const SUBSTITUENTS: &[&str] = &["C", "CC", "O", "N", "OC", "C(=O)O", "C(=O)N", "CO", "CN", "F", "Cl", "C=C", "C#N"];

/// Benzene carrying one to three random substituents, canonical form.
pub fn aromatic_smiles<R: Rng + ?Sized>(rng: &mut R) -> String {
    let count = rng.random_range(1..=3);
    let mut slots: Vec<Option<&str>> = vec![None; 6];
    for _ in 0..count {
        let at = rng.random_range(0..6);
        slots[at] = Some(SUBSTITUENTS.choose(rng).unwrap());
    }
    let mut s = String::new();
    for (k, slot) in slots.iter().enumerate() {
        s.push('c');
        if k == 0 {
            s.push('1');
        }
        if let Some(sub) = slot {
            if k == 5 {
                s.push('1');
                s.push_str(sub);
                return canonical_smiles(&s).expect("substituted benzene is valid");
            }
            s.push('(');
            s.push_str(sub);
            s.push(')');
        }
    }
    s.push('1');
    canonical_smiles(&s).expect("substituted benzene is valid")
}

/// Acyclic chain of three to eight carbons with one or two substituents,
/// canonical form.
pub fn chain_smiles<R: Rng + ?Sized>(rng: &mut R) -> String {
    let len = rng.random_range(3..=8);
    let mut s = String::new();
    let subs = rng.random_range(1..=2);
    let positions: Vec<usize> = (0..subs).map(|_| rng.random_range(0..len)).collect();
    for k in 0..len {
        s.push('C');
        if positions.contains(&k) && k + 1 < len {
            s.push('(');
            s.push_str(["O", "N", "C", "=O", "F"].choose(rng).unwrap());
            s.push(')');
        }
    }
    s.push_str(["O", "N", "", "OC"].choose(rng).unwrap());
    canonical_smiles(&s).expect("substituted chain is valid")
}

/// Apply one random syntactic corruption to a SMILES string: a stray branch
/// bracket, a stray ring digit, a bond upgrade or an extra substituent.
/// Corruptions never separate a bond symbol from its atoms.
pub fn mutate<R: Rng + ?Sized>(rng: &mut R, smiles: &str) -> String {
    let chars: Vec<char> = smiles.chars().collect();
    let atom_ends: Vec<usize> = (0..chars.len())
        .filter(|&i| chars[i].is_ascii_alphabetic() && !(chars[i] == 'l' || chars[i] == 'r'))
        .map(|i| i + 1)
        .collect();
    let atom_starts: Vec<usize> = atom_ends
        .iter()
        .map(|&e| e - 1)
        .filter(|&s| atom_ends.first().is_some_and(|&first| first <= s))
        .collect();
    let closes_at: Vec<usize> = (0..=chars.len())
        .filter(|&i| i == 0 || !matches!(chars[i - 1], '=' | '#' | '-'))
        .collect();
    let insert = |at: usize, text: &str| {
        let mut s: String = chars[..at].iter().collect();
        s.push_str(text);
        s.extend(&chars[at..]);
        s
    };
    match rng.random_range(0..6) {
        0 if !atom_ends.is_empty() => insert(*atom_ends.choose(rng).unwrap(), "("),
        1 => insert(*closes_at.choose(rng).unwrap(), ")"),
        2 => {
            let closes: Vec<usize> = (0..chars.len()).filter(|&i| chars[i] == ')').collect();
            match closes.choose(rng) {
                Some(&i) => chars.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, c)| c).collect(),
                None => insert(chars.len(), "("),
            }
        }
        3 if !atom_ends.is_empty() => {
            let digit = rng.random_range(1..=9u8);
            insert(*atom_ends.choose(rng).unwrap(), &((b'0' + digit) as char).to_string())
        }
        4 if !atom_starts.is_empty() => {
            let at = *atom_starts.choose(rng).unwrap();
            if matches!(chars[at - 1], '=' | '#' | '-') {
                insert(at, "")
            } else {
                insert(at, if rng.random_bool(0.5) { "=" } else { "#" })
            }
        }
        _ if !atom_ends.is_empty() => {
            let sub = ["(C)", "(=O)", "(O)", "(N)", "(=C)", "(#N)"].choose(rng).unwrap();
            insert(*atom_ends.choose(rng).unwrap(), sub)
        }
        _ => insert(chars.len(), ")"),
    }
}

/// A corrupted string: `rounds` mutations applied to a random valid molecule.
pub fn corrupted_smiles<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize, rounds: usize) -> String {
    let mut s = random_smiles(rng, max_atoms);
    for _ in 0..rounds.max(1) {
        s = mutate(rng, &s);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixtures_are_valid() {
        for s in DRUG_LIKE {
            assert!(is_valid(s), "{s}");
        }
    }

    #[test]
    fn random_smiles_is_canonical_and_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = random_smiles(&mut rng, 12);
            assert!(is_valid(&s));
            assert_eq!(canonical_smiles(&s).unwrap(), s);
        }
    }

    #[test]
    fn family_generators_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = aromatic_smiles(&mut rng);
            assert!(a.contains('c'), "{a}");
            let c = chain_smiles(&mut rng);
            assert!(!c.contains('1') && !c.contains('c'), "{c}");
        }
    }

    #[test]
    fn corruption_usually_breaks_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let broken = (0..500)
            .filter(|_| !is_valid(&corrupted_smiles(&mut rng, 12, 2)))
            .count();
        assert!(broken > 200, "{broken}");
    }
}
