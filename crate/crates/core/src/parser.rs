//! SMILES to [`MolGraph`].

use crate::element::ValenceTable;
use crate::graph::{Atom, BondOrder, GraphError, MolGraph};
use crate::lexer::{lex, BondSymbol, LexError, Token, TokenKind};
use crate::valence;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("empty SMILES")]
    Empty,
    #[error("branch close at byte {offset} has no matching branch open")]
    UnmatchedBranchClose { offset: usize },
    #[error("branch opened at byte {offset} is never closed")]
    UnclosedBranch { offset: usize },
    #[error("ring {number} opened at byte {offset} is never closed")]
    UnclosedRing { offset: usize, number: u8 },
    #[error("ring closure at byte {offset} forms a ring of fewer than 3 atoms")]
    RingTooSmall { offset: usize },
    #[error("ring closure at byte {offset} duplicates an existing bond")]
    DuplicateBond { offset: usize },
    #[error("ring closure at byte {offset} has conflicting bond symbols")]
    RingBondMismatch { offset: usize },
    #[error("atom {atom} exceeds its allowed valence")]
    ValenceViolation { atom: usize },
    #[error("aromatic atom {atom} is not in an aromatic ring")]
    AromaticOutsideRing { atom: usize },
    #[error("unexpected token at byte {offset}")]
    UnexpectedToken { offset: usize },
    #[error("bond at byte {offset} is not followed by an atom")]
    DanglingBond { offset: usize },
    #[error("empty branch at byte {offset}")]
    EmptyBranch { offset: usize },
}

impl ParseError {
    /// Short stable name of the defect class.
    pub fn category(&self) -> &'static str {
        match self {
            ParseError::Lex(_) => "lex",
            ParseError::Empty => "empty",
            ParseError::UnmatchedBranchClose { .. } => "unmatched_branch_close",
            ParseError::UnclosedBranch { .. } => "unclosed_branch",
            ParseError::UnclosedRing { .. } => "unclosed_ring",
            ParseError::RingTooSmall { .. } => "ring_too_small",
            ParseError::DuplicateBond { .. } => "duplicate_bond",
            ParseError::RingBondMismatch { .. } => "ring_bond_mismatch",
            ParseError::ValenceViolation { .. } => "valence_violation",
            ParseError::AromaticOutsideRing { .. } => "aromatic_outside_ring",
            ParseError::UnexpectedToken { .. } => "unexpected_token",
            ParseError::DanglingBond { .. } => "dangling_bond",
            ParseError::EmptyBranch { .. } => "empty_branch",
        }
    }
}

/// A ring-closure digit pair resolved to the two atoms it joins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingPair {
    pub open_token: usize,
    pub close_token: usize,
    pub atoms: (usize, usize),
    /// The pair would close a ring of one or two atoms.
    pub too_small: bool,
}

/// The graph together with the token bookkeeping the repair rules need.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub graph: MolGraph,
    /// Token index of every atom.
    pub atom_tokens: Vec<usize>,
    pub ring_pairs: Vec<RingPair>,
}

fn bond_order(symbol: Option<BondSymbol>, a_arom: bool, b_arom: bool) -> BondOrder {
    match symbol {
        None if a_arom && b_arom => BondOrder::Aromatic,
        None => BondOrder::Single,
        Some(BondSymbol::Single | BondSymbol::Up | BondSymbol::Down) => BondOrder::Single,
        Some(BondSymbol::Double) => BondOrder::Double,
        Some(BondSymbol::Triple) => BondOrder::Triple,
        Some(BondSymbol::Aromatic) => BondOrder::Aromatic,
    }
}

fn same_bond(a: BondSymbol, b: BondSymbol) -> bool {
    let norm = |s| match s {
        BondSymbol::Up | BondSymbol::Down => BondSymbol::Single,
        other => other,
    };
    norm(a) == norm(b)
}

/// Walk the token list and build the heavy-atom graph without resolving
/// hydrogens or checking valence.
///
/// With `lenient_rings`, ring pairs closing rings of fewer than three atoms
/// are recorded but not added as bonds instead of failing.
pub fn build_skeleton(tokens: &[Token], lenient_rings: bool) -> Result<Skeleton, ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut graph = MolGraph::new();
    let mut atom_tokens = Vec::new();
    let mut ring_pairs = Vec::new();
    let mut ring_bond_ids = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondSymbol, usize)> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut open_rings: BTreeMap<u8, (usize, Option<BondSymbol>, usize)> = BTreeMap::new();
    let mut last_kind: Option<&TokenKind> = None;

    for (ti, tok) in tokens.iter().enumerate() {
        let offset = tok.start;
        match &tok.kind {
            TokenKind::Atom { .. } | TokenKind::BracketAtom(_) => {
                let atom = match &tok.kind {
                    TokenKind::Atom { element, aromatic } => Atom {
                        element: *element,
                        charge: 0,
                        hydrogens: 0,
                        aromatic: *aromatic,
                        isotope: None,
                        bracket: false,
                    },
                    TokenKind::BracketAtom(b) => Atom {
                        element: b.element,
                        charge: b.charge,
                        hydrogens: b.hydrogens,
                        aromatic: b.aromatic,
                        isotope: b.isotope,
                        bracket: true,
                    },
                    _ => unreachable!(),
                };
                let arom = atom.aromatic;
                let idx = graph.add_atom(atom);
                atom_tokens.push(ti);
                match prev {
                    Some(p) => {
                        let order = bond_order(pending.map(|x| x.0), graph.atom(p).aromatic, arom);
                        graph
                            .add_bond(p, idx, order)
                            .expect("chain bond to a fresh atom is always simple");
                    }
                    None => {
                        if let Some((_, at)) = pending {
                            return Err(ParseError::UnexpectedToken { offset: at });
                        }
                    }
                }
                pending = None;
                prev = Some(idx);
            }
            TokenKind::Bond(sym) => {
                if prev.is_none() || pending.is_some() {
                    return Err(ParseError::UnexpectedToken { offset });
                }
                pending = Some((*sym, offset));
            }
            TokenKind::RingClosure(num) => {
                let Some(cur) = prev else {
                    return Err(ParseError::UnexpectedToken { offset });
                };
                let here = pending.take().map(|x| x.0);
                match open_rings.remove(num) {
                    None => {
                        open_rings.insert(*num, (cur, here, ti));
                    }
                    Some((partner, there, open_ti)) => {
                        let symbol = match (here, there) {
                            (Some(a), Some(b)) if !same_bond(a, b) => {
                                return Err(ParseError::RingBondMismatch { offset })
                            }
                            (Some(a), _) => Some(a),
                            (None, b) => b,
                        };
                        let existing = graph.bond_between(partner, cur).is_some();
                        let too_small = partner == cur || existing;
                        ring_pairs.push(RingPair {
                            open_token: open_ti,
                            close_token: ti,
                            atoms: (partner, cur),
                            too_small,
                        });
                        if too_small {
                            if lenient_rings {
                                continue;
                            }
                            if existing {
                                let dup_of_ring = ring_bond_ids.iter().any(|&id: &usize| {
                                    let b = graph.bonds()[id];
                                    (b.a == partner && b.b == cur) || (b.a == cur && b.b == partner)
                                });
                                if dup_of_ring {
                                    return Err(ParseError::DuplicateBond { offset });
                                }
                            }
                            return Err(ParseError::RingTooSmall { offset });
                        }
                        let order = bond_order(
                            symbol,
                            graph.atom(partner).aromatic,
                            graph.atom(cur).aromatic,
                        );
                        match graph.add_bond(partner, cur, order) {
                            Ok(id) => ring_bond_ids.push(id),
                            Err(GraphError::DuplicateBond(..)) => {
                                return Err(ParseError::DuplicateBond { offset })
                            }
                            Err(_) => return Err(ParseError::RingTooSmall { offset }),
                        }
                    }
                }
            }
            TokenKind::BranchOpen => {
                let Some(cur) = prev else {
                    return Err(ParseError::UnexpectedToken { offset });
                };
                if let Some((_, at)) = pending {
                    return Err(ParseError::DanglingBond { offset: at });
                }
                branches.push((cur, offset));
            }
            TokenKind::BranchClose => {
                if let Some((_, at)) = pending {
                    return Err(ParseError::DanglingBond { offset: at });
                }
                let Some((anchor, _)) = branches.pop() else {
                    return Err(ParseError::UnmatchedBranchClose { offset });
                };
                if matches!(last_kind, Some(TokenKind::BranchOpen)) {
                    return Err(ParseError::EmptyBranch { offset });
                }
                prev = Some(anchor);
            }
            TokenKind::Dot => {
                if let Some((_, at)) = pending {
                    return Err(ParseError::DanglingBond { offset: at });
                }
                if prev.is_none() || !branches.is_empty() {
                    return Err(ParseError::UnexpectedToken { offset });
                }
                prev = None;
            }
        }
        last_kind = Some(&tok.kind);
    }

    if let Some((_, at)) = pending {
        return Err(ParseError::DanglingBond { offset: at });
    }
    if let Some(&(_, offset)) = branches.first() {
        return Err(ParseError::UnclosedBranch { offset });
    }
    if let Some((&number, &(_, _, ti))) = open_rings.iter().min_by_key(|(_, v)| v.2) {
        return Err(ParseError::UnclosedRing {
            offset: tokens[ti].start,
            number,
        });
    }
    if prev.is_none() {
        // trailing dot
        return Err(ParseError::UnexpectedToken {
            offset: tokens.last().map(|t| t.start).unwrap_or(0),
        });
    }
    Ok(Skeleton {
        graph,
        atom_tokens,
        ring_pairs,
    })
}

/// Parse with the default valence table.
pub fn parse(smiles: &str) -> Result<MolGraph, ParseError> {
    parse_with(smiles, &ValenceTable::default())
}

/// Parse, resolve implicit hydrogens and validate valence.
pub fn parse_with(smiles: &str, table: &ValenceTable) -> Result<MolGraph, ParseError> {
    let tokens = lex(smiles)?;
    let mut graph = build_skeleton(&tokens, false)?.graph;
    valence::resolve_implicit_hydrogens(&mut graph, table);
    graph.check_valence(table).map_err(|e| match e {
        GraphError::AromaticOutsideRing(atom) => ParseError::AromaticOutsideRing { atom },
        GraphError::ValenceViolation(atom) => ParseError::ValenceViolation { atom },
        _ => unreachable!("check_valence only reports valence and aromaticity"),
    })?;
    Ok(graph)
}

/// True iff the string parses and the graph is valence-consistent. Never panics.
pub fn is_valid(smiles: &str) -> bool {
    parse(smiles).is_ok()
}

pub fn is_valid_with(smiles: &str, table: &ValenceTable) -> bool {
    parse_with(smiles, table).is_ok()
}
