//! Rule-based repair of invalid SMILES strings.
//!
//! Five rules run in order, each to a fixpoint, and the whole sequence repeats
//! until the string is valid or the pass budget runs out:
//!
//! 1. drop a branch close that has no open branch before it, and drop empty
//!    branches;
//! 2. append a branch close for every branch left open;
//! 3. drop ring-opening digits that are never closed;
//! 4. for an atom over its valence, drop one of its branches at random
//!    (falling back to the bond/atom run that follows it);
//! 5. drop both digits of a ring closure that would form a ring of fewer than
//!    three atoms.
//!
//! Every edit is recorded as a byte-level splice so a trace can be replayed.

use crate::element::ValenceTable;
use crate::lexer::{lex, Token, TokenKind};
use crate::parser::{build_skeleton, is_valid_with, parse_with, ParseError};
use crate::valence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_MAX_PASSES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One splice: at byte `position`, `before` was replaced by `after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleApplication {
    pub rule: RuleId,
    pub position: usize,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTrace {
    pub input: String,
    pub output: String,
    pub applied_rules: Vec<RuleApplication>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("repair of {:?} did not reach a valid SMILES (stopped at {:?})", .trace.input, .trace.output)]
pub struct RepairFailed {
    pub trace: Box<RepairTrace>,
    pub last_error: Option<ParseError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairConfig {
    pub max_passes: usize,
    pub valence: ValenceTable,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            max_passes: DEFAULT_MAX_PASSES,
            valence: ValenceTable::default(),
        }
    }
}

/// Re-apply recorded splices to an input string.
///
/// Returns `None` if a splice does not match the text at its position.
pub fn replay(input: &str, rules: &[RuleApplication]) -> Option<String> {
    let mut s = input.to_string();
    for r in rules {
        let end = r.position.checked_add(r.before.len())?;
        if s.get(r.position..end)? != r.before {
            return None;
        }
        s.replace_range(r.position..end, &r.after);
    }
    Some(s)
}

struct Editor {
    text: String,
    trace: Vec<RuleApplication>,
}

impl Editor {
    fn splice(&mut self, rule: RuleId, start: usize, end: usize, after: &str) {
        let before = self.text[start..end].to_string();
        self.text.replace_range(start..end, after);
        self.trace.push(RuleApplication {
            rule,
            position: start,
            before,
            after: after.to_string(),
        });
    }

    fn tokens(&self) -> Option<Vec<Token>> {
        lex(&self.text).ok()
    }
}

/// Token range of a ring digit together with a bond symbol written directly in
/// front of it (`=1`).
fn ring_token_span(tokens: &[Token], i: usize) -> (usize, usize) {
    let with_bond = i >= 2
        && matches!(tokens[i - 1].kind, TokenKind::Bond(_))
        && (tokens[i - 2].kind.is_atom() || matches!(tokens[i - 2].kind, TokenKind::RingClosure(_)));
    let first = if with_bond { i - 1 } else { i };
    (tokens[first].start, tokens[i].end)
}

fn rule_unmatched_close(ed: &mut Editor) -> bool {
    let mut changed = false;
    while let Some(tokens) = ed.tokens() {
        let mut depth = 0usize;
        let mut hit = None;
        for t in &tokens {
            match t.kind {
                TokenKind::BranchOpen => depth += 1,
                TokenKind::BranchClose if depth == 0 => {
                    hit = Some((t.start, t.end));
                    break;
                }
                TokenKind::BranchClose => depth -= 1,
                _ => {}
            }
        }
        // an empty branch, or one holding only a bond, has no open to match
        // either and goes the same way
        let hit = hit.or_else(|| {
            (0..tokens.len()).find_map(|i| {
                if tokens[i].kind != TokenKind::BranchOpen {
                    return None;
                }
                let mut j = i + 1;
                if matches!(tokens.get(j).map(|t| &t.kind), Some(TokenKind::Bond(_))) {
                    j += 1;
                }
                (tokens.get(j)?.kind == TokenKind::BranchClose).then(|| (tokens[i].start, tokens[j].end))
            })
        });
        let Some((s, e)) = hit else { break };
        ed.splice(RuleId::R1, s, e, "");
        changed = true;
    }
    changed
}

fn rule_unclosed_branch(ed: &mut Editor) -> bool {
    let mut changed = false;
    while let Some(tokens) = ed.tokens() {
        let depth = tokens.iter().fold(0isize, |d, t| match t.kind {
            TokenKind::BranchOpen => d + 1,
            TokenKind::BranchClose => d - 1,
            _ => d,
        });
        if depth <= 0 {
            break;
        }
        let end = ed.text.len();
        ed.splice(RuleId::R2, end, end, ")");
        changed = true;
    }
    changed
}

fn rule_unclosed_ring(ed: &mut Editor) -> bool {
    let mut changed = false;
    while let Some(tokens) = ed.tokens() {
        let mut open: Vec<Option<usize>> = vec![None; 100];
        for (i, t) in tokens.iter().enumerate() {
            if let TokenKind::RingClosure(n) = t.kind {
                let slot = &mut open[n as usize];
                *slot = if slot.is_some() { None } else { Some(i) };
            }
        }
        let Some(first) = open.iter().flatten().min().copied() else {
            break;
        };
        let (s, e) = ring_token_span(&tokens, first);
        ed.splice(RuleId::R3, s, e, "");
        changed = true;
    }
    changed
}

/// Index one past the last token of the chain level that starts at `from`.
fn level_end(tokens: &[Token], from: usize) -> usize {
    let mut depth = 0usize;
    let mut k = from;
    while k < tokens.len() {
        match tokens[k].kind {
            TokenKind::BranchOpen => depth += 1,
            TokenKind::BranchClose if depth == 0 => break,
            TokenKind::BranchClose => depth -= 1,
            TokenKind::Dot if depth == 0 => break,
            _ => {}
        }
        k += 1;
    }
    k
}

fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (k, t) in tokens.iter().enumerate().skip(open) {
        match t.kind {
            TokenKind::BranchOpen => depth += 1,
            TokenKind::BranchClose => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

/// Candidate token ranges `[first, last)` whose removal unbonds part of the
/// structure around the atom at token `t`.
fn droppable_units(tokens: &[Token], t: usize) -> Vec<(usize, usize)> {
    let mut j = t + 1;
    loop {
        match tokens.get(j).map(|x| &x.kind) {
            Some(TokenKind::RingClosure(_)) => j += 1,
            Some(TokenKind::Bond(_))
                if matches!(tokens.get(j + 1).map(|x| &x.kind), Some(TokenKind::RingClosure(_))) =>
            {
                j += 2
            }
            _ => break,
        }
    }
    let mut branches = Vec::new();
    while matches!(tokens.get(j).map(|x| &x.kind), Some(TokenKind::BranchOpen)) {
        let Some(close) = matching_close(tokens, j) else {
            break;
        };
        branches.push((j, close + 1));
        j = close + 1;
    }
    if !branches.is_empty() {
        return branches;
    }
    let continues = matches!(
        tokens.get(j).map(|x| &x.kind),
        Some(TokenKind::Bond(_) | TokenKind::Atom { .. } | TokenKind::BracketAtom(_))
    );
    if continues {
        return vec![(j, level_end(tokens, j))];
    }
    // the atom ends its chain: drop the atom together with its incoming bond
    let mut start = if t > 0 && matches!(tokens[t - 1].kind, TokenKind::Bond(_)) {
        t - 1
    } else {
        t
    };
    let mut end = level_end(tokens, t);
    let prev = start.checked_sub(1).map(|p| &tokens[p].kind);
    let next = tokens.get(end).map(|x| &x.kind);
    match (prev, next) {
        (Some(TokenKind::BranchOpen), Some(TokenKind::BranchClose)) => {
            start -= 1;
            end += 1;
        }
        (Some(TokenKind::Dot), _) => start -= 1,
        (None, Some(TokenKind::Dot)) => end += 1,
        (None, None) => return Vec::new(),
        _ => {}
    }
    vec![(start, end)]
}

fn rule_valence(ed: &mut Editor, rng: &mut ChaCha8Rng, table: &ValenceTable) -> bool {
    let mut changed = false;
    while let Some(tokens) = ed.tokens() {
        let Ok(mut sk) = build_skeleton(&tokens, true) else {
            break;
        };
        valence::resolve_implicit_hydrogens(&mut sk.graph, table);
        let Some(atom) =
            (0..sk.graph.atom_count()).find(|&i| !valence::atom_within_valence(&sk.graph, i, table))
        else {
            break;
        };
        let units = droppable_units(&tokens, sk.atom_tokens[atom]);
        if units.is_empty() {
            break;
        }
        let pick = if units.len() == 1 {
            0
        } else {
            rng.random_range(0..units.len())
        };
        let (first, last) = units[pick];
        let (s, e) = (tokens[first].start, tokens[last - 1].end);
        ed.splice(RuleId::R4, s, e, "");
        changed = true;
    }
    changed
}

fn rule_small_ring(ed: &mut Editor) -> bool {
    let mut changed = false;
    while let Some(tokens) = ed.tokens() {
        let Ok(sk) = build_skeleton(&tokens, true) else {
            break;
        };
        let Some(pair) = sk.ring_pairs.iter().find(|p| p.too_small) else {
            break;
        };
        // later token first so the earlier position stays valid
        let (cs, ce) = ring_token_span(&tokens, pair.close_token);
        let (os, oe) = ring_token_span(&tokens, pair.open_token);
        ed.splice(RuleId::R5, cs, ce, "");
        ed.splice(RuleId::R5, os, oe, "");
        changed = true;
    }
    changed
}

/// Repair with default settings.
pub fn repair(smiles: &str, seed: u64) -> Result<RepairTrace, RepairFailed> {
    repair_with(smiles, seed, &RepairConfig::default())
}

pub fn repair_with(smiles: &str, seed: u64, config: &RepairConfig) -> Result<RepairTrace, RepairFailed> {
    let table = &config.valence;
    let mut ed = Editor {
        text: smiles.to_string(),
        trace: Vec::new(),
    };
    let finish = |ed: Editor| RepairTrace {
        input: smiles.to_string(),
        output: ed.text,
        applied_rules: ed.trace,
        rng_seed: seed,
    };
    if is_valid_with(smiles, table) {
        return Ok(finish(ed));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if ed.tokens().is_some() {
        for _ in 0..config.max_passes {
            let mut changed = rule_unmatched_close(&mut ed);
            changed |= rule_unclosed_branch(&mut ed);
            changed |= rule_unclosed_ring(&mut ed);
            changed |= rule_valence(&mut ed, &mut rng, table);
            changed |= rule_small_ring(&mut ed);
            if is_valid_with(&ed.text, table) {
                return Ok(finish(ed));
            }
            if !changed {
                break;
            }
        }
    }
    let last_error = parse_with(&ed.text, table).err();
    Err(RepairFailed {
        trace: Box::new(finish(ed)),
        last_error,
    })
}
