//! Tokenizer for the SMILES alphabet.

use crate::element::Element;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `/`, kept only as a single bond.
    Up,
    /// `\`, kept only as a single bond.
    Down,
}

impl BondSymbol {
    pub fn as_char(self) -> char {
        match self {
            BondSymbol::Single => '-',
            BondSymbol::Double => '=',
            BondSymbol::Triple => '#',
            BondSymbol::Aromatic => ':',
            BondSymbol::Up => '/',
            BondSymbol::Down => '\\',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BracketAtom {
    pub isotope: Option<u16>,
    pub element: Element,
    pub aromatic: bool,
    pub hydrogens: u8,
    pub charge: i8,
    pub class: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Atom { element: Element, aromatic: bool },
    BracketAtom(BracketAtom),
    Bond(BondSymbol),
    RingClosure(u8),
    BranchOpen,
    BranchClose,
    Dot,
}

impl TokenKind {
    pub fn is_atom(&self) -> bool {
        matches!(self, TokenKind::Atom { .. } | TokenKind::BracketAtom(_))
    }
}

/// One lexed token with its byte span in the source string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unterminated bracket atom")]
    UnterminatedBracket,
    #[error("malformed bracket atom")]
    MalformedBracket,
    #[error("`%` must be followed by two digits")]
    MalformedRingNumber,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at byte {offset}: {kind}")]
pub struct LexError {
    pub offset: usize,
    pub kind: LexErrorKind,
}

fn organic(bytes: &[u8], i: usize) -> Option<(Element, bool, usize)> {
    let next = bytes.get(i + 1).copied();
    let hit = match bytes[i] {
        b'C' if next == Some(b'l') => (Element::CL, false, 2),
        b'B' if next == Some(b'r') => (Element::BR, false, 2),
        b'B' => (Element::B, false, 1),
        b'C' => (Element::C, false, 1),
        b'N' => (Element::N, false, 1),
        b'O' => (Element::O, false, 1),
        b'P' => (Element::P, false, 1),
        b'S' => (Element::S, false, 1),
        b'F' => (Element::F, false, 1),
        b'I' => (Element::I, false, 1),
        b'b' => (Element::B, true, 1),
        b'c' => (Element::C, true, 1),
        b'n' => (Element::N, true, 1),
        b'o' => (Element::O, true, 1),
        b'p' => (Element::P, true, 1),
        b's' => (Element::S, true, 1),
        _ => return None,
    };
    Some(hit)
}

/// Tokenize a SMILES string. Every byte of the input is covered by exactly
/// one token.
pub fn lex(smiles: &str) -> Result<Vec<Token>, LexError> {
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let kind = match bytes[i] {
            b'(' => {
                i += 1;
                TokenKind::BranchOpen
            }
            b')' => {
                i += 1;
                TokenKind::BranchClose
            }
            b'.' => {
                i += 1;
                TokenKind::Dot
            }
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                let sym = match bytes[i] {
                    b'-' => BondSymbol::Single,
                    b'=' => BondSymbol::Double,
                    b'#' => BondSymbol::Triple,
                    b':' => BondSymbol::Aromatic,
                    b'/' => BondSymbol::Up,
                    _ => BondSymbol::Down,
                };
                i += 1;
                TokenKind::Bond(sym)
            }
            d @ b'0'..=b'9' => {
                i += 1;
                TokenKind::RingClosure(d - b'0')
            }
            b'%' => {
                let digits = bytes.get(i + 1..i + 3);
                match digits {
                    Some(&[a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                        i += 3;
                        TokenKind::RingClosure((a - b'0') * 10 + (b - b'0'))
                    }
                    _ => {
                        return Err(LexError {
                            offset: i,
                            kind: LexErrorKind::MalformedRingNumber,
                        })
                    }
                }
            }
            b'[' => {
                let close = bytes[i..]
                    .iter()
                    .position(|&b| b == b']')
                    .map(|p| i + p)
                    .ok_or(LexError {
                        offset: i,
                        kind: LexErrorKind::UnterminatedBracket,
                    })?;
                let atom = parse_bracket(&smiles[i + 1..close]).ok_or(LexError {
                    offset: i,
                    kind: LexErrorKind::MalformedBracket,
                })?;
                i = close + 1;
                TokenKind::BracketAtom(atom)
            }
            _ => match organic(bytes, i) {
                Some((element, aromatic, len)) => {
                    i += len;
                    TokenKind::Atom { element, aromatic }
                }
                None => {
                    let ch = smiles[i..].chars().next().unwrap_or('\u{fffd}');
                    return Err(LexError {
                        offset: i,
                        kind: LexErrorKind::UnexpectedChar(ch),
                    });
                }
            },
        };
        tokens.push(Token {
            kind,
            start,
            end: i,
        });
    }
    Ok(tokens)
}

fn take_number(s: &[u8], pos: &mut usize) -> Option<u32> {
    let begin = *pos;
    while *pos < s.len() && s[*pos].is_ascii_digit() && *pos - begin < 5 {
        *pos += 1;
    }
    if *pos == begin {
        return None;
    }
    std::str::from_utf8(&s[begin..*pos]).ok()?.parse().ok()
}

fn parse_bracket(inner: &str) -> Option<BracketAtom> {
    let s = inner.as_bytes();
    let mut pos = 0;
    let isotope = match take_number(s, &mut pos) {
        Some(n) => Some(u16::try_from(n).ok()?),
        None => None,
    };

    let (element, aromatic) = {
        let first = *s.get(pos)?;
        if first.is_ascii_lowercase() {
            let two = inner.get(pos..pos + 2);
            let (sym, len) = match two {
                Some("se") | Some("as") | Some("te") => (two.unwrap(), 2),
                _ => (inner.get(pos..pos + 1)?, 1),
            };
            let mut upper = sym.to_string();
            upper[..1].make_ascii_uppercase();
            let element = Element::from_symbol(&upper)?;
            if !element.can_be_aromatic() {
                return None;
            }
            pos += len;
            (element, true)
        } else if first.is_ascii_uppercase() {
            let two = inner.get(pos..pos + 2).and_then(Element::from_symbol);
            match two {
                Some(e) if s[pos + 1].is_ascii_lowercase() => {
                    pos += 2;
                    (e, false)
                }
                _ => {
                    let e = Element::from_symbol(inner.get(pos..pos + 1)?)?;
                    pos += 1;
                    (e, false)
                }
            }
        } else {
            return None;
        }
    };

    // chirality is lexed and dropped
    while pos < s.len() && s[pos] == b'@' {
        pos += 1;
    }
    for class in ["TH", "AL", "SP", "TB", "OH"] {
        if inner[pos..].starts_with(class) && pos > 0 && s[pos - 1] == b'@' {
            pos += 2;
            take_number(s, &mut pos);
        }
    }

    let mut hydrogens = 0u8;
    if s.get(pos) == Some(&b'H') {
        pos += 1;
        hydrogens = match take_number(s, &mut pos) {
            Some(n) => u8::try_from(n).ok()?,
            None => 1,
        };
    }

    let mut charge: i32 = 0;
    if let Some(&sign @ (b'+' | b'-')) = s.get(pos) {
        let unit = if sign == b'+' { 1 } else { -1 };
        pos += 1;
        if let Some(n) = take_number(s, &mut pos) {
            charge = unit * n as i32;
        } else {
            charge = unit;
            while s.get(pos) == Some(&sign) {
                charge += unit;
                pos += 1;
            }
        }
    }
    let charge = i8::try_from(charge).ok().filter(|c| c.abs() <= 15)?;

    let mut class = None;
    if s.get(pos) == Some(&b':') {
        pos += 1;
        class = Some(u16::try_from(take_number(s, &mut pos)?).ok()?);
    }

    (pos == s.len()).then_some(BracketAtom {
        isotope,
        element,
        aromatic,
        hydrogens,
        charge,
        class,
    })
}
