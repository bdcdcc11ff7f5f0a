//! Token vocabulary: reserved specials, prompt words, the generic pseudo-token
//! and SMILES tokens.

use himol_core::lexer::lex;
use std::collections::HashMap;
use thiserror::Error;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const GEN_TOKEN: &str = "<GEN>";

pub const PROMPT_WORDS: [&str; 8] = ["The", "molecule", "is", "a", "A", "similar", "chemical", "of"];
pub const TRAIN_PROMPT: [&str; 4] = ["The", "molecule", "is", "a"];
pub const SAMPLE_PROMPT: [&str; 4] = ["A", "similar", "chemical", "of"];

/// SMILES tokens always present, whatever the corpus.
const BASE_ALPHABET: &[&str] = &[
    "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "c", "n", "o", "s", "p", "(", ")", "=", "#", "-", "1", "2",
    "3", "4", "5", "6", "7", "8", "9", ".", "[nH]", "[NH+]", "[N+]", "[O-]", "[NH3+]", "[nH+]", "[n+]",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("cannot tokenize {0:?}")]
    Untokenizable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<String>,
    index: HashMap<String, usize>,
    first_smiles: usize,
}

impl Vocab {
    /// Specials, prompt words, `<GEN>`, the base alphabet and every token
    /// that appears in `corpus`, in first-seen order.
    pub fn build<'s, I: IntoIterator<Item = &'s str>>(corpus: I) -> Result<Vocab, VocabError> {
        let mut entries: Vec<String> = ["<BOS>", "<EOS>", "<PAD>"].iter().map(|s| s.to_string()).collect();
        entries.extend(PROMPT_WORDS.iter().map(|s| s.to_string()));
        entries.push(GEN_TOKEN.to_string());
        let first_smiles = entries.len();
        entries.extend(BASE_ALPHABET.iter().map(|s| s.to_string()));
        let mut vocab = Vocab::from_entries(entries, first_smiles);
        for s in corpus {
            for t in split_smiles(s)? {
                if !vocab.index.contains_key(&t) {
                    vocab.index.insert(t.clone(), vocab.entries.len());
                    vocab.entries.push(t);
                }
            }
        }
        Ok(vocab)
    }

    pub(crate) fn from_entries(entries: Vec<String>, first_smiles: usize) -> Vocab {
        let index = entries.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab {
            entries,
            index,
            first_smiles,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Index of the first SMILES token; everything from here on is emittable.
    pub fn first_smiles(&self) -> usize {
        self.first_smiles
    }

    pub fn id(&self, token: &str) -> Result<usize, VocabError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| VocabError::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: usize) -> &str {
        &self.entries[id]
    }

    pub fn gen_id(&self) -> usize {
        self.index[GEN_TOKEN]
    }

    pub fn encode_smiles(&self, smiles: &str) -> Result<Vec<usize>, VocabError> {
        split_smiles(smiles)?.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode_smiles(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.entries[i].as_str()).collect()
    }

    pub fn encode_words(&self, words: &[&str]) -> Result<Vec<usize>, VocabError> {
        words.iter().map(|w| self.id(w)).collect()
    }
}

/// Split a SMILES string into lexer token texts.
pub fn split_smiles(smiles: &str) -> Result<Vec<String>, VocabError> {
    let tokens = lex(smiles).map_err(|_| VocabError::Untokenizable(smiles.to_string()))?;
    Ok(tokens.iter().map(|t| t.text(smiles).to_string()).collect())
}
