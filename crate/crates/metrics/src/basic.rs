//! Validity, uniqueness and novelty over SMILES lists.

use himol_core::canonical_smiles;
use std::collections::HashSet;

/// Canonical forms of the valid entries, in input order.
pub fn valid_forms(gen: &[String]) -> Vec<String> {
    gen.iter().filter_map(|s| canonical_smiles(s).ok()).collect()
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Percentage of strings that parse as valid molecules. Empty input gives 0.
pub fn validity(gen: &[String]) -> f64 {
    percent(valid_forms(gen).len(), gen.len())
}

/// Percentage of distinct canonical forms among the valid strings. No valid
/// strings gives 0.
pub fn uniqueness(gen: &[String]) -> f64 {
    let forms = valid_forms(gen);
    let distinct: HashSet<&String> = forms.iter().collect();
    percent(distinct.len(), forms.len())
}

/// Percentage of valid strings whose canonical form is absent from `train`.
/// No valid strings gives 0.
pub fn novelty(gen: &[String], train: &[String]) -> f64 {
    let known: HashSet<String> = valid_forms(train).into_iter().collect();
    let forms = valid_forms(gen);
    percent(forms.iter().filter(|f| !known.contains(*f)).count(), forms.len())
}
