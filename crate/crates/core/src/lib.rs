//! Molecular graph primitives: SMILES parsing and canonical writing, valence
//! rules, fingerprints, scaffolds and rule-based repair.

pub mod canon;
pub mod element;
pub mod fingerprint;
pub mod graph;
pub mod hash;
pub mod io;
pub mod lexer;
pub mod parser;
pub mod repair;
pub mod scaffold;
pub mod toy;
pub mod valence;

pub use canon::{canonical_smiles, canonicalize, CanonError};
pub use element::{Element, ValenceTable};
pub use fingerprint::{ecfp4, tanimoto, Fingerprint, FingerprintError};
pub use graph::{Atom, Bond, BondOrder, GraphError, MolGraph};
pub use io::{read_molecule_list, write_molecule_list, ListError, MoleculeRecord};
pub use parser::{is_valid, parse, ParseError};
pub use repair::{repair, RepairFailed, RepairTrace, RuleApplication, RuleId};
pub use scaffold::scaffold;
