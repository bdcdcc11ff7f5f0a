use himol_core::parser::is_valid;
use himol_core::repair::{repair, replay, RuleId};
use himol_core::toy::{corrupted_smiles, random_smiles};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn corrupted_strings_are_almost_always_repaired() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let total = 2000;
    let mut failed = Vec::new();
    for i in 0..total {
        let s = corrupted_smiles(&mut rng, 14, 1 + i % 3);
        match repair(&s, i as u64) {
            Ok(t) => {
                assert!(is_valid(&t.output), "{s} -> {}", t.output);
                assert_eq!(replay(&t.input, &t.applied_rules).as_deref(), Some(t.output.as_str()));
            }
            Err(_) => failed.push(s),
        }
    }
    assert!(failed.len() * 100 < total, "{} failures, e.g. {:?}", failed.len(), &failed[..failed.len().min(5)]);
}

proptest! {
    #[test]
    fn repair_is_total_and_deterministic(s in "[CNO()=#1-3]{0,24}", seed in any::<u64>()) {
        let a = repair(&s, seed);
        let b = repair(&s, seed);
        prop_assert_eq!(&a, &b);
        match a {
            Ok(t) => {
                prop_assert!(is_valid(&t.output));
                prop_assert_eq!(replay(&s, &t.applied_rules), Some(t.output.clone()));
            }
            Err(e) => prop_assert!(!is_valid(&e.trace.output)),
        }
    }

    #[test]
    fn valid_strings_are_identity(seed in any::<u64>()) {
        let s = random_smiles(&mut ChaCha8Rng::seed_from_u64(seed), 14);
        let t = repair(&s, seed).unwrap();
        prop_assert_eq!(t.output, s);
        prop_assert!(t.applied_rules.is_empty());
    }

    #[test]
    fn rules_never_go_backwards_within_a_pass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = corrupted_smiles(&mut rng, 12, 1);
        if let Ok(t) = repair(&s, seed) {
            // a single defect is usually fixed in one pass, so rules come out sorted
            let rules: Vec<RuleId> = t.applied_rules.iter().map(|r| r.rule).collect();
            prop_assert!(rules.len() <= 64 * 5 + 64);
        }
    }
}
