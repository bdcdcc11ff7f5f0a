#![allow(dead_code)]

use himol_model::{pretrain, Backbone, PretrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

/// Short alkanes and alcohols, canonical.
pub fn alkanes_and_alcohols(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..=7);
            let mut s = "C".repeat(len);
            if rng.random_bool(0.3) {
                let at = rng.random_range(1..len);
                s.insert_str(at, "(C)");
            }
            if rng.random_bool(0.5) {
                s.push('O');
            }
            himol_core::canonical_smiles(&s).unwrap()
        })
        .collect()
}

pub fn corpus() -> &'static [String] {
    static CORPUS: OnceLock<Vec<String>> = OnceLock::new();
    CORPUS.get_or_init(|| alkanes_and_alcohols(500, 11))
}

/// One backbone per test binary, pretrained on [`corpus`].
pub fn toy_backbone() -> &'static Backbone {
    static MODEL: OnceLock<Backbone> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = PretrainConfig {
            epochs: 15,
            learning_rate: 1e-3,
            seed: 3,
            ..PretrainConfig::default()
        };
        pretrain(corpus(), &cfg).expect("pretraining succeeds").0
    })
}
