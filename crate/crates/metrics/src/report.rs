//! Full metric report over a generated set.

use crate::basic::valid_forms;
use crate::classifier::{active_ratio, Classifier};
use crate::frechet::frechet;
use crate::nspdk::{nspdk_mmd, NspdkConfig};
use himol_core::{parse, repair, MolGraph};
use himol_model::{ActivationStats, Backbone};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub nspdk: NspdkConfig,
    /// Also report metrics after rule-based repair of every generated string.
    pub repair: bool,
    pub repair_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            nspdk: NspdkConfig::default(),
            repair: true,
            repair_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// "raw" or "repaired".
    pub variant: String,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub active: Option<f64>,
    pub nspdk_mmd: Option<f64>,
    pub frechet: Option<f64>,
    pub generated: usize,
    pub valid: usize,
    pub unique: usize,
    pub novel: usize,
    /// Metrics that could not be computed, with the reason.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub config: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub raw: MetricsReport,
    pub repaired: Option<MetricsReport>,
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn graphs(forms: &[String]) -> Vec<MolGraph> {
    forms.iter().filter_map(|s| parse(s).ok()).collect()
}

fn activation_stats(backbone: &Backbone, forms: &[String], what: &str, warnings: &mut Vec<String>) -> Option<ActivationStats> {
    let mut skipped = 0;
    let vectors: Vec<Vec<f64>> = forms
        .iter()
        .filter_map(|s| match backbone.activations(s) {
            Ok(v) => Some(v),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    if skipped > 0 {
        warnings.push(format!("{skipped} {what} molecules use tokens outside the model vocabulary and were skipped"));
    }
    ActivationStats::from_vectors(&vectors).ok()
}

/// One report over `gen`. `backbone` enables the Fréchet term and
/// `classifier` the active ratio; each metric that fails is listed in
/// `failures` instead of aborting the report.
pub fn report(
    variant: &str,
    gen: &[String],
    train: &[String],
    test: &[String],
    backbone: Option<&Backbone>,
    classifier: Option<&dyn Classifier>,
    config: &EvalConfig,
) -> MetricsReport {
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    let forms = valid_forms(gen);
    let distinct: HashSet<&String> = forms.iter().collect();
    let known: HashSet<String> = valid_forms(train).into_iter().collect();
    let novel = forms.iter().filter(|f| !known.contains(*f)).count();
    if forms.is_empty() {
        warnings.push("no valid molecules; uniqueness and novelty are reported as 0".into());
    }
    let active = classifier.map(|c| {
        let (ratio, failed) = active_ratio(&forms, c);
        if failed > 0 {
            warnings.push(format!("classifier failed on {failed} molecules; excluded from the active ratio"));
        }
        ratio
    });
    let test_forms = valid_forms(test);
    let nspdk = if forms.is_empty() || test_forms.is_empty() {
        failures.push("nspdk: needs at least one valid generated and one valid test molecule".into());
        None
    } else {
        Some(nspdk_mmd(&graphs(&forms), &graphs(&test_forms), &config.nspdk))
    };
    let frechet_value = backbone.and_then(|b| {
        let gen_stats = activation_stats(b, &forms, "generated", &mut warnings);
        let test_stats = activation_stats(b, &test_forms, "test", &mut warnings);
        match (gen_stats, test_stats) {
            (Some(g), Some(t)) => match frechet(&t, &g) {
                Ok(v) => Some(v),
                Err(e) => {
                    failures.push(format!("frechet: {e}"));
                    None
                }
            },
            _ => {
                failures.push("frechet: no activations for the generated or test set".into());
                None
            }
        }
    });
    MetricsReport {
        variant: variant.to_string(),
        validity: percent(forms.len(), gen.len()),
        uniqueness: percent(distinct.len(), forms.len()),
        novelty: percent(novel, forms.len()),
        active,
        nspdk_mmd: nspdk,
        frechet: frechet_value,
        generated: gen.len(),
        valid: forms.len(),
        unique: distinct.len(),
        novel,
        failures,
        warnings,
        config: config.clone(),
    }
}

/// Raw report, plus a repaired one when `config.repair` is set. A string
/// whose repair fails is kept as is and so counts as invalid.
pub fn evaluate(
    gen: &[String],
    train: &[String],
    test: &[String],
    backbone: Option<&Backbone>,
    classifier: Option<&dyn Classifier>,
    config: &EvalConfig,
) -> Evaluation {
    let raw = report("raw", gen, train, test, backbone, classifier, config);
    let repaired = config.repair.then(|| {
        let fixed: Vec<String> = gen
            .iter()
            .map(|s| repair(s, config.repair_seed).map(|t| t.output).unwrap_or_else(|_| s.clone()))
            .collect();
        report("repaired", &fixed, train, test, backbone, classifier, config)
    });
    Evaluation { raw, repaired }
}
