//! One function per subcommand. Each reads its inputs, writes its outputs and
//! an effective-settings echo next to the main output.

use crate::settings::{key, Default::*, Key, Kind::*, Settings, SEED};
use crate::split::{scaffold_split, SplitError};
use crate::CliError;
use himol_core::hash::hash_words;
use himol_core::io::format_molecule_list;
use himol_core::{read_molecule_list, repair, ListError, MoleculeRecord, RuleApplication};
use himol_metrics::lowshot::{run_augmentation, Augmenter, CopyAugmenter, HiMolAugmenter, LowShotTask, OracleAugmenter};
use himol_metrics::{evaluate, Classifier, EvalConfig, Knn, NspdkConfig};
use himol_model::inversion::train;
use himol_model::optim::AdamWConfig;
use himol_model::sampler::sample_baseline;
use himol_model::{
    pretrain, sample, Backbone, CheckpointError, EmbeddingCheckpoint, InversionConfig, InversionError, Levels,
    ModelConfig, ModelError, PretrainConfig, PretrainError, SamplerConfig, SamplerError,
};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

const PRETRAIN: &[Key] = &[
    key("corpus", Path, Required, "Training molecules, one SMILES per line"),
    key("out", Path, Required, "Backbone checkpoint to write"),
    key("epochs", Int, Value("20"), "Passes over the corpus"),
    key("batch-size", Int, Value("16"), "Sequences per step"),
    key("lr", Float, Value("0.0003"), "AdamW learning rate"),
    key("linear-decay", Bool, Value("false"), "Decay the learning rate linearly to zero"),
    key("clip", Float, Value("1.0"), "Gradient norm limit"),
    key("weight-decay", Float, Value("0.0"), "AdamW weight decay"),
    key("prompt-variants", Bool, Value("true"), "Also train on the sampling phrasing and three-slot prompts"),
    key("embed", Int, Value("64"), "Embedding width"),
    key("layers", Int, Value("2"), "Transformer layers"),
    key("heads", Int, Value("4"), "Attention heads"),
    key("mlp", Int, Value("256"), "Feed-forward width"),
    key("context", Int, Value("128"), "Maximum sequence length"),
    SEED,
];

const INVERT: &[Key] = &[
    key("model", Path, Required, "Backbone checkpoint"),
    key("data", Path, Required, "Molecules to invert, one SMILES per line"),
    key("out", Path, Required, "Embedding checkpoint to write"),
    key("k", Int, Value("10"), "Number of intermediate tokens (clusters)"),
    key("epochs", Int, Value("1000"), "Training epochs"),
    key("batch-size", Int, Value("4"), "Molecules per step"),
    key("lr", Float, Value("0.3"), "Initial learning rate, decayed linearly"),
    key("clip", Float, Value("1.0"), "Gradient norm limit"),
    key("weight-decay", Float, Value("0.0"), "AdamW weight decay"),
    key("assignment-epochs", Int, Value("5"), "Reassign clusters at the start of this many epochs"),
    key("levels", Text, Value("sid"), "Token levels to learn: any of s (shared), i (intermediate), d (detail)"),
    key("init-noise", Float, Value("0.01"), "Initial noise around <GEN>, as a fraction of the embedding RMS"),
    key("history", Path, Unset, "Write per-epoch losses and the assignment trace as JSON"),
    SEED,
];

const SAMPLE: &[Key] = &[
    key("model", Path, Required, "Backbone checkpoint"),
    key("emb", Path, Required, "Embedding checkpoint"),
    key("out", Path, Required, "Generated molecules, one per line"),
    key("n", Int, Value("500"), "Number of molecules"),
    key("l", Float, Value("0.0"), "Interpolation weights are drawn from Uniform(l, 1 - l)"),
    key("temperature", Float, Value("1.0"), "Softmax temperature"),
    key("greedy", Bool, Value("false"), "Take the most likely token at every step"),
    key("max-len", Int, Value("100"), "Maximum tokens per molecule"),
    key("strict", Bool, Value("false"), "Keep only valid, unique molecules that are not in the training set"),
    key("repair", Bool, Value("false"), "Run rule-based repair on every output"),
    key("draw-budget", Int, Value("100"), "Strict mode gives up after this many draws per requested molecule"),
    key("interpolate", Bool, Value("true"), "Interpolate between molecules; false decodes from the shared token alone"),
    key("interpolate-intermediate", Bool, Value("true"), "Mix the intermediate tokens"),
    key("interpolate-detail", Bool, Value("true"), "Mix the detail tokens"),
    key("provenance", Path, Unset, "Write one JSON record per molecule"),
    SEED,
];

const REPAIR: &[Key] = &[
    key("in", Path, Required, "Molecule list to repair"),
    key("out", Path, Required, "Repaired list; strings that cannot be repaired are copied unchanged"),
    key("trace", Path, Unset, "Write one JSON line per molecule with the applied rules"),
    SEED,
];

const EVAL: &[Key] = &[
    key("gen", Path, Required, "Generated molecules"),
    key("train", Path, Required, "Training molecules, for novelty"),
    key("test", Path, Required, "Reference molecules, for NSPDK and the Frechet distance"),
    key("model", Path, Unset, "Backbone checkpoint; enables the Frechet distance"),
    key("labels", Path, Unset, "Labeled molecules (SMILES<TAB>0/1); enables the active ratio"),
    key("out", Path, Required, "JSON report"),
    key("repair", Bool, Value("false"), "Also report metrics after repair, in <out>.repaired.json"),
    key("knn-k", Int, Value("5"), "Neighbours for the active-ratio classifier"),
    key("nspdk-radius", Int, Value("2"), "NSPDK maximum radius"),
    key("nspdk-distance", Int, Value("4"), "NSPDK maximum distance"),
    key("nspdk-width", Int, Value("1048576"), "NSPDK hashing width"),
    SEED,
];

const LOWSHOT: &[Key] = &[
    key("pool", Path, Required, "Labeled pool (SMILES<TAB>0/1) to draw shots from"),
    key("test", Path, Required, "Labeled test set"),
    key("out", Path, Required, "JSON report"),
    key("shots", Int, Value("16"), "Molecules per class"),
    key("seeds", Int, Value("20"), "Number of repetitions"),
    key("multiplier", Int, Value("3"), "Generated molecules per shot"),
    key("knn-k", Int, Value("5"), "Neighbours for the scorer"),
    key("augmenter", Text, Value("himol"), "himol, oracle (real held-out pool molecules) or copy"),
    key("model", Path, Unset, "Backbone checkpoint, required for the himol augmenter"),
    key("k", Int, Value("10"), "Intermediate tokens per class (capped below the shot count)"),
    key("epochs", Int, Value("1000"), "Inversion epochs"),
    key("lr", Float, Value("0.3"), "Inversion learning rate"),
    key("batch-size", Int, Value("4"), "Inversion batch size"),
    key("assignment-epochs", Int, Value("5"), "Cluster reassignment epochs"),
    key("l", Float, Value("0.0"), "Interpolation weight margin"),
    key("temperature", Float, Value("1.0"), "Sampling temperature"),
    key("repair", Bool, Value("true"), "Repair generated strings"),
    key("draw-budget", Int, Value("100"), "Draws per requested molecule before a seed is skipped"),
    SEED,
];

const SCAFFOLD_SPLIT: &[Key] = &[
    key("in", Path, Required, "Molecule list to split"),
    key("out-dir", Path, Required, "Directory for train.smi, valid.smi and test.smi"),
    key("train-ratio", Float, Value("0.8"), "Fraction of molecules for training"),
    key("valid-ratio", Float, Value("0.1"), "Fraction of molecules for validation"),
    SEED,
];

pub const SUBCOMMANDS: &[(&str, &str, &[Key])] = &[
    ("pretrain", "Train a backbone on a SMILES corpus", PRETRAIN),
    ("invert", "Learn hierarchical prompt tokens for a molecule set", INVERT),
    ("sample", "Generate molecules by interpolating learned tokens", SAMPLE),
    ("repair", "Apply rule-based SMILES repair", REPAIR),
    ("eval", "Compute generation metrics", EVAL),
    ("lowshot", "Measure the ROC-AUC change from augmenting a few-shot training set", LOWSHOT),
    ("scaffold-split", "Split a molecule list by Bemis-Murcko scaffold", SCAFFOLD_SPLIT),
];

pub fn run(name: &str, s: &Settings) -> Result<(), CliError> {
    match name {
        "pretrain" => run_pretrain(s),
        "invert" => run_invert(s),
        "sample" => run_sample(s),
        "repair" => run_repair(s),
        "eval" => run_eval(s),
        "lowshot" => run_lowshot(s),
        "scaffold-split" => run_split(s),
        _ => Err(CliError::Internal(format!("unknown subcommand {name}"))),
    }
}

fn user<E: std::fmt::Display>(e: E) -> CliError {
    CliError::User(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Vocab(_) | ModelError::SequenceTooLong { .. } | ModelError::WidthMismatch { .. } => user(e),
        _ => internal(e),
    }
}

fn read_list(path: &Path) -> Result<Vec<MoleculeRecord>, CliError> {
    read_molecule_list(path).map_err(|e| match e {
        ListError::Io { .. } | ListError::BadLabel { .. } | ListError::TooManyColumns { .. } => {
            CliError::User(format!("{}: {e}", path.display()))
        }
    })
}

fn read_smiles(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_list(path)?.into_iter().map(|r| r.smiles).collect())
}

fn read_labeled(path: &Path) -> Result<Vec<(String, bool)>, CliError> {
    read_list(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r.label {
            Some(l) => Ok((r.smiles, l == 1)),
            None => Err(CliError::User(format!("{}: entry {} has no label", path.display(), i + 1))),
        })
        .collect()
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(internal)?;
    write(path, &(text + "\n"))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn echo(out: &Path, s: &Settings) -> Result<(), CliError> {
    write(&sibling(out, ".config"), &s.echo())
}

fn load_backbone(path: &Path) -> Result<Backbone, CliError> {
    let mut b = Backbone::load(path).map_err(checkpoint_error)?;
    b.freeze();
    Ok(b)
}

fn checkpoint_error(e: CheckpointError) -> CliError {
    user(e)
}

fn run_pretrain(s: &Settings) -> Result<(), CliError> {
    let corpus = read_smiles(&s.path("corpus"))?;
    let model = ModelConfig {
        embed: s.usize("embed"),
        layers: s.usize("layers"),
        heads: s.usize("heads"),
        mlp: s.usize("mlp"),
        context: s.usize("context"),
    };
    if model.heads == 0 || !model.embed.is_multiple_of(model.heads) {
        return Err(CliError::User("--embed must be a multiple of --heads".into()));
    }
    let config = PretrainConfig {
        model,
        epochs: s.usize("epochs"),
        batch_size: s.usize("batch-size").max(1),
        learning_rate: s.f64("lr"),
        linear_decay: s.bool("linear-decay"),
        optimizer: AdamWConfig {
            weight_decay: s.f64("weight-decay"),
            clip_norm: Some(s.f64("clip")),
            ..AdamWConfig::default()
        },
        prompt_variants: s.bool("prompt-variants"),
        seed: s.u64("seed"),
    };
    let (backbone, report) = pretrain(&corpus, &config).map_err(|e| match e {
        PretrainError::EmptyCorpus | PretrainError::InvalidSmiles { .. } => user(e),
        PretrainError::Model(m) => model_error(m),
        PretrainError::DivergedLoss { .. } => internal(e),
    })?;
    for (epoch, loss) in report.history.iter().enumerate() {
        eprintln!("epoch {:>4}  loss {loss:.4}", epoch + 1);
    }
    let out = s.path("out");
    backbone.save(&out).map_err(checkpoint_error)?;
    echo(&out, s)
}

fn parse_levels(text: &str) -> Result<Levels, CliError> {
    if text.is_empty() || !text.chars().all(|c| matches!(c, 's' | 'i' | 'd')) {
        return Err(CliError::User(format!("--levels: expected letters from s, i, d, got {text:?}")));
    }
    Ok(Levels {
        shared: text.contains('s'),
        intermediate: text.contains('i'),
        detail: text.contains('d'),
    })
}

fn inversion_error(e: InversionError) -> CliError {
    match e {
        InversionError::Model { source, index } => match model_error(source) {
            CliError::User(m) => CliError::User(format!("molecule {}: {m}", index + 1)),
            other => other,
        },
        InversionError::DivergedLoss { .. } => internal(e),
        _ => user(e),
    }
}

#[derive(Serialize)]
struct InvertHistory<'a> {
    format: &'static str,
    loss: &'a [f64],
    assignments: &'a [Vec<usize>],
}

fn run_invert(s: &Settings) -> Result<(), CliError> {
    let backbone = load_backbone(&s.path("model"))?;
    let data = read_smiles(&s.path("data"))?;
    let config = InversionConfig {
        epochs: s.usize("epochs"),
        batch_size: s.usize("batch-size"),
        learning_rate: s.f64("lr"),
        clip_norm: s.f64("clip"),
        weight_decay: s.f64("weight-decay"),
        assignment_epochs: s.usize("assignment-epochs"),
        k: s.usize("k"),
        levels: parse_levels(s.text("levels"))?,
        init_noise: s.f64("init-noise"),
        seed: s.u64("seed"),
    };
    let (state, report) = train(&data, &backbone, &config).map_err(inversion_error)?;
    if let Some(last) = report.history.last() {
        eprintln!("final loss {last:.4} after {} epochs", report.history.len());
    }
    let out = s.path("out");
    EmbeddingCheckpoint {
        state,
        config,
        dataset: data,
    }
    .save(&out)
    .map_err(checkpoint_error)?;
    if let Some(path) = s.opt_path("history") {
        write_json(
            &path,
            &InvertHistory {
                format: "himol-invert-history/1",
                loss: &report.history,
                assignments: &report.assignment_trace,
            },
        )?;
    }
    echo(&out, s)
}

fn sampler_error(e: SamplerError) -> CliError {
    match e {
        SamplerError::BadConfig(_) | SamplerError::IndexOutOfRange { .. } => user(e),
        SamplerError::Model(m) => model_error(m),
        SamplerError::StrictExhausted { .. } => internal(e),
    }
}

fn run_sample(s: &Settings) -> Result<(), CliError> {
    let backbone = load_backbone(&s.path("model"))?;
    let ckpt = EmbeddingCheckpoint::load(&s.path("emb")).map_err(checkpoint_error)?;
    if ckpt.state.dim() != backbone.embed_dim() {
        return Err(CliError::User(format!(
            "embedding width {} does not match the backbone width {}",
            ckpt.state.dim(),
            backbone.embed_dim()
        )));
    }
    let config = SamplerConfig {
        l: s.f64("l"),
        temperature: s.f64("temperature"),
        greedy: s.bool("greedy"),
        max_samples: s.usize("n"),
        max_len: s.usize("max-len"),
        seed: s.u64("seed"),
        strict: s.bool("strict"),
        repair: s.bool("repair"),
        draw_budget_factor: s.usize("draw-budget"),
        interpolate_intermediate: s.bool("interpolate-intermediate"),
        interpolate_detail: s.bool("interpolate-detail"),
    };
    let batch = if s.bool("interpolate") {
        sample(&ckpt.state, &backbone, &ckpt.dataset, &config)
    } else {
        sample_baseline(&backbone, std::slice::from_ref(&ckpt.state.s), &ckpt.dataset, &config)
    }
    .map_err(sampler_error)?;
    eprintln!(
        "{} molecules from {} draws ({} valid)",
        batch.records.len(),
        batch.draws,
        batch.records.iter().filter(|r| r.valid).count()
    );
    let out = s.path("out");
    let text: String = batch.records.iter().map(|r| format!("{}\n", r.final_smiles())).collect();
    write(&out, &text)?;
    if let Some(path) = s.opt_path("provenance") {
        let mut lines = String::new();
        for r in &batch.records {
            lines.push_str(&serde_json::to_string(r).map_err(internal)?);
            lines.push('\n');
        }
        write(&path, &lines)?;
    }
    echo(&out, s)
}

#[derive(Serialize)]
struct RepairLine<'a> {
    input: &'a str,
    output: &'a str,
    rules: &'a [RuleApplication],
    failed: bool,
}

fn run_repair(s: &Settings) -> Result<(), CliError> {
    let records = read_list(&s.path("in"))?;
    let seed = s.u64("seed");
    let mut fixed = Vec::with_capacity(records.len());
    let mut trace = String::new();
    let mut failures = 0;
    for (i, r) in records.iter().enumerate() {
        let (t, failed) = match repair(&r.smiles, hash_words([seed, i as u64])) {
            Ok(t) => (t, false),
            Err(e) => (*e.trace, true),
        };
        failures += failed as usize;
        trace.push_str(
            &serde_json::to_string(&RepairLine {
                input: &t.input,
                output: &t.output,
                rules: &t.applied_rules,
                failed,
            })
            .map_err(internal)?,
        );
        trace.push('\n');
        fixed.push(MoleculeRecord {
            smiles: if failed { r.smiles.clone() } else { t.output },
            label: r.label,
        });
    }
    if failures > 0 {
        eprintln!("{failures} of {} strings could not be repaired", records.len());
    }
    let out = s.path("out");
    write(&out, &format_molecule_list(&fixed))?;
    if let Some(path) = s.opt_path("trace") {
        write(&path, &trace)?;
    }
    echo(&out, s)
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    format: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

fn run_eval(s: &Settings) -> Result<(), CliError> {
    let gen = read_smiles(&s.path("gen"))?;
    let train = read_smiles(&s.path("train"))?;
    let test = read_smiles(&s.path("test"))?;
    let backbone = s.opt_path("model").map(|p| load_backbone(&p)).transpose()?;
    let knn = match s.opt_path("labels") {
        Some(p) => {
            let labeled = read_labeled(&p)?;
            Some(Knn::fit(s.usize("knn-k"), labeled.iter().map(|(m, l)| (m.as_str(), *l))))
        }
        None => None,
    };
    let config = EvalConfig {
        nspdk: NspdkConfig {
            radius: s.usize("nspdk-radius"),
            distance: s.usize("nspdk-distance"),
            width: s.u64("nspdk-width").max(1),
        },
        repair: s.bool("repair"),
        repair_seed: s.u64("seed"),
    };
    let classifier = knn.as_ref().map(|k| k as &dyn Classifier);
    let eval = evaluate(&gen, &train, &test, backbone.as_ref(), classifier, &config);
    for w in eval.raw.warnings.iter().chain(&eval.raw.failures) {
        eprintln!("warning: {w}");
    }
    let out = s.path("out");
    write_json(
        &out,
        &Versioned {
            format: "himol-eval/1",
            body: &eval.raw,
        },
    )?;
    if let Some(r) = &eval.repaired {
        write_json(
            &out.with_extension("repaired.json"),
            &Versioned {
                format: "himol-eval/1",
                body: r,
            },
        )?;
    }
    echo(&out, s)
}

fn run_lowshot(s: &Settings) -> Result<(), CliError> {
    let pool = read_labeled(&s.path("pool"))?;
    let test = read_labeled(&s.path("test"))?;
    let base = s.u64("seed");
    let task = LowShotTask {
        shots: s.usize("shots"),
        seeds: (0..s.u64("seeds")).map(|i| base.wrapping_add(i)).collect(),
        multiplier: s.usize("multiplier"),
        k: s.usize("knn-k"),
        pool,
        test,
    };
    let backbone;
    let himol;
    let oracle;
    let augmenter: &dyn Augmenter = match s.text("augmenter") {
        "copy" => &CopyAugmenter,
        "oracle" => {
            oracle = OracleAugmenter { pool: task.pool.clone() };
            &oracle
        }
        "himol" => {
            let path = s
                .opt_path("model")
                .ok_or_else(|| CliError::User("the himol augmenter needs --model".into()))?;
            backbone = load_backbone(&path)?;
            himol = HiMolAugmenter {
                backbone: &backbone,
                inversion: InversionConfig {
                    epochs: s.usize("epochs"),
                    batch_size: s.usize("batch-size"),
                    learning_rate: s.f64("lr"),
                    assignment_epochs: s.usize("assignment-epochs"),
                    k: s.usize("k"),
                    ..InversionConfig::default()
                },
                sampler: SamplerConfig {
                    l: s.f64("l"),
                    temperature: s.f64("temperature"),
                    repair: s.bool("repair"),
                    draw_budget_factor: s.usize("draw-budget"),
                    ..SamplerConfig::default()
                },
            };
            &himol
        }
        other => return Err(CliError::User(format!("--augmenter: unknown augmenter {other:?}"))),
    };
    let report = run_augmentation(&task, augmenter).map_err(user)?;
    for (seed, why) in &report.skipped {
        eprintln!("warning: seed {seed} skipped: {why}");
    }
    eprintln!(
        "mean delta ROC-AUC {:+.4}, 95% CI [{:+.4}, {:+.4}]",
        report.mean_delta, report.ci_low, report.ci_high
    );
    let out = s.path("out");
    write_json(
        &out,
        &Versioned {
            format: "himol-lowshot/1",
            body: &report,
        },
    )?;
    echo(&out, s)
}

fn run_split(s: &Settings) -> Result<(), CliError> {
    let records = read_list(&s.path("in"))?;
    let smiles: Vec<String> = records.iter().map(|r| r.smiles.clone()).collect();
    let split = scaffold_split(&smiles, s.f64("train-ratio"), s.f64("valid-ratio"), s.u64("seed")).map_err(
        |e: SplitError| user(e),
    )?;
    let dir = s.path("out-dir");
    fs::create_dir_all(&dir).map_err(|e| CliError::User(format!("{}: {e}", dir.display())))?;
    for (name, part) in [("train.smi", &split.train), ("valid.smi", &split.valid), ("test.smi", &split.test)] {
        let rows: Vec<MoleculeRecord> = part.iter().map(|&i| records[i].clone()).collect();
        write(&dir.join(name), &format_molecule_list(&rows))?;
    }
    eprintln!(
        "train {}, valid {}, test {}",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    echo(&dir.join("split"), s)
}
