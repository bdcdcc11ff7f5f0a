use himol_core::toy::{corrupted_smiles, random_smiles, DRUG_LIKE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn himol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_himol"))
        .args(args)
        .env_remove("HIMOL_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path, items: &[String]) {
    fs::write(path, items.iter().map(|s| format!("{s}\n")).collect::<String>()).unwrap();
}

#[test]
fn help_lists_every_subcommand() {
    let out = himol(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["pretrain", "invert", "sample", "repair", "eval", "lowshot", "scaffold-split", "--jobs", "--config"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    let sub = himol(&["sample", "--help"]);
    assert_eq!(sub.status.code(), Some(0));
    assert!(String::from_utf8(sub.stdout).unwrap().contains("[default: 500]"));
}

#[test]
fn user_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.smi");
    let out = dir.path().join("out.smi");
    let r = himol(&["repair", "--in", p(&missing), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("nope.smi"));
    assert_eq!(himol(&["repair", "--bogus"]).status.code(), Some(1));
    assert_eq!(himol(&["repair", "--in", p(&missing)]).status.code(), Some(1));

    let input = dir.path().join("in.smi");
    lines(&input, &["CCO".into()]);
    let cfg = dir.path().join("cfg");
    fs::write(&cfg, "colour = blue\n").unwrap();
    let r = himol(&["repair", "--in", p(&input), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("unknown config key"));
    let r = himol(&["repair", "--in", p(&input), "--out", p(&out), "--seed", "minus one"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn repair_is_deterministic_and_traced() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut items: Vec<String> = (0..200).map(|_| corrupted_smiles(&mut rng, 12, 2)).collect();
    items.insert(0, "CC)CCC".into());
    let input = dir.path().join("a.smi");
    lines(&input, &items);
    let (b1, b2) = (dir.path().join("b1.smi"), dir.path().join("b2.smi"));
    let trace = dir.path().join("t.jsonl");
    for b in [&b1, &b2] {
        let r = himol(&["repair", "--in", p(&input), "--out", p(b), "--seed", "1", "--trace", p(&trace)]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(fs::read(&b1).unwrap(), fs::read(&b2).unwrap());
    let repaired = fs::read_to_string(&b1).unwrap();
    assert_eq!(repaired.lines().count(), items.len());
    assert_eq!(repaired.lines().next(), Some("CCCCC"));
    let first: serde_json::Value = serde_json::from_str(fs::read_to_string(&trace).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["input"], "CC)CCC");
    assert_eq!(first["output"], "CCCCC");
    assert_eq!(first["failed"], false);
    assert!(!first["rules"].as_array().unwrap().is_empty());
    let echo = fs::read_to_string(dir.path().join("b1.smi.config")).unwrap();
    assert!(echo.contains("seed = 1"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.smi");
    lines(&input, &["CCO".into()]);
    let out = dir.path().join("b.smi");
    let status = Command::new(env!("CARGO_BIN_EXE_himol"))
        .args(["repair", "--in", p(&input), "--out", p(&out)])
        .env("HIMOL_SEED", "42")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(fs::read_to_string(dir.path().join("b.smi.config")).unwrap().contains("seed = 42"));
}

#[test]
fn scaffold_split_partitions_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut items: Vec<String> = DRUG_LIKE.iter().map(|s| s.to_string()).collect();
    items.extend((0..60).map(|_| random_smiles(&mut rng, 10)));
    let input = dir.path().join("all.smi");
    lines(&input, &items);
    let run = |out: &Path| {
        let r = himol(&["scaffold-split", "--in", p(&input), "--out-dir", p(out), "--seed", "5"]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    };
    let (o1, o2) = (dir.path().join("s1"), dir.path().join("s2"));
    run(&o1);
    run(&o2);
    let mut all = Vec::new();
    for name in ["train.smi", "valid.smi", "test.smi"] {
        let text = fs::read_to_string(o1.join(name)).unwrap();
        assert_eq!(text, fs::read_to_string(o2.join(name)).unwrap());
        assert!(!text.is_empty(), "{name} is empty");
        all.extend(text.lines().map(String::from));
    }
    let mut expected = items.clone();
    expected.sort();
    all.sort();
    assert_eq!(all, expected);

    let one = dir.path().join("one.smi");
    lines(&one, &["CCO".into(), "CCN".into()]);
    let r = himol(&["scaffold-split", "--in", p(&one), "--out-dir", p(&dir.path().join("s3"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("scaffold groups"));
}

#[test]
fn end_to_end_smoke() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let corpus: Vec<String> = (0..400).map(|_| random_smiles(&mut rng, 10)).collect();
    lines(&path("corpus.smi"), &corpus);
    lines(&path("train.smi"), &corpus[..30]);
    lines(&path("test.smi"), &corpus[300..340]);
    fs::write(path("pretrain.cfg"), "# tiny model\nembed = 32\nmlp = 64\nepochs = 8\nlr = 0.002\nbatch-size = 16\n").unwrap();

    let steps: Vec<Vec<String>> = vec![
        vec!["pretrain", "--corpus", p(&path("corpus.smi")), "--out", p(&path("model.ckpt")), "--config", p(&path("pretrain.cfg")), "--seed", "1"],
        vec!["invert", "--model", p(&path("model.ckpt")), "--data", p(&path("train.smi")), "--out", p(&path("emb.ckpt")), "--k", "3", "--epochs", "40", "--lr", "0.03", "--history", p(&path("hist.json"))],
        vec!["sample", "--model", p(&path("model.ckpt")), "--emb", p(&path("emb.ckpt")), "--n", "100", "--strict", "--repair", "--seed", "7", "--out", p(&path("gen.smi")), "--provenance", p(&path("gen.jsonl"))],
        vec!["eval", "--gen", p(&path("gen.smi")), "--train", p(&path("train.smi")), "--test", p(&path("test.smi")), "--model", p(&path("model.ckpt")), "--out", p(&path("report.json")), "--repair"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in &steps {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = himol(&args);
        assert_eq!(r.status.code(), Some(0), "{}: {}", args[0], String::from_utf8_lossy(&r.stderr));
    }
    let gen = fs::read_to_string(path("gen.smi")).unwrap();
    assert_eq!(gen.lines().count(), 100);
    assert_eq!(fs::read_to_string(path("gen.jsonl")).unwrap().lines().count(), 100);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(path("report.json")).unwrap()).unwrap();
    assert_eq!(report["format"], "himol-eval/1");
    assert_eq!(report["validity"], 100.0);
    assert_eq!(report["uniqueness"], 100.0);
    assert_eq!(report["novelty"], 100.0);
    assert!(report["frechet"].as_f64().unwrap() >= 0.0);
    assert!(report["nspdk_mmd"].as_f64().unwrap() >= 0.0);
    assert!(path("report.repaired.json").exists());
    let hist: serde_json::Value = serde_json::from_str(&fs::read_to_string(path("hist.json")).unwrap()).unwrap();
    assert_eq!(hist["loss"].as_array().unwrap().len(), 40);

    // checkpoints are versioned: a corrupted file is refused as a user error
    let mut bytes = fs::read(path("model.ckpt")).unwrap();
    bytes[8] = 99;
    fs::write(path("bad.ckpt"), bytes).unwrap();
    let r = himol(&["sample", "--model", p(&path("bad.ckpt")), "--emb", p(&path("emb.ckpt")), "--out", p(&path("x.smi"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8(r.stderr).unwrap().contains("version"));
    assert!(start.elapsed().as_secs() < 600, "{:?}", start.elapsed());
}

#[test]
fn lowshot_oracle_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let task = himol_metrics::lowshot::separable_task(4, 30, 9);
    let tsv = |rows: &[(String, bool)]| rows.iter().map(|(s, l)| format!("{s}\t{}\n", *l as u8)).collect::<String>();
    fs::write(dir.path().join("pool.tsv"), tsv(&task.pool)).unwrap();
    fs::write(dir.path().join("test.tsv"), tsv(&task.test)).unwrap();
    let out = dir.path().join("ls.json");
    let r = himol(&[
        "lowshot", "--pool", p(&dir.path().join("pool.tsv")), "--test", p(&dir.path().join("test.tsv")),
        "--shots", "4", "--seeds", "10", "--augmenter", "oracle", "--out", p(&out),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["outcomes"].as_array().unwrap().len(), 10);
    assert!(v["mean_delta"].as_f64().unwrap() > 0.0);
    let r = himol(&["lowshot", "--pool", p(&dir.path().join("pool.tsv")), "--test", p(&dir.path().join("test.tsv")), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1), "himol augmenter without a model");
}
