//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when an enforced criterion fails.

use himol_core::canon::atom_key;
use himol_core::repair::repair;
use himol_core::toy::{aromatic_smiles, chain_smiles, corrupted_smiles, random_smiles, DRUG_LIKE};
use himol_core::{canonical_smiles, canonicalize, is_valid, parse, MolGraph};
use himol_metrics::lowshot::{roc_auc, run_augmentation, separable_task, OracleAugmenter};
use himol_metrics::{frechet, kernel, novelty, nspdk_features, nspdk_mmd, uniqueness, validity, NspdkConfig};
use himol_model::inversion::{train, Levels};
use himol_model::sampler::{draw_lambda, interpolate};
use himol_model::{
    pretrain, sample, sample_baseline, ActivationStats, Backbone, InversionConfig, ModelConfig, PretrainConfig,
    SamplerConfig, Vocab,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

// ---------------------------------------------------------------- tolerances

const REPAIR_FUZZ: usize = 10_000;
const REPAIR_MAX_FAILURE_RATE: f64 = 0.01;
const REPAIR_TIME: Duration = Duration::from_secs(10);
const ROUND_TRIP_MOLECULES: usize = 200;
const ISOMORPHISM_PAIRS: usize = 1_000;
const FUZZ_TIME: Duration = Duration::from_secs(60);
const GRADIENT_CASES: u64 = 20;
const GRADIENT_REL_TOL: f64 = 1e-4;
const ASSIGNMENT_TOL: f64 = 1e-9;
const KS_DRAWS: usize = 10_000;
/// Asymptotic Kolmogorov–Smirnov critical value at α = 0.01, times √n.
const KS_CRITICAL: f64 = 1.6276;
const TREND_SEEDS: u64 = 5;
const TREND_SAMPLES: usize = 100;
const TREND_TIME: Duration = Duration::from_secs(15 * 60);
const MMD_SELF_TOL: f64 = 1e-9;
const KERNEL_TOL: f64 = 1e-12;
const FRECHET_TOL: f64 = 1e-9;
const RECOVERY_SEEDS: u64 = 5;
const LOWSHOT_SEEDS: usize = 20;
const STRICT_SAMPLES: usize = 100;

// ------------------------------------------------------------------ fixtures

/// Substituted benzenes and chains, half of each, not in the pretraining
/// corpus.
fn toy_set(n: usize, seed: u64, exclude: &[String]) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let s = if out.len().is_multiple_of(2) { aromatic_smiles(&mut rng) } else { chain_smiles(&mut rng) };
        if !out.contains(&s) && !exclude.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn corpus() -> &'static [String] {
    static CORPUS: OnceLock<Vec<String>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..600)
            .map(|i| match i % 3 {
                0 => random_smiles(&mut rng, 10),
                1 => aromatic_smiles(&mut rng),
                _ => chain_smiles(&mut rng),
            })
            .collect()
    })
}

fn backbone() -> &'static Backbone {
    static MODEL: OnceLock<Backbone> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = PretrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            seed: 2,
            ..PretrainConfig::default()
        };
        pretrain(corpus(), &cfg).expect("pretraining succeeds").0
    })
}

fn toy_inversion(seed: u64) -> InversionConfig {
    InversionConfig {
        epochs: 100,
        learning_rate: 0.05,
        k: 3,
        seed,
        ..InversionConfig::default()
    }
}

/// Backtracking isomorphism search over atom mappings, pruned by atom
/// label, degree and bonds to already mapped atoms.
fn isomorphic(g: &MolGraph, h: &MolGraph) -> bool {
    let n = g.atom_count();
    if n != h.atom_count() || g.bonds().len() != h.bonds().len() {
        return false;
    }
    fn extend(g: &MolGraph, h: &MolGraph, order: &[usize], map: &mut Vec<usize>, used: &mut Vec<bool>, at: usize) -> bool {
        if at == order.len() {
            return true;
        }
        let u = order[at];
        for v in 0..h.atom_count() {
            if used[v] || atom_key(g, u) != atom_key(h, v) || g.degree(u) != h.degree(v) {
                continue;
            }
            let consistent = g.neighbors(u).iter().all(|&(w, _)| {
                map[w] == usize::MAX
                    || h.bond_between(v, map[w]).map(|b| b.order) == g.bond_between(u, w).map(|b| b.order)
            });
            if !consistent {
                continue;
            }
            map[u] = v;
            used[v] = true;
            if extend(g, h, order, map, used, at + 1) {
                return true;
            }
            map[u] = usize::MAX;
            used[v] = false;
        }
        false
    }
    // breadth-first order keeps every new atom adjacent to mapped ones
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(w, _) in g.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    extend(g, h, &order, &mut vec![usize::MAX; n], &mut vec![false; n], 0)
}

fn shuffled(g: &MolGraph, rng: &mut ChaCha8Rng) -> MolGraph {
    let mut perm: Vec<usize> = (0..g.atom_count()).collect();
    perm.shuffle(rng);
    g.permuted(&perm)
}

// ----------------------------------------------------------------- criteria

type Verdict = (bool, String);
type Criterion = (&'static str, bool, fn() -> Verdict);

fn repair_golden() -> Verdict {
    let golden = [
        ("CC)CCC", "CCCCC"),
        ("CC(CCC", "CC(CCC)"),
        ("CC1CCC", "CCCCC"),
        ("C#C(=CC)C", "C#CC"),
        ("CC1C1", "CCC"),
    ];
    let exact = golden
        .iter()
        .filter(|(i, o)| repair(i, 0).map(|t| t.output == *o).unwrap_or(false))
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut inputs = Vec::with_capacity(REPAIR_FUZZ);
    while inputs.len() < REPAIR_FUZZ {
        let s = corrupted_smiles(&mut rng, 14, 1 + inputs.len() % 3);
        if !is_valid(&s) {
            inputs.push(s);
        }
    }
    let start = Instant::now();
    let (mut failed, mut unsound) = (0, 0);
    for (i, s) in inputs.iter().enumerate() {
        match repair(s, i as u64) {
            Ok(t) => unsound += !is_valid(&t.output) as usize,
            Err(_) => failed += 1,
        }
    }
    let took = start.elapsed();
    let rate = failed as f64 / REPAIR_FUZZ as f64;
    (
        exact == golden.len() && unsound == 0 && rate < REPAIR_MAX_FAILURE_RATE && took < REPAIR_TIME,
        format!(
            "{exact}/5 golden byte-exact; {REPAIR_FUZZ} fuzzed invalid: {unsound} unsound, {:.2}% failed (< 1%); {:.2?} (< 10 s)",
            100.0 * rate,
            took
        ),
    )
}

fn parser_canonicalizer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut corpus: Vec<String> = DRUG_LIKE.iter().map(|s| s.to_string()).collect();
    while corpus.len() < ROUND_TRIP_MOLECULES {
        corpus.push(match corpus.len() % 3 {
            0 => random_smiles(&mut rng, 16),
            1 => aromatic_smiles(&mut rng),
            _ => chain_smiles(&mut rng),
        });
    }
    let round_trips = corpus
        .iter()
        .filter(|s| {
            let g = parse(s).unwrap();
            let back = parse(&canonicalize(&g).unwrap()).unwrap();
            isomorphic(&g, &back) && canonicalize(&back).unwrap() == canonicalize(&g).unwrap()
        })
        .count();

    let mut agree = 0;
    let mut positives = 0;
    for i in 0..ISOMORPHISM_PAIRS {
        let g = parse(&random_smiles(&mut rng, if i % 3 == 1 { 4 } else { 8 })).unwrap();
        let h = match i % 3 {
            0 => shuffled(&g, &mut rng),
            1 => {
                let other = parse(&random_smiles(&mut rng, 4)).unwrap();
                shuffled(&other, &mut rng)
            }
            _ => parse(&random_smiles(&mut rng, 8)).unwrap(),
        };
        let iso = isomorphic(&g, &h);
        positives += iso as usize;
        agree += ((canonicalize(&g).unwrap() == canonicalize(&h).unwrap()) == iso) as usize;
    }

    const ALPHABET: &[u8] = b"CNOSPFIBrclnos()[]=#@+-123456789%.H/\\:";
    let start = Instant::now();
    let (mut inputs, mut panics) = (0usize, 0usize);
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    while start.elapsed() < FUZZ_TIME {
        let len = rng.random_range(0..40);
        let s: String = if rng.random_bool(0.5) {
            (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char).collect()
        } else {
            let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        };
        let seed = rng.random();
        inputs += 1;
        let ok = catch_unwind(|| {
            if let Ok(g) = parse(&s) {
                let _ = canonicalize(&g);
            }
            let _ = canonical_smiles(&s);
            let _ = repair(&s, seed);
        });
        panics += ok.is_err() as usize;
    }
    std::panic::set_hook(hook);
    (
        round_trips == corpus.len() && agree == ISOMORPHISM_PAIRS && panics == 0,
        format!(
            "round trip {round_trips}/{}; canonical equality = isomorphism on {agree}/{ISOMORPHISM_PAIRS} pairs ({positives} isomorphic); fuzz {inputs} inputs in {:.0?}, {panics} panics",
            corpus.len(),
            FUZZ_TIME
        ),
    )
}

fn gradients() -> Verdict {
    const TARGETS: &[&str] = &["CCO", "C1CC1", "CC(=O)N", "c1ccccc1", "OCC#N", "C"];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut positions = 0;
    for case in 0..GRADIENT_CASES {
        let cfg = ModelConfig {
            embed: 16,
            layers: 2,
            heads: 2,
            mlp: 32,
            context: 32,
        };
        let mut model = Backbone::new(Vocab::build(TARGETS.iter().copied()).unwrap(), cfg, case);
        for m in model.parameters_mut().unwrap() {
            m.data.iter_mut().for_each(|x| *x *= 4.0);
        }
        model.freeze();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let mut prompt = model.word_vectors(&["The", "molecule", "is", "a"]).unwrap();
        for _ in 0..rng.random_range(1..=3) {
            prompt.push((0..16).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let target = TARGETS[case as usize % TARGETS.len()];
        let (_, grads) = model.prompt_loss(&prompt, target).unwrap();
        for (pos, g) in grads.iter().enumerate() {
            let numeric: Vec<f64> = (0..16)
                .map(|j| {
                    let (mut plus, mut minus) = (prompt.clone(), prompt.clone());
                    plus[pos][j] += h;
                    minus[pos][j] -= h;
                    (model.prompt_loss_value(&plus, target).unwrap() - model.prompt_loss_value(&minus, target).unwrap())
                        / (2.0 * h)
                })
                .collect();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = g.iter().zip(&numeric).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(g).max(norm(&numeric)).max(1e-12));
            positions += 1;
        }
    }
    (
        worst < GRADIENT_REL_TOL,
        format!("{GRADIENT_CASES} cases, {positions} prompt positions, worst relative error {worst:.1e} (< 1e-4)"),
    )
}

fn ks_statistic(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn inversion_contracts() -> Verdict {
    let model = backbone();
    let data = toy_set(12, 7, corpus());
    let cfg = InversionConfig {
        epochs: 20,
        ..toy_inversion(3)
    };
    let (st, report) = train(&data, model, &cfg).unwrap();
    let gap = report
        .last_assignment_losses
        .iter()
        .enumerate()
        .map(|(n, row)| row[st.c[n]] - row.iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let mut endpoints = true;
    for a in 0..st.n() {
        for b in 0..st.n() {
            endpoints &= interpolate(&st, a, b, 1.0).unwrap() == (st.i[st.c[a]].clone(), st.d[a].clone());
            endpoints &= interpolate(&st, a, b, 0.0).unwrap() == (st.i[st.c[b]].clone(), st.d[b].clone());
        }
    }
    let critical = KS_CRITICAL / (KS_DRAWS as f64).sqrt();
    let mut ks = Vec::new();
    for l in [0.0, 0.3] {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..KS_DRAWS).map(|_| draw_lambda(&mut rng, l)).collect();
        ks.push((l, ks_statistic(xs, l, 1.0 - l)));
    }
    (
        gap <= ASSIGNMENT_TOL && endpoints && ks.iter().all(|k| k.1 < critical),
        format!(
            "assignment gap at freeze {gap:.1e} (<= 1e-9); endpoints bit-exact: {endpoints}; KS D = {:.4} (l=0), {:.4} (l=0.3), critical {critical:.4}",
            ks[0].1, ks[1].1
        ),
    )
}

fn hierarchy_trend() -> Verdict {
    let start = Instant::now();
    let model = backbone();
    let data = toy_set(30, 99, corpus());
    let mut full = Vec::new();
    let mut shared = Vec::new();
    for seed in 0..TREND_SEEDS {
        let cfg = toy_inversion(seed);
        let (st, _) = train(&data, model, &cfg).unwrap();
        let batch = sample(
            &st,
            model,
            &data,
            &SamplerConfig {
                max_samples: TREND_SAMPLES,
                seed,
                ..SamplerConfig::default()
            },
        )
        .unwrap();
        full.push(batch.records.iter().filter(|r| r.valid).count() as f64);
        let only_s = InversionConfig {
            levels: Levels::SHARED_ONLY,
            ..cfg
        };
        let (st, _) = train(&data, model, &only_s).unwrap();
        let batch = sample_baseline(
            model,
            std::slice::from_ref(&st.s),
            &data,
            &SamplerConfig {
                max_samples: TREND_SAMPLES,
                seed,
                ..SamplerConfig::baseline()
            },
        )
        .unwrap();
        shared.push(batch.records.iter().filter(|r| r.valid).count() as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (f, s) = (mean(&full), mean(&shared));
    let took = start.elapsed();
    (
        f > s && took < TREND_TIME,
        format!(
            "raw validity over {TREND_SEEDS} seeds: [S][I][D] interpolation {f:.1}% vs [S] only at τ=2 {s:.1}%; {:.0?} (< 15 min)",
            took
        ),
    )
}

type Form = (Vec<(usize, u8, i8, bool)>, Vec<(usize, usize, u8)>);

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_form(g: &MolGraph, dist: &[usize], r: usize) -> Form {
    let members: Vec<usize> = (0..g.atom_count()).filter(|&v| dist[v] <= r).collect();
    let mut best: Option<Form> = None;
    for perm in permutations(members.len()) {
        let mut pos = vec![usize::MAX; g.atom_count()];
        for (i, &m) in members.iter().enumerate() {
            pos[m] = perm[i];
        }
        let mut labels = vec![(0, 0, 0, false); members.len()];
        for &m in &members {
            let a = g.atom(m);
            labels[pos[m]] = (dist[m], a.element.atomic_number(), a.charge, a.aromatic);
        }
        let mut edges: Vec<(usize, usize, u8)> = g
            .bonds()
            .iter()
            .filter(|b| pos[b.a] != usize::MAX && pos[b.b] != usize::MAX)
            .map(|b| (pos[b.a].min(pos[b.b]), pos[b.a].max(pos[b.b]), b.order.code()))
            .collect();
        edges.sort();
        let form = (labels, edges);
        if best.as_ref().is_none_or(|b| form < *b) {
            best = Some(form);
        }
    }
    best.unwrap()
}

type BruteFeatures = BTreeMap<(usize, usize, Form, Form), f64>;

fn brute_features(g: &MolGraph, cfg: &NspdkConfig) -> BruteFeatures {
    let dist = g.distance_matrix();
    let n = g.atom_count();
    let forms: Vec<Vec<Form>> = (0..n)
        .map(|v| (0..=cfg.radius).map(|r| brute_form(g, &dist[v], r)).collect())
        .collect();
    let mut out = BTreeMap::new();
    for u in 0..n {
        for v in 0..n {
            let d = dist[u][v];
            if d <= cfg.distance {
                for (r, (a, b)) in forms[u].iter().zip(&forms[v]).enumerate() {
                    *out.entry((r, d, a.clone(), b.clone())).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    out
}

fn nspdk() -> Verdict {
    // the widest table, so that a bucket collision cannot hide a mismatch
    let cfg = NspdkConfig {
        width: u64::MAX,
        ..NspdkConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut graphs: Vec<MolGraph> = ["C", "CC", "C=C", "C#N", "c1ccccc1", "Cc1ccccc1", "c1ccncc1", "[NH4+]", "C1CC1"]
        .iter()
        .map(|s| parse(s).unwrap())
        .collect();
    while graphs.len() < 100 {
        let g = parse(&random_smiles(&mut rng, 7)).unwrap();
        if g.atom_count() <= 7 {
            graphs.push(g);
        }
    }
    let hashed: Vec<_> = graphs.iter().map(|g| nspdk_features(g, &cfg)).collect();
    let brute: Vec<_> = graphs.iter().map(|g| brute_features(g, &cfg)).collect();
    let dot = |x: &BruteFeatures, y: &BruteFeatures| -> f64 { x.iter().filter_map(|(k, v)| y.get(k).map(|w| v * w)).sum() };
    let mut worst: f64 = 0.0;
    for i in 0..graphs.len() {
        for j in i..graphs.len() {
            let oracle = dot(&brute[i], &brute[j]) / (dot(&brute[i], &brute[i]) * dot(&brute[j], &brute[j])).sqrt();
            worst = worst.max((kernel(&hashed[i], &hashed[j]) - oracle).abs());
        }
    }
    let defaults = NspdkConfig::default();
    let self_mmd = nspdk_mmd(&graphs, &graphs, &defaults);
    let family = |f: fn(&mut ChaCha8Rng) -> String, rng: &mut ChaCha8Rng| -> Vec<MolGraph> {
        (0..40).map(|_| parse(&f(rng)).unwrap()).collect()
    };
    let aromatic = family(aromatic_smiles, &mut rng);
    let chains = family(chain_smiles, &mut rng);
    let separation = nspdk_mmd(&aromatic, &chains, &defaults);
    (
        self_mmd < MMD_SELF_TOL && worst <= KERNEL_TOL && separation > 0.0,
        format!(
            "MMD(X,X) = {self_mmd:.1e}; hashed vs unhashed kernel on {} graphs <= 7 atoms: max |diff| {worst:.1e}; two-family MMD {separation:.4}",
            graphs.len()
        ),
    )
}

fn frechet_criterion() -> Verdict {
    let one = |m: f64, s: f64| ActivationStats {
        mean: vec![m],
        cov: vec![s * s],
        count: 2,
    };
    let mut closed: f64 = 0.0;
    for (m1, s1, m2, s2) in [(0.0, 1.0, 0.0, 1.0), (1.0, 2.0, -0.5, 0.5), (3.0, 0.1, 3.0, 4.0), (-2.0, 0.0, 1.0, 1.5)] {
        let f = frechet(&one(m1, s1), &one(m2, s2)).unwrap();
        closed = closed.max((f - ((m1 - m2).powi(2) + (s1 - s2).powi(2))).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut random_stats = || {
        let vs: Vec<Vec<f64>> = (0..12).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        ActivationStats::from_vectors(&vs).unwrap()
    };
    let (mut identical, mut asym): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let (a, b) = (random_stats(), random_stats());
        identical = identical.max(frechet(&a, &a).unwrap().abs());
        asym = asym.max((frechet(&a, &b).unwrap() - frechet(&b, &a).unwrap()).abs());
    }
    (
        identical < FRECHET_TOL && closed < FRECHET_TOL && asym < FRECHET_TOL,
        format!("identical {identical:.1e}; 1-D closed form max error {closed:.1e}; asymmetry {asym:.1e} (all < 1e-9)"),
    )
}

fn cluster_recovery() -> Verdict {
    let model = backbone();
    let data = toy_set(6, 5, corpus());
    let family: Vec<usize> = (0..6).map(|i| i % 2).collect();
    let mut recovered = 0;
    for seed in 0..RECOVERY_SEEDS {
        let cfg = InversionConfig {
            k: 2,
            epochs: 100,
            learning_rate: 0.05,
            batch_size: 2,
            seed,
            ..InversionConfig::default()
        };
        let (st, _) = train(&data, model, &cfg).unwrap();
        let same = st.c == family || st.c.iter().zip(&family).all(|(a, b)| a != b);
        recovered += same as usize;
    }
    (
        recovered as u64 == RECOVERY_SEEDS,
        format!("family partition recovered on {recovered}/{RECOVERY_SEEDS} seeds (K=2, 3 benzenes + 3 chains)"),
    )
}

fn lowshot() -> Verdict {
    let labels = [false, false, true, true];
    let fixtures = roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels) == Ok(1.0)
        && roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels) == Ok(0.0)
        && roc_auc(&[0.5; 4], &labels) == Ok(0.5);
    let mut task = separable_task(4, 40, 1);
    task.seeds = (0..LOWSHOT_SEEDS as u64).collect();
    let oracle = OracleAugmenter { pool: task.pool.clone() };
    let r = run_augmentation(&task, &oracle).unwrap();
    (
        fixtures && r.outcomes.len() == LOWSHOT_SEEDS && r.mean_delta > 0.0 && r.ci_low > 0.0,
        format!(
            "AUC fixtures exact: {fixtures}; oracle ΔROC-AUC {:+.4}, 95% CI [{:+.4}, {:+.4}] over {} seeds",
            r.mean_delta,
            r.ci_low,
            r.ci_high,
            r.outcomes.len()
        ),
    )
}

fn strict_sampling() -> Verdict {
    let model = backbone();
    let data = toy_set(30, 99, corpus());
    let (st, _) = train(&data, model, &toy_inversion(0)).unwrap();
    let batch = sample(
        &st,
        model,
        &data,
        &SamplerConfig {
            max_samples: STRICT_SAMPLES,
            strict: true,
            seed: 11,
            ..SamplerConfig::default()
        },
    )
    .unwrap();
    let gen: Vec<String> = batch.records.iter().map(|r| r.final_smiles().to_string()).collect();
    let (v, u, n) = (validity(&gen), uniqueness(&gen), novelty(&gen, &data));
    let distinct: HashSet<&String> = gen.iter().collect();
    (
        gen.len() == STRICT_SAMPLES && v == 100.0 && u == 100.0 && n == 100.0 && distinct.len() == gen.len(),
        format!(
            "{} molecules from {} draws: validity {v}, uniqueness {u}, novelty {n}",
            gen.len(),
            batch.draws
        ),
    )
}

// --------------------------------------------------------------------- main

fn main() {
    let criteria: [Criterion; 10] = [
        ("repair golden + fuzz", true, repair_golden),
        ("parser / canonicalizer", true, parser_canonicalizer),
        ("prompt gradients", true, gradients),
        ("inversion + interpolation contracts", true, inversion_contracts),
        ("hierarchy validity trend", true, hierarchy_trend),
        ("NSPDK", true, nspdk),
        ("Frechet distance", true, frechet_criterion),
        ("cluster recovery", false, cluster_recovery),
        ("low-shot harness", true, lowshot),
        ("strict-mode sampling", true, strict_sampling),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    println!("\nrunning acceptance criteria");
    for (name, enforced, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let tag = match (pass, enforced) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not enforced)",
        };
        println!("{tag:<20} {name:<36} {detail}  [{:.1?}]", start.elapsed());
        failed += (!pass && enforced) as usize;
    }
    if failed > 0 {
        println!("{failed} enforced criteria failed");
        std::process::exit(1);
    }
}
