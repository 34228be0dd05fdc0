//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process fails when a
//! criterion fails, except for those listed in `KNOWN_RED`, whose analysis is
//! kept with the project decisions; they still print FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::RngExt;

use seqseg::combiner::{combine_sequence, LabelCanvas};
use seqseg::crf::{map_inference, CrfEdge, CrfGraph, CrfWeights};
use seqseg::harness::{run_experiment, curves_csv, CategoryEpisodes, CurveRow, ExperimentConfig, ExperimentOutput};
use seqseg::lspi::{greedy_action, train, ChainMdp, LspiConfig};
use seqseg::mdp::{BeliefState, RewardMode};
use seqseg::metrics::reward;
use seqseg::pipeline::{ModelBundle, ModelConfig};
use seqseg::policies::PolicyKind;
use seqseg::rng::rng_from_seed;
use seqseg::scene::{BinaryMask, ClassCatalog, ClassId, Dataset, LabelMap};
use seqseg::synthgen::{default_templates, generate_corpus};

const CRF_GRAPHS: usize = 100;
const CRF_MAX_NODES: usize = 16;
const CRF_BUDGET: Duration = Duration::from_secs(10);
const METRIC_PAIRS: usize = 200;
const METRIC_TOL: f64 = 1e-12;
const ORDER_SCENES: usize = 100;
const ORDER_SHUFFLES: usize = 5;
const MONOTONE_CANVASES: usize = 200;
const MONOTONE_TOL: f64 = 1e-12;
const CHAIN_RUNS: u64 = 100;
const CHAIN_REQUIRED: usize = 95;
const CHAIN_BUDGET: Duration = Duration::from_secs(5);
const FEATURE_STATES: usize = 1000;
const ORDERING_MARGIN: f64 = 0.02;
const ORDERING_K: usize = 9;
const EXPERIMENT_BUDGET: Duration = Duration::from_secs(600);
const RETENTION_EPISODES: usize = 100;

/// Criteria expected to fail; see the project decisions for the analysis.
const KNOWN_RED: &[&str] = &["3c"];

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn record(out: &mut Vec<Outcome>, id: &'static str, name: &'static str, pass: bool, detail: String) {
    println!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, name, pass, detail });
}

fn info(line: String) {
    println!("[INFO] {line}");
}

// ---------- 1: CRF exactness ----------

fn oracle_energy(p: &[f64], edges: &[CrfEdge], w: &CrfWeights, y: &[bool]) -> f64 {
    let mut e = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        e += w.w1 * if y[i] { -pi.ln() } else { -(1.0 - pi).ln() };
    }
    for edge in edges {
        if y[edge.a] != y[edge.b] {
            e += w.w2 * (-edge.color_diff).exp() + w.w3 * (-edge.spatial_diff).exp();
        }
    }
    e
}

fn criterion_crf(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = rng_from_seed(101);
    let mut exact = 0;
    let mut worst = 0.0f64;
    for _ in 0..CRF_GRAPHS {
        let n = rng.random_range(1..=CRF_MAX_NODES);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.3) {
                    edges.push(CrfEdge {
                        a,
                        b,
                        color_diff: rng.random_range(0.0..3.0),
                        spatial_diff: rng.random_range(0.0..3.0),
                    });
                }
            }
        }
        let w = CrfWeights { w1: rng.random_range(0.2..2.0), w2: rng.random_range(0.0..3.0), w3: rng.random_range(0.0..3.0) };
        let graph = CrfGraph::new(&p, edges.clone()).unwrap();
        let map = map_inference(&graph, &w).unwrap();
        let (mut best, mut best_y) = (f64::INFINITY, Vec::new());
        for bits in 0u32..(1 << n) {
            let y: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let e = oracle_energy(&p, &edges, &w, &y);
            if e < best {
                best = e;
                best_y = y;
            }
        }
        let e_map = oracle_energy(&p, &edges, &w, &map);
        let gap = (e_map - best).abs();
        worst = worst.max(gap);
        if map == best_y || gap <= 1e-9 * best.abs().max(1.0) {
            exact += 1;
        }
    }
    let elapsed = start.elapsed();
    record(
        out,
        "1",
        "CRF MAP equals exhaustive minimum",
        exact == CRF_GRAPHS && elapsed < CRF_BUDGET,
        format!("{exact}/{CRF_GRAPHS} graphs exact, max energy gap {worst:.3e}, {:.2}s (< {}s)", elapsed.as_secs_f64(), CRF_BUDGET.as_secs()),
    );
}

// ---------- 2: metric oracle ----------

fn oracle_total(pred: &[ClassId], gt: &[ClassId], w: usize, h: usize, scored: &[ClassId]) -> f64 {
    let n = (w * h) as f64;
    let mut total = 0.0;
    for &c in scored {
        let (mut p, mut g, mut i) = (0usize, 0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                let (a, b) = (pred[y * w + x] == c, gt[y * w + x] == c);
                p += a as usize;
                g += b as usize;
                i += (a && b) as usize;
            }
        }
        let union = p + g - i;
        let ji = if union == 0 { 0.0 } else { i as f64 / union as f64 };
        total += p as f64 / n * ji;
    }
    total
}

fn catalog() -> ClassCatalog {
    ClassCatalog::with_objects(&["bed", "pillow", "lamp", "chair", "table"]).unwrap()
}

fn random_labels(rng: &mut seqseg::rng::SeededRng, n: usize, classes: usize) -> Vec<ClassId> {
    (0..n).map(|_| ClassId(rng.random_range(0..classes as u16))).collect()
}

fn criterion_metric(out: &mut Vec<Outcome>) {
    let cat = catalog();
    let mut rng = rng_from_seed(202);
    let (w, h) = (32, 32);
    let mut worst = 0.0f64;
    for _ in 0..METRIC_PAIRS {
        let pred = random_labels(&mut rng, w * h, cat.len());
        let gt = random_labels(&mut rng, w * h, cat.len());
        let mut objects = cat.object_ids();
        objects.shuffle(&mut rng);
        let taken: Vec<ClassId> = objects[..rng.random_range(0..=objects.len())].to_vec();
        let gt_map = LabelMap::new(w, h, gt.clone()).unwrap();
        let got = reward(&pred, &gt_map, &taken, &cat).unwrap().total;
        let mut scored: Vec<ClassId> = cat.background_ids().to_vec();
        scored.extend(&taken);
        worst = worst.max((got - oracle_total(&pred, &gt, w, h, &scored)).abs());
    }
    record(
        out,
        "2",
        "reward matches pixel-counting oracle",
        worst <= METRIC_TOL,
        format!("{METRIC_PAIRS} pairs, max |diff| {worst:.3e} (tol {METRIC_TOL:e})"),
    );
}

// ---------- 3: combiner properties ----------

fn random_mask(rng: &mut seqseg::rng::SeededRng, w: usize, h: usize) -> BinaryMask {
    let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
    let (x1, y1) = (rng.random_range(x0..w), rng.random_range(y0..h));
    let mut m = BinaryMask::empty(w, h).unwrap();
    for y in y0..=y1 {
        for x in x0..=x1 {
            m.set(x, y, true);
        }
    }
    m
}

fn criterion_order_invariance(out: &mut Vec<Outcome>) {
    let cat = catalog();
    let mut rng = rng_from_seed(303);
    let (w, h) = (24, 20);
    let mut equal = 0;
    for _ in 0..ORDER_SCENES {
        let bg: Vec<BinaryMask> = (0..3).map(|_| random_mask(&mut rng, w, h)).collect();
        // disjoint object masks: each pixel goes to at most one object
        let objects = cat.object_ids();
        let mut masks: BTreeMap<ClassId, BinaryMask> =
            objects.iter().map(|&c| (c, BinaryMask::empty(w, h).unwrap())).collect();
        for p in 0..w * h {
            let slot = rng.random_range(0..objects.len() * 2);
            if slot < objects.len() {
                masks.get_mut(&objects[slot]).unwrap().set_index(p, true);
            }
        }
        let mut order = objects.clone();
        let base = combine_sequence(&cat, [&bg[0], &bg[1], &bg[2]], |c| masks.get(&c), &order).unwrap();
        let mut same = true;
        for _ in 0..ORDER_SHUFFLES {
            order.shuffle(&mut rng);
            let other = combine_sequence(&cat, [&bg[0], &bg[1], &bg[2]], |c| masks.get(&c), &order).unwrap();
            same &= other.assignment() == base.assignment();
        }
        equal += same as usize;
    }
    record(
        out,
        "3a",
        "disjoint masks are order invariant",
        equal == ORDER_SCENES,
        format!("{equal}/{ORDER_SCENES} scenes identical across {ORDER_SHUFFLES} shuffles"),
    );
}

fn criterion_pillow_on_bed(out: &mut Vec<Outcome>) {
    let cat = catalog();
    let (bed, pillow) = (cat.require("bed").unwrap(), cat.require("pillow").unwrap());
    let (w, h) = (50, 40);
    let rect = |x0: usize, y0: usize, x1: usize, y1: usize| {
        let mut m = BinaryMask::empty(w, h).unwrap();
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    };
    let bed_mask = rect(0, 0, 40, 25); // 1000 px
    let pillow_mask = rect(25, 15, 45, 25); // 200 px, 150 on the bed
    let overlap: Vec<usize> =
        (0..w * h).filter(|&p| bed_mask.bits()[p] && pillow_mask.bits()[p]).collect();
    let mut canvas = LabelCanvas::new(w, h);
    canvas.place_mask(&bed_mask, bed).unwrap();
    canvas.place_mask(&pillow_mask, pillow).unwrap();
    let to_pillow = overlap.iter().filter(|&&p| canvas.assignment()[p] == pillow).count();
    let bed_left = canvas.assignment().iter().filter(|&&c| c == bed).count();
    let pass = bed_mask.count() == 1000 && pillow_mask.count() == 200 && overlap.len() == 150 && to_pillow == 150 && bed_left == 850;
    record(
        out,
        "3b",
        "pillow on bed resolves to the smaller segment",
        pass,
        format!("C/|bed| = 0.15, C/|pillow| = 0.75, {to_pillow}/150 overlap px to pillow, bed keeps {bed_left}"),
    );
}

/// Total with weights fixed to ground-truth fractions, for comparison.
fn gt_weighted_total(pred: &[ClassId], gt: &[ClassId], scored: &[ClassId]) -> f64 {
    let n = pred.len() as f64;
    scored
        .iter()
        .map(|&c| {
            let p = pred.iter().filter(|&&l| l == c).count();
            let g = gt.iter().filter(|&&l| l == c).count();
            let i = pred.iter().zip(gt).filter(|(&a, &b)| a == c && b == c).count();
            let u = p + g - i;
            if u == 0 {
                0.0
            } else {
                g as f64 / n * i as f64 / u as f64
            }
        })
        .sum()
}

/// 8x8 canvas/gt pairs: uniform noise, then corrupted rectangle layouts.
fn monotone_cases(cat: &ClassCatalog, rng: &mut seqseg::rng::SeededRng) -> Vec<(Vec<ClassId>, Vec<ClassId>)> {
    let (w, h) = (8usize, 8usize);
    let labels = cat.len() as u16;
    let mut cases = Vec::new();
    for _ in 0..MONOTONE_CANVASES {
        // gt without void so every pixel has a scored label
        let gt: Vec<ClassId> = (0..w * h).map(|_| ClassId(rng.random_range(1..labels))).collect();
        let pred: Vec<ClassId> = (0..w * h).map(|_| ClassId(rng.random_range(1..labels))).collect();
        cases.push((pred, gt));
    }
    let paint = |rng: &mut seqseg::rng::SeededRng, map: &mut [ClassId], rects: usize| {
        for _ in 0..rects {
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (x1, y1) = (rng.random_range(x0..w), rng.random_range(y0..h));
            let c = ClassId(rng.random_range(1..labels));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    map[y * w + x] = c;
                }
            }
        }
    };
    for _ in 0..MONOTONE_CANVASES {
        let mut gt = vec![cat.background_ids()[1]; w * h];
        paint(rng, &mut gt, 4);
        let mut pred = gt.clone();
        paint(rng, &mut pred, 2);
        cases.push((pred, gt));
    }
    // bed predicted on half its ground truth plus one floor pixel; the rest
    // of the canvas is wrongly wall, so floor has no predicted pixels yet
    let (wall, floor) = (cat.background_ids()[0], cat.background_ids()[1]);
    let bed = cat.require("bed").unwrap();
    let mut gt = vec![floor; w * h];
    let mut pred = vec![wall; w * h];
    for y in 0..2 {
        for x in 0..4 {
            gt[y * w + x] = bed;
            if x < 2 {
                pred[y * w + x] = bed;
            }
        }
    }
    pred[7 * w + 7] = bed;
    cases.push((pred, gt));
    cases
}

fn criterion_monotone(out: &mut Vec<Outcome>) {
    let cat = catalog();
    let mut rng = rng_from_seed(404);
    let (w, h) = (8, 8);
    let taken = cat.object_ids();
    let mut scored: Vec<ClassId> = cat.background_ids().to_vec();
    scored.extend(&taken);
    let cases = monotone_cases(&cat, &mut rng);
    let n = cases.len();
    let families = [
        ("uniform", 0..MONOTONE_CANVASES),
        ("layout", MONOTONE_CANVASES..n - 1),
        ("half-covered bed", n - 1..n),
    ];
    let mut lines = Vec::new();
    let (mut all_flips, mut all_drops, mut worst) = (0usize, 0usize, 0.0f64);
    let mut gt_weight_drops = 0usize;
    let mut example = None;
    for (family, range) in families {
        let (mut flips, mut drops) = (0usize, 0usize);
        for (pred, gt) in &cases[range] {
            let gt_map = LabelMap::new(w, h, gt.clone()).unwrap();
            let before = reward(pred, &gt_map, &taken, &cat).unwrap().total;
            let before_gt = gt_weighted_total(pred, gt, &scored);
            for p in 0..w * h {
                if pred[p] == gt[p] {
                    continue;
                }
                flips += 1;
                let mut fixed = pred.clone();
                fixed[p] = gt[p];
                let after = reward(&fixed, &gt_map, &taken, &cat).unwrap().total;
                if after < before - MONOTONE_TOL {
                    drops += 1;
                    if before - after > worst {
                        worst = before - after;
                        example = Some((cat.name(pred[p]).unwrap().to_string(), cat.name(gt[p]).unwrap().to_string()));
                    }
                }
                if gt_weighted_total(&fixed, gt, &scored) < before_gt - MONOTONE_TOL {
                    gt_weight_drops += 1;
                }
            }
        }
        lines.push(format!("{family} {drops}/{flips}"));
        all_flips += flips;
        all_drops += drops;
    }
    let example = example.map_or(String::new(), |(a, b)| format!(", largest drop flips {a} -> {b}"));
    record(
        out,
        "3c",
        "single-pixel corrections never lower the reward (8x8, every pixel)",
        all_drops == 0,
        format!("corrections lowering the total: {} (max drop {worst:.4}{example})", lines.join(", ")),
    );
    info(format!(
        "3c same canvases with ground-truth-fraction weights instead of predicted fractions: {gt_weight_drops}/{all_flips} corrections lower the total"
    ));
}

// ---------- 4: LSPI on the chain ----------

fn chain_success(reuse_samples: bool) -> (usize, Duration) {
    let env = ChainMdp { rewards: vec![1.0, 0.0, 0.0, 0.0, 1.2] };
    let start = Instant::now();
    let mut ok = 0;
    for seed in 0..CHAIN_RUNS {
        let config = LspiConfig { horizon: Some(10), iterations: 10, seed, reuse_samples, ..LspiConfig::default() };
        let optimal = env.value_iteration(config.gamma);
        let weights = train(&env, &config).unwrap().weights;
        let mut rng = rng_from_seed(0);
        ok += (0..5).all(|s| greedy_action(&env, &s, &weights, 0.0, &mut rng).unwrap() == optimal[s]) as usize;
    }
    (ok, start.elapsed())
}

fn criterion_chain(out: &mut Vec<Outcome>) {
    let env = ChainMdp { rewards: vec![1.0, 0.0, 0.0, 0.0, 1.2] };
    let optimal = env.value_iteration(0.9);
    let (ok, elapsed) = chain_success(true);
    record(
        out,
        "4",
        "LSPI recovers the optimal chain policy",
        ok >= CHAIN_REQUIRED && elapsed < CHAIN_BUDGET,
        format!(
            "{ok}/{CHAIN_RUNS} runs (need {CHAIN_REQUIRED}) match value iteration {optimal:?} within 10 iterations, accumulated samples, {:.2}s (< {}s)",
            elapsed.as_secs_f64(),
            CHAIN_BUDGET.as_secs()
        ),
    );
    let (fresh, _) = chain_success(false);
    info(format!("4 with fresh samples per iteration: {fresh}/{CHAIN_RUNS} runs"));
}

// ---------- 5: featurization ----------

fn criterion_features(out: &mut Vec<Outcome>) {
    let (a, k) = (9usize, 9usize);
    let mut rng = rng_from_seed(505);
    let mut len_ok = true;
    let mut disjoint = true;
    for _ in 0..FEATURE_STATES {
        let priors: Vec<f64> = (0..a).map(|_| rng.random_range(0.0..=1.0)).collect();
        let beliefs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        let state = BeliefState::new(priors, beliefs).unwrap();
        let block = 1 + 2 * k;
        let vectors: Vec<Vec<f64>> = (0..a).map(|i| state.featurize(i).unwrap()).collect();
        len_ok &= vectors.iter().all(|v| v.len() == 171 && v.len() == a * block);
        for (i, v) in vectors.iter().enumerate() {
            // nonzeros only inside block i, and the sparse support is exactly the block
            disjoint &= v.iter().enumerate().all(|(j, &x)| x == 0.0 || j / block == i);
            let support: BTreeSet<usize> = state.featurize_sparse(i).unwrap().iter().map(|&(j, _)| j).collect();
            disjoint &= support == (i * block..(i + 1) * block).collect();
        }
        for i in 0..a {
            for j in i + 1..a {
                disjoint &= vectors[i].iter().zip(&vectors[j]).all(|(x, y)| x * y == 0.0);
            }
        }
    }
    record(
        out,
        "5",
        "feature length 171 and disjoint action blocks",
        len_ok && disjoint,
        format!("|A| = K = 9: length {}, {FEATURE_STATES} random states, blocks disjoint: {disjoint}", a * (1 + 2 * k)),
    );
}

// ---------- 6-8: experiment ----------

fn mean(rows: &[&CurveRow]) -> f64 {
    rows.iter().map(|r| r.reward).sum::<f64>() / rows.len() as f64
}

fn main_track_mean(output: &ExperimentOutput, policy: PolicyKind, k: usize, categories: &[String]) -> f64 {
    let rows: Vec<&CurveRow> = output
        .rows
        .iter()
        .filter(|r| r.policy == policy && r.k == k && categories.contains(&r.category))
        .collect();
    mean(&rows)
}

fn criterion_ordering(out: &mut Vec<Outcome>, dataset: &Dataset, output: &ExperimentOutput, config: &ExperimentConfig, elapsed: Duration) {
    let categories = dataset.categories();
    let per_category: Vec<usize> =
        categories.iter().map(|c| dataset.split(&config.pool_split).iter().filter(|&&s| &dataset.scenes[s].category == c).count()).collect();
    info(format!(
        "6 corpus: {} categories, {}..{} pool scenes per category, sigma {}, {} seeds, {} folds, {} actions, k = 1..{}",
        categories.len(),
        per_category.iter().min().unwrap(),
        per_category.iter().max().unwrap(),
        default_templates()[0].noise_sigma,
        config.seeds.len(),
        config.folds,
        config.actions,
        config.rollout_actions
    ));
    let m = |p| main_track_mean(output, p, ORDERING_K, &categories);
    let (lspi, random, oracle, fixed) = (m(PolicyKind::Lspi), m(PolicyKind::Random), m(PolicyKind::Oracle), m(PolicyKind::Fixed));
    record(
        out,
        "6a",
        "learned >= random + 0.02 at k = 9",
        lspi >= random + ORDERING_MARGIN,
        format!("learned {lspi:.4}, random {random:.4} (diff {:+.4}), fixed {fixed:.4}", lspi - random),
    );
    record(out, "6b", "oracle >= learned at k = 9", oracle >= lspi, format!("oracle {oracle:.4}, learned {lspi:.4}"));

    // per scene and seed, the optimal ordering's k_opt-action value against every policy's
    let k = config.k_opt;
    let suffix = format!("/top{k}");
    let mut best: BTreeMap<(&str, &str, u64), f64> = BTreeMap::new();
    for r in output.rows.iter().filter(|r| r.policy == PolicyKind::Optimal && r.k == k && r.category.ends_with(&suffix)) {
        best.insert((&r.category, &r.scene_id, r.seed), r.reward);
    }
    let (mut checked, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    for r in output.rows.iter().filter(|r| r.policy != PolicyKind::Optimal && r.k == k && r.category.ends_with(&suffix)) {
        let Some(&o) = best.get(&(r.category.as_str(), r.scene_id.as_str(), r.seed)) else {
            violations += 1;
            continue;
        };
        checked += 1;
        if r.reward > o {
            violations += 1;
            worst = worst.max(r.reward - o);
        }
    }
    let top: Vec<String> = categories.iter().map(|c| seqseg::harness::optimal_label(c, k)).collect();
    let opt_means: Vec<String> = PolicyKind::ALL
        .iter()
        .map(|&p| format!("{p} {:.4}", main_track_mean(output, p, k, &top)))
        .collect();
    record(
        out,
        "6c",
        "optimal ordering dominates every policy at 5 actions, per scene",
        checked > 0 && violations == 0 && !best.is_empty(),
        format!("{violations} violations in {checked} (scene, seed, policy) cells, max excess {worst:.3e}; means {}", opt_means.join(", ")),
    );
    record(
        out,
        "6d",
        "end-to-end runtime under 10 min",
        elapsed < EXPERIMENT_BUDGET,
        format!("{:.1}s for corpus, models and experiment on {} thread(s)", elapsed.as_secs_f64(), rayon::current_num_threads()),
    );
    for spec in &config.control_sets {
        let label = spec.label();
        let cells: Vec<String> = config
            .policies
            .iter()
            .map(|&p| {
                let rows: Vec<&CurveRow> =
                    output.rows.iter().filter(|r| r.policy == p && r.k == ORDERING_K && r.category == label).collect();
                format!("{p} {:.4}", mean(&rows))
            })
            .collect();
        info(format!("6 control set {label} at k = {ORDERING_K}: {}", cells.join(", ")));
    }
}

fn criterion_retention(out: &mut Vec<Outcome>, dataset: &Dataset, bundle: &ModelBundle, config: &ExperimentConfig) {
    let mut rng = rng_from_seed(707);
    let categories = dataset.categories();
    let per = RETENTION_EPISODES.div_ceil(categories.len());
    let (mut episodes, mut steps, mut broken) = (0usize, 0usize, 0usize);
    for cat in &categories {
        let scenes: Vec<usize> = seqseg::harness::category_scenes(dataset, &config.pool_split, cat).into_iter().take(per).collect();
        let built = CategoryEpisodes::build(dataset, bundle, cat, scenes.clone(), config.actions, &config.episode).unwrap();
        let env = built.env(&dataset.catalog, &scenes, RewardMode::Cumulative).unwrap();
        for e in 0..env.scenes.len() {
            if episodes == RETENTION_EPISODES {
                break;
            }
            episodes += 1;
            let mut state = env.initial_state(e).unwrap();
            let initial = state.belief.beliefs.clone();
            let initial_u = state.belief.uncertainties.clone();
            let mut order: Vec<usize> = (0..env.actions.len()).collect();
            order.shuffle(&mut rng);
            for &a in &order {
                state = env.step_episode(e, &state, a).unwrap().0;
                steps += 1;
                let taken: Vec<usize> = state
                    .belief
                    .observed
                    .iter()
                    .filter_map(|&x| env.belief_classes.iter().position(|&c| c == env.actions.class(x)))
                    .collect();
                for k in 0..initial.len() {
                    if !taken.contains(&k)
                        && (state.belief.beliefs[k].to_bits() != initial[k].to_bits()
                            || state.belief.uncertainties[k].to_bits() != initial_u[k].to_bits())
                    {
                        broken += 1;
                    }
                }
            }
        }
    }
    record(
        out,
        "7",
        "untaken beliefs stay bit-identical to their initial values",
        episodes == RETENTION_EPISODES && broken == 0,
        format!("{episodes} full episodes, {steps} steps, {broken} changed untaken beliefs"),
    );
}

fn criterion_determinism(out: &mut Vec<Outcome>, dataset: &Dataset, bundle: &ModelBundle, config: &ExperimentConfig, first: &ExperimentOutput) {
    let dir = tempfile::tempdir().unwrap();
    first.write(&dir.path().join("a")).unwrap();
    let mut cfg = config.clone();
    cfg.lspi.deterministic = true;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let second = pool.install(|| run_experiment(dataset, bundle, &cfg)).unwrap();
    second.write(&dir.path().join("b")).unwrap();
    let a = std::fs::read(dir.path().join("a/curves.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/curves.csv")).unwrap();
    let summary_same = std::fs::read(dir.path().join("a/summary.json")).unwrap()
        == std::fs::read(dir.path().join("b/summary.json")).unwrap();
    record(
        out,
        "8",
        "two identical deterministic runs give byte-identical curves.csv",
        a == b && !a.is_empty(),
        format!("{} bytes, {} rows, identical: {}, summary.json identical: {summary_same}", a.len(), first.rows.len(), a == b),
    );
    assert_eq!(curves_csv(&first.rows).as_bytes(), &a[..]);
}

fn library_default_lspi(dataset: &Dataset, bundle: &ModelBundle, config: &ExperimentConfig) {
    let cfg = ExperimentConfig {
        lspi: LspiConfig::default(),
        policies: vec![PolicyKind::Lspi, PolicyKind::Random],
        optimal_track: false,
        control_sets: Vec::new(),
        ..config.clone()
    };
    let output = run_experiment(dataset, bundle, &cfg).unwrap();
    let categories = dataset.categories();
    let lspi = main_track_mean(&output, PolicyKind::Lspi, ORDERING_K, &categories);
    let random = main_track_mean(&output, PolicyKind::Random, ORDERING_K, &categories);
    info(format!(
        "6 with library LSPI defaults (gamma {}, fresh samples): learned {lspi:.4}, random {random:.4} (diff {:+.4})",
        cfg.lspi.gamma,
        lspi - random
    ));
}

fn main() {
    let mut out = Vec::new();
    criterion_crf(&mut out);
    criterion_metric(&mut out);
    criterion_order_invariance(&mut out);
    criterion_pillow_on_bed(&mut out);
    criterion_monotone(&mut out);
    criterion_chain(&mut out);
    criterion_features(&mut out);

    let start = Instant::now();
    let config = ExperimentConfig::default();
    let dataset = generate_corpus(&default_templates(), &config.corpus).unwrap();
    let bundle = ModelBundle::train(&dataset, &ModelConfig::default()).unwrap();
    let output = run_experiment(&dataset, &bundle, &config).unwrap();
    let elapsed = start.elapsed();
    criterion_ordering(&mut out, &dataset, &output, &config, elapsed);
    criterion_retention(&mut out, &dataset, &bundle, &config);
    criterion_determinism(&mut out, &dataset, &bundle, &config, &output);
    library_default_lspi(&dataset, &bundle, &config);

    let failed: Vec<&Outcome> = out.iter().filter(|o| !o.pass).collect();
    let unexpected: Vec<&&Outcome> = failed.iter().filter(|o| !KNOWN_RED.contains(&o.id)).collect();
    println!(
        "acceptance: {}/{} criteria pass; known red: {}",
        out.len() - failed.len(),
        out.len(),
        if KNOWN_RED.is_empty() { "none".into() } else { KNOWN_RED.join(", ") }
    );
    for id in KNOWN_RED {
        if out.iter().any(|o| o.id == *id && o.pass) {
            println!("note: criterion {id} is listed as known red but passed");
        }
    }
    if !unexpected.is_empty() {
        for o in &unexpected {
            eprintln!("unexpected failure: {} {}: {}", o.id, o.name, o.detail);
        }
        std::process::exit(1);
    }
}
