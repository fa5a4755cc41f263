//! Acceptance gate: one test per shipping criterion, each printing a single
//! PASS/FAIL line. Criterion 8 (full-scale benchmark numbers) is recorded as
//! informational and never gates.

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tkgr::autodiff::{constant, Tape};
use tkgr::config::TrainConfig;
use tkgr::dataset::{
    augment_inverse, build_snapshots, DatasetBundle, Quadruple, Snapshot,
};
use tkgr::decoder::predict_distribution_rows;
use tkgr::disentangle::{
    club_mi_upper, decouple, estimate_mi, fit_club, intervene, permutation_from_seed,
};
use tkgr::encoder::encode_history;
use tkgr::eval::{
    evaluate, filtered_rank, normalize_time, raw_rank, train_time_span, RankOutcome, Split,
};
use tkgr::experiments::{gradient_check, run_ablation};
use tkgr::model::{Model, ModelConfig};
use tkgr::nn::{init_mlp2, ParamStore};
use tkgr::synthetic::periodic_bundle;
use tkgr::train::run_training;

const CASES: usize = 100;

fn pass(criterion: usize, detail: &str) {
    println!("criterion {criterion}: PASS ({detail})");
}

fn fail(criterion: usize, detail: &str) -> ! {
    println!("criterion {criterion}: FAIL ({detail})");
    panic!("criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_invariant_suite() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let d = 6;

    let mut store = ParamStore::new();
    init_mlp2(&mut store, "disent.entity", d, 2 * d, 2 * d, &mut rng);
    init_mlp2(&mut store, "club.entity.mu", d, d, d, &mut rng);
    init_mlp2(&mut store, "club.entity.logvar", d, d, d, &mut rng);

    for case in 0..CASES {
        let tape = Tape::new();
        let pv = store.bind(&tape);
        let rows = 3 + case % 5;
        let x_m = Array2::from_shape_fn((rows, d), |_| rng.gen_range(-3.0..3.0));
        let x = constant(&tape, x_m.clone());

        // Mask complementarity and reconstruction.
        let pair = decouple(&pv, "disent.entity", &x, 0.2).unwrap();
        let mask_sum = pair.mask_causal.value() + pair.mask_confounding.value();
        if mask_sum.iter().any(|v| (v - 1.0).abs() > 1e-6) {
            fail(1, "mask complementarity violated");
        }
        let recon = pair.causal.value() + pair.confounding.value();
        if recon
            .iter()
            .zip(x_m.iter())
            .any(|(a, b)| (a - b).abs() > 1e-6)
        {
            fail(1, "mask reconstruction violated");
        }

        // Softmax normalization over random score rows.
        let scores = Array2::from_shape_fn((rows, 9), |_| rng.gen_range(-30.0..30.0));
        let probs = predict_distribution_rows(&scores);
        for row in probs.rows() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|p| *p < 0.0) {
                fail(1, "softmax normalization violated");
            }
        }

        // Contrastive MI bound is exactly zero under the identity permutation.
        let x_n = constant(
            &tape,
            Array2::from_shape_fn((rows, d), |_| rng.gen_range(-3.0..3.0)),
        );
        let ident: Vec<usize> = (0..rows).collect();
        let mi = club_mi_upper(&pv, "club.entity", &x, &x_n, &ident, 0.2)
            .unwrap()
            .scalar();
        if mi != 0.0 {
            fail(1, "club_mi_upper(identity) != 0");
        }

        // Intervention with the identity permutation reconstructs c + n.
        let iv = intervene(&pair.causal, &pair.confounding, &ident).unwrap();
        let expect = pair.causal.value() + pair.confounding.value();
        if iv
            .value()
            .iter()
            .zip(expect.iter())
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            fail(1, "intervene(identity) does not reconstruct");
        }

        // Filtered rank never exceeds raw rank.
        let score_vec: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = rng.gen_range(0..20);
        let fset: HashSet<usize> = (0..20).filter(|_| rng.gen_bool(0.2)).collect();
        if filtered_rank(&score_vec, target, Some(&fset)) > raw_rank(&score_vec, target) {
            fail(1, "filtered rank exceeds raw rank");
        }

        // Hits monotonicity.
        let ranks: Vec<usize> = (0..30).map(|_| rng.gen_range(1..40)).collect();
        let out = RankOutcome::from_ranks(ranks);
        if !(out.hits1 <= out.hits3 && out.hits3 <= out.hits10) {
            fail(1, "hits monotonicity violated");
        }

        // Every fact's object is a member of its own filter set.
        let facts: Vec<Quadruple> = (0..40)
            .map(|_| Quadruple {
                subject: rng.gen_range(0..8),
                relation: rng.gen_range(0..3),
                object: rng.gen_range(0..8),
                time: rng.gen_range(0..5),
            })
            .collect();
        let bundle = DatasetBundle {
            train: facts.clone(),
            valid: vec![],
            test: vec![],
            num_entities: 8,
            num_relations: 3,
            num_relations_aug: 6,
            time_unit: "t".into(),
        };
        let filter = tkgr::dataset::build_time_filter(&bundle);
        for f in &facts {
            if !filter
                .objects(f.subject, f.relation, f.time)
                .is_some_and(|s| s.contains(&f.object))
            {
                fail(1, "filter index missing a true fact");
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= 60 {
        fail(1, &format!("invariant suite too slow: {elapsed:.1?}"));
    }
    pass(
        1,
        &format!("7 invariants x {CASES} randomized cases in {elapsed:.1?}"),
    );
}

#[test]
fn criterion_2_gradient_check() {
    let start = std::time::Instant::now();
    let report = gradient_check(None).unwrap();
    if !report.passes(1e-4) {
        fail(
            2,
            &format!("max relative error {:.3e} >= 1e-4", report.max_rel_err),
        );
    }
    // The audit must also be sharp enough to catch a wrong gradient.
    let faulty = gradient_check(Some("decoder.fc.w")).unwrap();
    if faulty.passes(1e-4) {
        fail(2, "injected gradient fault went undetected");
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= 120 {
        fail(2, &format!("gradient check too slow: {elapsed:.1?}"));
    }
    pass(
        2,
        &format!(
            "{} elements, max rel err {:.3e}, fault detected, {elapsed:.1?}",
            report.checked, report.max_rel_err
        ),
    );
}

/// Brute-force evaluator: same model forward, but filtering by rescanning the
/// whole fact list and ranking by exhaustive sort.
fn brute_force_ranks(model: &Model, bundle: &DatasetBundle, cfg: &TrainConfig) -> Vec<usize> {
    let all: Vec<Quadruple> = bundle.all_facts().copied().collect();
    let snapshots = build_snapshots(&all, bundle.num_entities);
    let (t_lo, t_hi) = train_time_span(bundle);

    let mut by_time: BTreeMap<usize, Vec<&Quadruple>> = BTreeMap::new();
    for q in &bundle.test {
        by_time.entry(q.time).or_default().push(q);
    }
    let mut ranks = Vec::new();
    for (&time, queries) in &by_time {
        let hist: Vec<&Snapshot> = snapshots.iter().filter(|s| s.time < time).collect();
        let start = hist.len().saturating_sub(cfg.history_len);
        let hist = &hist[start..];
        let tape = Tape::new();
        let pv = model.store.bind(&tape);
        let state = encode_history(&pv, hist, &model.encoder_cfg()).unwrap();
        let ent = decouple(&pv, "disent.entity", &state.entities, model.cfg.leak).unwrap();
        let rel = decouple(&pv, "disent.relation", &state.relations, model.cfg.leak).unwrap();
        let pairs: Vec<(usize, usize)> = queries.iter().map(|q| (q.subject, q.relation)).collect();
        let scores = model
            .score_channel(
                &pv,
                &ent.causal,
                &rel.causal,
                &pairs,
                normalize_time(time, t_lo, t_hi),
                false,
            )
            .unwrap()
            .value();
        for (row, q) in queries.iter().enumerate() {
            // Filter by rescanning every fact in the dataset.
            let removed: HashSet<usize> = all
                .iter()
                .filter(|f| {
                    f.subject == q.subject
                        && f.relation == q.relation
                        && f.time == q.time
                        && f.object != q.object
                })
                .map(|f| f.object)
                .collect();
            // Exhaustive sort ranking with pessimistic ties.
            let mut kept: Vec<(usize, f64)> = (0..bundle.num_entities)
                .filter(|e| !removed.contains(e))
                .map(|e| (e, scores[[row, e]]))
                .collect();
            kept.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap()
                    .then_with(|| a.0.cmp(&b.0))
            });
            let target_score = scores[[row, q.object]];
            let rank = 1 + kept
                .iter()
                .filter(|&&(e, s)| e != q.object && s >= target_score)
                .count();
            ranks.push(rank);
        }
    }
    ranks
}

#[test]
fn criterion_3_oracle_equivalence() {
    // 200-fact toy dataset over 12 entities, 3 relations, 20 timestamps.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut facts: Vec<Quadruple> = (0..100)
        .map(|_| Quadruple {
            subject: rng.gen_range(0..12),
            relation: rng.gen_range(0..3),
            object: rng.gen_range(0..12),
            time: rng.gen_range(0..20),
        })
        .collect();
    facts.sort();
    let train: Vec<Quadruple> = facts.iter().filter(|q| q.time < 14).copied().collect();
    let valid: Vec<Quadruple> = facts
        .iter()
        .filter(|q| (14..17).contains(&q.time))
        .copied()
        .collect();
    let test: Vec<Quadruple> = facts.iter().filter(|q| q.time >= 17).copied().collect();
    let bundle = DatasetBundle {
        train: augment_inverse(&train, 3),
        valid: augment_inverse(&valid, 3),
        test: augment_inverse(&test, 3),
        num_entities: 12,
        num_relations: 3,
        num_relations_aug: 6,
        time_unit: "toy".into(),
    };
    assert_eq!(bundle.train.len() + bundle.valid.len() + bundle.test.len(), 200);
    let cfg = TrainConfig {
        dim: 10,
        layers: 1,
        history_len: 4,
        channels: 3,
        ..Default::default()
    };
    let model = Model::new(
        12,
        6,
        ModelConfig {
            d: cfg.dim,
            omega: cfg.layers,
            channels: cfg.channels,
            ..Default::default()
        },
        9,
    );
    let fast = evaluate(&model, &bundle, Split::Test, &cfg).unwrap();
    let oracle = brute_force_ranks(&model, &bundle, &cfg);
    if fast.ranks != oracle {
        fail(3, "evaluator ranks diverge from the brute-force oracle");
    }
    pass(
        3,
        &format!("{} per-query ranks match the brute-force oracle exactly", oracle.len()),
    );
}

fn synthetic_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 32,
        layers: 2,
        history_len: 5,
        channels: 8,
        epochs: 30,
        patience: 30,
        lr: 0.01,
        seed,
        ..Default::default()
    }
}

#[test]
fn criterion_4_synthetic_convergence() {
    let start = std::time::Instant::now();
    let bundle = periodic_bundle();
    let mut log = |_: &str| {};
    let out = run_training(&bundle, &synthetic_cfg(1), &mut log).unwrap();
    let mrr = out.test.unwrap().mrr;
    let elapsed = start.elapsed();
    if mrr < 0.90 {
        fail(4, &format!("test MRR {mrr:.4} < 0.90"));
    }
    if elapsed.as_secs() >= 300 {
        fail(4, &format!("took {elapsed:.1?}, budget 5 min"));
    }
    pass(4, &format!("test MRR {mrr:.4} in {elapsed:.1?}"));
}

fn gaussian_pairs(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let mut x = Array2::zeros((n, 1));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
        let r = (-2.0 * u1.ln()).sqrt();
        let a = r * (2.0 * std::f64::consts::PI * u2).cos();
        let b = r * (2.0 * std::f64::consts::PI * u2).sin();
        x[[i, 0]] = a;
        y[[i, 0]] = rho * a + (1.0 - rho * rho).sqrt() * b;
    }
    (x, y)
}

#[test]
fn criterion_5_club_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 10_000;

    // Closed-form oracle for the correlated case, computed here rather than
    // hard-coded: MI of a bivariate normal is -0.5 ln(1 - rho^2).
    let rho = 0.8f64;
    let truth = -0.5 * (1.0 - rho * rho).ln();
    assert!((truth - 0.5108).abs() < 1e-3);

    let (x, y) = gaussian_pairs(n, rho, &mut rng);
    let mut store = ParamStore::new();
    init_mlp2(&mut store, "q.mu", 1, 16, 1, &mut rng);
    init_mlp2(&mut store, "q.logvar", 1, 16, 1, &mut rng);
    fit_club(&mut store, "q", &x, &y, 400, 0.01, 0.2).unwrap();
    let correlated = estimate_mi(&store, "q", &x, &y, 77, 0.2).unwrap();

    let (xi, yi) = gaussian_pairs(n, 0.0, &mut rng);
    let mut store_i = ParamStore::new();
    init_mlp2(&mut store_i, "q.mu", 1, 16, 1, &mut rng);
    init_mlp2(&mut store_i, "q.logvar", 1, 16, 1, &mut rng);
    fit_club(&mut store_i, "q", &xi, &yi, 400, 0.01, 0.2).unwrap();
    let independent = estimate_mi(&store_i, "q", &xi, &yi, 78, 0.2).unwrap();

    if correlated < 0.41 {
        fail(
            5,
            &format!("bound {correlated:.4} < 0.41 for rho=0.8 (true {truth:.4})"),
        );
    }
    if !(-0.05..=0.05).contains(&independent) {
        fail(
            5,
            &format!("bound {independent:.4} outside [-0.05, 0.05] for independent pairs"),
        );
    }
    // Second oracle: with the exact Gaussian conditional, the contrastive
    // bound evaluates to rho^2 / (1 - rho^2); the fitted estimate should land
    // near it from below-or-about, never below the MI threshold.
    let analytic_bound = rho * rho / (1.0 - rho * rho);
    pass(
        5,
        &format!(
            "rho=0.8 estimate {correlated:.4} (MI {truth:.4}, analytic bound {analytic_bound:.4}), independent estimate {independent:.4}"
        ),
    );
}

#[test]
fn criterion_6_noise_robustness_direction() {
    let bundle = periodic_bundle();
    let seeds = [2u64, 4, 7];
    let run = |seed: u64, noise: f64, without_ce: bool| -> f64 {
        let mut cfg = synthetic_cfg(seed);
        // A longer budget than criterion 4: the robustness comparison needs
        // both variants at convergence, not just past the 0.90 bar.
        cfg.epochs = 60;
        cfg.patience = 60;
        cfg.noise_rate = noise;
        cfg.without_ce = without_ce;
        let mut log = |_: &str| {};
        run_training(&bundle, &cfg, &mut log)
            .unwrap()
            .test
            .unwrap()
            .mrr
    };
    let mean = |f: &dyn Fn(u64) -> f64| seeds.iter().map(|&s| f(s)).sum::<f64>() / 3.0;
    let full_clean = mean(&|s| run(s, 0.0, false));
    let full_noisy = mean(&|s| run(s, 0.2, false));
    let ce_clean = mean(&|s| run(s, 0.0, true));
    let ce_noisy = mean(&|s| run(s, 0.2, true));
    let full_drop = full_clean - full_noisy;
    let ce_drop = ce_clean - ce_noisy;
    if full_noisy < ce_noisy {
        fail(
            6,
            &format!("noisy MRR: full {full_noisy:.4} < without_ce {ce_noisy:.4}"),
        );
    }
    if full_drop > ce_drop {
        fail(
            6,
            &format!("degradation: full {full_drop:.4} > without_ce {ce_drop:.4}"),
        );
    }
    pass(
        6,
        &format!(
            "noisy MRR full {full_noisy:.4} >= without_ce {ce_noisy:.4}; \
             degradation {full_drop:.4} <= {ce_drop:.4} (3 seeds)"
        ),
    );
}

#[test]
fn criterion_7_ablation_table_one_command() {
    // The same table the `ablate` subcommand prints, produced in one call.
    let bundle = periodic_bundle();
    let mut cfg = synthetic_cfg(1);
    cfg.epochs = 5;
    let mut log = |_: &str| {};
    let rows = run_ablation(&bundle, &cfg, &mut log).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    if labels != ["full", "without_td", "without_ce"] {
        fail(7, &format!("unexpected variants {labels:?}"));
    }
    let table = tkgr::experiments::format_table(&rows);
    if !table.starts_with("variant\tmrr\thits1\thits3\thits10") {
        fail(7, "table header missing");
    }
    pass(7, "3-variant ablation table emitted in one command");
}

#[test]
fn criterion_8_full_scale_informational() {
    // Full-scale benchmark training (ICEWS14 target MRR 42.74 +/- 1.5) takes
    // hours of accelerator time and is out of desk scope. Recorded here as an
    // informational target, never gating.
    pass(
        8,
        "informational only: full-scale ICEWS14 target MRR 42.74 +/- 1.5 not run at desk scale",
    );
}
