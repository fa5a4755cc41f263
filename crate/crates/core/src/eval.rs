//! Time-aware filtered evaluation: per-query ranks with pessimistic tie
//! breaking, MRR/Hits@k aggregation, and the split evaluator that rolls
//! ground-truth history up to each query timestamp.

use std::collections::{BTreeMap, HashSet};

use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::dataset::{build_snapshots, build_time_filter, DatasetBundle, FilterIndex, Quadruple, Snapshot};
use crate::disentangle::decouple;
use crate::encoder::encode_history;
use crate::error::Result;
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Valid,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Per-query filtered ranks with their aggregate metrics.
#[derive(Clone, Debug)]
pub struct RankOutcome {
    pub ranks: Vec<usize>,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl RankOutcome {
    pub fn from_ranks(ranks: Vec<usize>) -> RankOutcome {
        let n = ranks.len().max(1) as f64;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        RankOutcome {
            mrr,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            ranks,
        }
    }

    pub fn log_line(&self, split: &str) -> String {
        format!(
            "split={split} mrr={:.4} hits1={:.4} hits3={:.4} hits10={:.4}",
            self.mrr, self.hits1, self.hits3, self.hits10
        )
    }
}

/// Rank with ties counted against the model: `1 +` the number of other
/// entities scoring at least as high as the true object.
pub fn raw_rank(scores: &[f64], true_object: usize) -> usize {
    let target = scores[true_object];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(e, &s)| e != true_object && s >= target)
        .count()
}

/// Raw rank after removing the other true objects at the query timestamp.
pub fn filtered_rank(
    scores: &[f64],
    true_object: usize,
    filter: Option<&HashSet<usize>>,
) -> usize {
    let target = scores[true_object];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(e, &s)| {
            e != true_object
                && s >= target
                && !filter.map_or(false, |f| f.contains(&e))
        })
        .count()
}

/// Evaluate one split with ground-truth history snapshots. Both query
/// directions are covered because the bundle's splits are inverse-augmented.
pub fn evaluate(model: &Model, bundle: &DatasetBundle, split: Split, cfg: &TrainConfig) -> Result<RankOutcome> {
    let all: Vec<Quadruple> = bundle.all_facts().copied().collect();
    let snapshots = build_snapshots(&all, bundle.num_entities);
    let filter = build_time_filter(bundle);
    let facts = match split {
        Split::Valid => &bundle.valid,
        Split::Test => &bundle.test,
    };
    let (t_lo, t_hi) = train_time_span(bundle);
    evaluate_queries(model, facts, &snapshots, &filter, cfg, t_lo, t_hi)
}

/// Training-split time span, used to normalize query times to [0, 1]
/// (later timestamps extrapolate linearly past 1).
pub fn train_time_span(bundle: &DatasetBundle) -> (usize, usize) {
    let lo = bundle.train.iter().map(|q| q.time).min().unwrap_or(0);
    let hi = bundle.train.iter().map(|q| q.time).max().unwrap_or(0);
    (lo, hi)
}

pub fn normalize_time(time: usize, t_lo: usize, t_hi: usize) -> f64 {
    if t_hi <= t_lo {
        0.0
    } else {
        (time as f64 - t_lo as f64) / (t_hi as f64 - t_lo as f64)
    }
}

/// Core evaluator over an explicit fact list and snapshot pool.
pub fn evaluate_queries(
    model: &Model,
    facts: &[Quadruple],
    snapshots: &[Snapshot],
    filter: &FilterIndex,
    cfg: &TrainConfig,
    t_lo: usize,
    t_hi: usize,
) -> Result<RankOutcome> {
    let mut by_time: BTreeMap<usize, Vec<&Quadruple>> = BTreeMap::new();
    for q in facts {
        by_time.entry(q.time).or_default().push(q);
    }
    let mut ranks = Vec::with_capacity(facts.len());
    for (&time, queries) in &by_time {
        let hist: Vec<&Snapshot> = snapshots
            .iter()
            .filter(|s| s.time < time)
            .collect();
        let start = hist.len().saturating_sub(cfg.history_len);
        let hist = &hist[start..];
        // Extrapolation hygiene: nothing at or after the query time may be
        // encoded.
        assert!(
            hist.iter().all(|s| s.time < time),
            "history leaked a snapshot at or after the query time"
        );

        let tape = Tape::new();
        let pv = model.store.bind(&tape);
        let state = encode_history(&pv, hist, &model.encoder_cfg())?;
        let (entities, relations) = if cfg.without_ce {
            (state.entities, state.relations)
        } else {
            let ent = decouple(&pv, "disent.entity", &state.entities, model.cfg.leak)?;
            let rel = decouple(&pv, "disent.relation", &state.relations, model.cfg.leak)?;
            (ent.causal, rel.causal)
        };
        let pairs: Vec<(usize, usize)> = queries.iter().map(|q| (q.subject, q.relation)).collect();
        let t_norm = normalize_time(time, t_lo, t_hi);
        let scores = model
            .score_channel(&pv, &entities, &relations, &pairs, t_norm, cfg.without_td)?
            .value();
        for (row, q) in queries.iter().enumerate() {
            let row_scores: Vec<f64> = scores.row(row).to_vec();
            let fset = filter.objects(q.subject, q.relation, q.time);
            ranks.push(filtered_rank(&row_scores, q.object, fset));
        }
    }
    Ok(RankOutcome::from_ranks(ranks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_is_one_when_target_scores_highest() {
        let scores = [0.1, 0.9, 0.3];
        assert_eq!(filtered_rank(&scores, 1, None), 1);
        assert_eq!(raw_rank(&scores, 1), 1);
    }

    #[test]
    fn filtering_removes_other_true_objects() {
        // Two other true objects outscore the target but are filtered.
        let scores = [0.9, 0.8, 0.5, 0.1];
        let filter = HashSet::from([0, 1, 2]);
        assert_eq!(filtered_rank(&scores, 2, Some(&filter)), 1);
        assert_eq!(raw_rank(&scores, 2), 3);
    }

    #[test]
    fn ties_count_against_the_model() {
        let scores = [0.5, 0.5, 0.2];
        assert_eq!(raw_rank(&scores, 0), 2);
    }

    #[test]
    fn rank_matches_exhaustive_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..200 {
            let scores: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let true_object = rng.gen_range(0..50);
            let filter: HashSet<usize> = (0..50).filter(|_| rng.gen_bool(0.1)).collect();

            // Oracle: sort candidate scores descending, find the target's
            // pessimistic position.
            let mut candidates: Vec<(usize, f64)> = scores
                .iter()
                .enumerate()
                .filter(|&(e, _)| e == true_object || !filter.contains(&e))
                .map(|(e, &s)| (e, s))
                .collect();
            candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let target = scores[true_object];
            let expected = 1 + candidates
                .iter()
                .filter(|&&(e, s)| e != true_object && s >= target)
                .count();

            assert_eq!(filtered_rank(&scores, true_object, Some(&filter)), expected);
            // Filtered rank never exceeds the raw rank.
            assert!(filtered_rank(&scores, true_object, Some(&filter)) <= raw_rank(&scores, true_object));
        }
    }

    #[test]
    fn aggregate_arithmetic() {
        let out = RankOutcome::from_ranks(vec![1, 2, 4]);
        assert!((out.mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-12);
        assert!((out.hits1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((out.hits3 - 2.0 / 3.0).abs() < 1e-12);
        assert!((out.hits10 - 1.0).abs() < 1e-12);
        // Hits monotonicity.
        assert!(out.hits1 <= out.hits3 && out.hits3 <= out.hits10);
    }

    #[test]
    fn time_normalization() {
        assert_eq!(normalize_time(5, 5, 5), 0.0);
        assert_eq!(normalize_time(5, 0, 10), 0.5);
        // Later times extrapolate past 1.
        assert_eq!(normalize_time(15, 0, 10), 1.5);
    }
}
