//! Experiment suites built on the trainer: component ablations, noise
//! robustness curves, loss-weight sweeps, and a finite-difference gradient
//! audit of the full pipeline.

use std::collections::HashMap;

use crate::autodiff::{backward, Matrix, Tape};
use crate::config::TrainConfig;
use crate::dataset::{build_snapshots, DatasetBundle, Snapshot};
use crate::error::{Result, TkgrError};
use crate::eval::RankOutcome;
use crate::model::{Model, ModelConfig};
use crate::train::{pipeline_loss, run_training};

/// One labelled row of a suite table.
#[derive(Clone, Debug)]
pub struct SuiteRow {
    pub label: String,
    pub outcome: RankOutcome,
}

/// Render rows as a tab-separated table with a header.
pub fn format_table(rows: &[SuiteRow]) -> String {
    let mut out = String::from("variant\tmrr\thits1\thits3\thits10\n");
    for row in rows {
        out.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
            row.label, row.outcome.mrr, row.outcome.hits1, row.outcome.hits3, row.outcome.hits10
        ));
    }
    out
}

fn train_variant(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    label: &str,
    log: &mut dyn FnMut(&str),
) -> Result<SuiteRow> {
    log(&format!("--- variant {label}"));
    let out = run_training(bundle, cfg, log)?;
    let outcome = out
        .test
        .ok_or_else(|| TkgrError::Argument("suite needs a non-empty test split".into()))?;
    Ok(SuiteRow {
        label: label.to_string(),
        outcome,
    })
}

/// Test-split metrics for the full model and the two single-component
/// ablations (no time vectors, no causal enhancement).
pub fn run_ablation(
    bundle: &DatasetBundle,
    base: &TrainConfig,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    rows.push(train_variant(bundle, base, "full", log)?);
    let mut td = base.clone();
    td.without_td = true;
    rows.push(train_variant(bundle, &td, "without_td", log)?);
    let mut ce = base.clone();
    ce.without_ce = true;
    rows.push(train_variant(bundle, &ce, "without_ce", log)?);
    Ok(rows)
}

/// Train the full model and the causal-enhancement ablation on increasingly
/// corrupted training sets; the test split stays clean. Each rate contributes
/// two rows labelled `full@rate` and `without_ce@rate`.
pub fn run_noise_suite(
    bundle: &DatasetBundle,
    base: &TrainConfig,
    rates: &[f64],
    log: &mut dyn FnMut(&str),
) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for &rate in rates {
        let mut full = base.clone();
        full.noise_rate = rate;
        rows.push(train_variant(bundle, &full, &format!("full@{rate}"), log)?);
        let mut ce = full.clone();
        ce.without_ce = true;
        rows.push(train_variant(bundle, &ce, &format!("without_ce@{rate}"), log)?);
    }
    Ok(rows)
}

/// Sweep one loss weight over a value grid, holding the others fixed.
pub fn sweep_lambda(
    bundle: &DatasetBundle,
    base: &TrainConfig,
    which: &str,
    values: &[f64],
    log: &mut dyn FnMut(&str),
) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for &v in values {
        let mut cfg = base.clone();
        match which {
            "lambda1" => cfg.lambda1 = v,
            "lambda2" => cfg.lambda2 = v,
            "lambda3" => cfg.lambda3 = v,
            other => {
                return Err(TkgrError::Argument(format!(
                    "unknown sweep target `{other}` (expected lambda1|lambda2|lambda3)"
                )))
            }
        }
        rows.push(train_variant(bundle, &cfg, &format!("{which}={v}"), log)?);
    }
    Ok(rows)
}

/// Worst relative disagreement per tensor between reverse-mode and central
/// finite differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < 1e-8 {
        0.0
    } else {
        diff / (a.abs() + b.abs()).max(1e-8)
    }
}

/// Audit the full training pipeline's gradients on a toy problem: width 8,
/// 5 entities, 3 relations (6 augmented), 2-snapshot history. Every element
/// of every parameter tensor is compared against a central finite difference.
///
/// `fault` optionally names a tensor whose analytic gradient is perturbed
/// before the comparison, to prove the audit detects a wrong gradient.
pub fn gradient_check(fault: Option<&str>) -> Result<GradCheckReport> {
    let cfg = TrainConfig {
        dim: 8,
        layers: 2,
        channels: 3,
        history_len: 2,
        ..Default::default()
    };
    let model = Model::new(
        5,
        6,
        ModelConfig {
            d: cfg.dim,
            omega: cfg.layers,
            channels: cfg.channels,
            ..Default::default()
        },
        17,
    );
    // Two history snapshots and one target snapshot over 5 entities.
    let facts = [
        (0usize, (0usize, 0usize, 1usize)),
        (0, (1, 1, 2)),
        (0, (2, 2, 3)),
        (1, (1, 0, 0)),
        (1, (3, 1, 4)),
        (2, (0, 1, 3)),
        (2, (4, 2, 0)),
        (2, (2, 0, 4)),
    ];
    let quads: Vec<crate::dataset::Quadruple> = facts
        .iter()
        .map(|&(t, (s, r, o))| crate::dataset::Quadruple {
            subject: s,
            relation: r,
            object: o,
            time: t,
        })
        .collect();
    let snapshots = build_snapshots(&quads, 5);
    let hist: Vec<&Snapshot> = snapshots[..2].iter().collect();
    let current = &snapshots[2];
    let t_norm = 1.0;
    let perm_seed = 99;

    let loss_at = |store_values: &HashMap<String, Matrix>| -> Result<f64> {
        let mut m = Model::new(5, 6, model.cfg, 17);
        for (name, v) in store_values {
            m.store.set(name, v.clone());
        }
        let tape = Tape::new();
        let pv = m.store.bind(&tape);
        let (loss, _) = pipeline_loss(&m, &pv, &hist, current, &cfg, t_norm, perm_seed)?;
        Ok(loss.scalar())
    };

    // Analytic gradients in one backward pass.
    let analytic: HashMap<String, Matrix> = {
        let tape = Tape::new();
        let pv = model.store.bind(&tape);
        let (loss, _) = pipeline_loss(&model, &pv, &hist, current, &cfg, t_norm, perm_seed)?;
        let grads = backward(&loss);
        pv.grads(&grads, |_| true)
    };

    let base: HashMap<String, Matrix> = model
        .store
        .iter()
        .map(|(n, m)| (n.to_string(), m.clone()))
        .collect();
    let h = 1e-5;
    let mut per_tensor = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for name in model.store.names() {
        let shape = base[name].dim();
        let mut worst = 0.0f64;
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let mut plus = base.clone();
                plus.get_mut(name).unwrap()[[i, j]] += h;
                let mut minus = base.clone();
                minus.get_mut(name).unwrap()[[i, j]] -= h;
                let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
                let mut a = analytic[name][[i, j]];
                if fault == Some(name.as_str()) {
                    a += 0.5;
                }
                worst = worst.max(rel_err(a, fd));
                checked += 1;
            }
        }
        max_rel = max_rel.max(worst);
        per_tensor.push((name.clone(), worst));
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_err: max_rel,
        checked,
    })
}
