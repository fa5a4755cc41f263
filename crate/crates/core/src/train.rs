//! Training loop: per-timestamp rollout over the training snapshot stream,
//! inner variational-estimator updates, the four-part objective, and early
//! stopping on validation filtered MRR.

use crate::autodiff::{backward, constant, Matrix, Tape, Var};
use crate::config::TrainConfig;
use crate::dataset::{build_snapshots, inject_noise, DatasetBundle, Snapshot};
use crate::disentangle::{club_loglik, club_mi_upper, decouple, intervene, permutation_from_seed};
use crate::encoder::encode_history;
use crate::error::{Result, TkgrError};
use crate::eval::{evaluate, normalize_time, train_time_span, RankOutcome, Split};
use crate::model::{Model, ModelConfig};
use crate::nn::{Adam, ParamVars};
use crate::objective::{
    loss_causal, loss_confounding, loss_intervention, total_loss, total_loss_var, LossBreakdown,
};

/// Full pipeline loss for one training timestamp on an existing tape.
/// `perm_seed` drives the negative-pair and intervention permutations.
pub fn pipeline_loss(
    model: &Model,
    pv: &ParamVars,
    hist: &[&Snapshot],
    current: &Snapshot,
    cfg: &TrainConfig,
    t_norm: f64,
    perm_seed: u64,
) -> Result<(Var, LossBreakdown)> {
    if current.edges.is_empty() {
        return Err(TkgrError::Argument(
            "pipeline_loss: snapshot has no facts".into(),
        ));
    }
    let leak = model.cfg.leak;
    let queries: Vec<(usize, usize)> = current.edges.iter().map(|&(s, r, _)| (s, r)).collect();
    let targets: Vec<usize> = current.edges.iter().map(|&(_, _, o)| o).collect();
    let state = encode_history(pv, hist, &model.encoder_cfg())?;

    if cfg.without_ce {
        // Causal-enhancement ablation: decode the raw evolved state directly.
        let scores =
            model.score_channel(pv, &state.entities, &state.relations, &queries, t_norm, cfg.without_td)?;
        let l_c = loss_causal(&scores.log_softmax_rows(), &targets)?;
        let breakdown = total_loss(l_c.scalar(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)?;
        return Ok((l_c, breakdown));
    }

    let ent = decouple(pv, "disent.entity", &state.entities, leak)?;
    let rel = decouple(pv, "disent.relation", &state.relations, leak)?;

    let s_causal =
        model.score_channel(pv, &ent.causal, &rel.causal, &queries, t_norm, cfg.without_td)?;
    let l_c = loss_causal(&s_causal.log_softmax_rows(), &targets)?;

    let s_conf = model.score_channel(
        pv,
        &ent.confounding,
        &rel.confounding,
        &queries,
        t_norm,
        cfg.without_td,
    )?;
    let l_n = loss_confounding(&s_conf.log_softmax_rows());

    // MI estimate over the rows touched by this snapshot.
    let active_e = current.active_entities();
    let active_r = current.active_relations();
    let mi_e = club_mi_upper(
        pv,
        "club.entity",
        &ent.causal.gather_rows(&active_e),
        &ent.confounding.gather_rows(&active_e),
        &permutation_from_seed(active_e.len(), perm_seed ^ 0x9e37),
        leak,
    )?;
    let mi_r = club_mi_upper(
        pv,
        "club.relation",
        &rel.causal.gather_rows(&active_r),
        &rel.confounding.gather_rows(&active_r),
        &permutation_from_seed(active_r.len(), perm_seed ^ 0x79b9),
        leak,
    )?;
    // The contrastive estimate can dip below zero when the conditional is
    // mid-fit; true MI is nonnegative, so only the positive part is penalized.
    // Otherwise the model learns to drive the estimate arbitrarily negative
    // instead of decoupling the halves.
    let l_mi = mi_e.add(&mi_r).relu();

    // Intervention channel: causal rows plus permuted confounding rows.
    let e_i = intervene(
        &ent.causal,
        &ent.confounding,
        &permutation_from_seed(model.num_entities, perm_seed ^ 0x51ed),
    )?;
    let r_i = intervene(
        &rel.causal,
        &rel.confounding,
        &permutation_from_seed(model.num_relations_aug, perm_seed ^ 0xc2b2),
    )?;
    let s_int = model.score_channel(pv, &e_i, &r_i, &queries, t_norm, cfg.without_td)?;
    let l_i = loss_intervention(&s_int.log_softmax_rows(), &targets)?;

    let total = total_loss_var(&l_c, &l_n, &l_mi, &l_i, cfg.lambda1, cfg.lambda2, cfg.lambda3);
    let breakdown = total_loss(
        l_c.scalar(),
        l_n.scalar(),
        l_mi.scalar(),
        l_i.scalar(),
        cfg.lambda1,
        cfg.lambda2,
        cfg.lambda3,
    )?;
    Ok((total, breakdown))
}

pub struct Trainer {
    pub model: Model,
    pub cfg: TrainConfig,
    train_snapshots: Vec<Snapshot>,
    t_lo: usize,
    t_hi: usize,
    opt_main: Adam,
    opt_q: Adam,
    step: u64,
}

impl Trainer {
    /// Set up a trainer, applying training-set noise injection if configured.
    pub fn new(bundle: &DatasetBundle, cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let train = if cfg.noise_rate > 0.0 {
            inject_noise(
                &bundle.train,
                cfg.noise_rate,
                bundle.num_entities,
                cfg.noise_slot(),
                cfg.seed,
            )?
        } else {
            bundle.train.clone()
        };
        let train_snapshots = build_snapshots(&train, bundle.num_entities);
        let (t_lo, t_hi) = train_time_span(bundle);
        let model = Model::new(
            bundle.num_entities,
            bundle.num_relations_aug,
            ModelConfig {
                d: cfg.dim,
                omega: cfg.layers,
                channels: cfg.channels,
                leak: cfg.leak,
                ..Default::default()
            },
            cfg.seed,
        );
        let mut opt_main = Adam::new(cfg.lr);
        opt_main.clip_norm = Some(cfg.grad_clip);
        let mut opt_q = Adam::new(cfg.q_lr);
        opt_q.clip_norm = Some(cfg.grad_clip);
        Ok(Trainer {
            model,
            cfg,
            train_snapshots,
            t_lo,
            t_hi,
            opt_main,
            opt_q,
            step: 0,
        })
    }

    /// One inner update of the variational estimators on detached rows.
    fn q_update(&mut self, hist: &[&Snapshot], current: &Snapshot) -> Result<()> {
        let leak = self.model.cfg.leak;
        // Detached forward: values only.
        let (e_c, e_n, r_c, r_n) = {
            let tape = Tape::new();
            let pv = self.model.store.bind(&tape);
            let state = encode_history(&pv, hist, &self.model.encoder_cfg())?;
            let ent = decouple(&pv, "disent.entity", &state.entities, leak)?;
            let rel = decouple(&pv, "disent.relation", &state.relations, leak)?;
            let active_e = current.active_entities();
            let active_r = current.active_relations();
            (
                ent.causal.gather_rows(&active_e).value(),
                ent.confounding.gather_rows(&active_e).value(),
                rel.causal.gather_rows(&active_r).value(),
                rel.confounding.gather_rows(&active_r).value(),
            )
        };
        for _ in 0..self.cfg.q_steps {
            let tape = Tape::new();
            let pv = self.model.store.bind(&tape);
            let ll = club_loglik(
                &pv,
                "club.entity",
                &constant(&tape, e_c.clone()),
                &constant(&tape, e_n.clone()),
                leak,
            )?
            .add(&club_loglik(
                &pv,
                "club.relation",
                &constant(&tape, r_c.clone()),
                &constant(&tape, r_n.clone()),
                leak,
            )?);
            let grads = backward(&ll.neg());
            let q_grads = pv.grads(&grads, |n| !Model::is_main_param(n));
            self.opt_q.step(&mut self.model.store, &q_grads);
        }
        Ok(())
    }

    /// One pass over the training timestamps in chronological order.
    pub fn train_epoch(&mut self) -> Result<LossBreakdown> {
        let snapshots = self.train_snapshots.clone();
        let mut sum = LossBreakdown::default();
        let mut count = 0usize;
        for idx in 0..snapshots.len() {
            if snapshots[idx].edges.is_empty() {
                continue;
            }
            let start = idx.saturating_sub(self.cfg.history_len);
            let hist: Vec<&Snapshot> = snapshots[start..idx].iter().collect();
            let current = &snapshots[idx];
            let t_norm = normalize_time(current.time, self.t_lo, self.t_hi);
            self.step += 1;
            let perm_seed = self.cfg.seed.wrapping_mul(0x100000001b3).wrapping_add(self.step);

            if !self.cfg.without_ce && self.cfg.q_steps > 0 {
                self.q_update(&hist, current)?;
            }

            let tape = Tape::new();
            let pv = self.model.store.bind(&tape);
            let (loss, breakdown) =
                pipeline_loss(&self.model, &pv, &hist, current, &self.cfg, t_norm, perm_seed)
                    .map_err(|e| {
                        TkgrError::Numeric(format!(
                            "timestamp {} ({e})",
                            current.time
                        ))
                    })?;
            if !breakdown.total.is_finite() {
                return Err(TkgrError::Numeric(format!(
                    "non-finite loss at timestamp {}",
                    current.time
                )));
            }
            let grads = backward(&loss);
            let main_grads = pv.grads(&grads, Model::is_main_param);
            self.opt_main.step(&mut self.model.store, &main_grads);

            sum.l_causal += breakdown.l_causal;
            sum.l_confounding += breakdown.l_confounding;
            sum.l_mi += breakdown.l_mi;
            sum.l_intervention += breakdown.l_intervention;
            sum.total += breakdown.total;
            count += 1;
        }
        let n = count.max(1) as f64;
        Ok(LossBreakdown {
            l_causal: sum.l_causal / n,
            l_confounding: sum.l_confounding / n,
            l_mi: sum.l_mi / n,
            l_intervention: sum.l_intervention / n,
            total: sum.total / n,
            lambda1: self.cfg.lambda1,
            lambda2: self.cfg.lambda2,
            lambda3: self.cfg.lambda3,
        })
    }
}

/// Result of a full training run.
pub struct TrainOutcome {
    pub model: Model,
    pub epoch_losses: Vec<LossBreakdown>,
    pub best_valid: Option<RankOutcome>,
    pub test: Option<RankOutcome>,
}

/// Train with early stopping on validation filtered MRR (patience from the
/// config), restore the best parameters, and evaluate the test split.
pub fn run_training(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&str),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(bundle, cfg.clone())?;
    let mut epoch_losses = Vec::new();
    let mut best_mrr = f64::NEG_INFINITY;
    let mut best_store = trainer.model.store.clone();
    let mut best_valid = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        let breakdown = trainer.train_epoch()?;
        log(&format!("epoch={} {}", epoch + 1, breakdown.log_line()));
        epoch_losses.push(breakdown);

        if bundle.valid.is_empty() {
            best_store = trainer.model.store.clone();
            continue;
        }
        let valid = evaluate(&trainer.model, bundle, Split::Valid, cfg)?;
        log(&valid.log_line("valid"));
        if valid.mrr > best_mrr {
            best_mrr = valid.mrr;
            best_store = trainer.model.store.clone();
            best_valid = Some(valid);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log(&format!("early stop at epoch {} (patience {})", epoch + 1, cfg.patience));
                break;
            }
        }
    }

    let mut model = trainer.model;
    model.store = best_store;
    let test = if bundle.test.is_empty() {
        None
    } else {
        let t = evaluate(&model, bundle, Split::Test, cfg)?;
        log(&t.log_line("test"));
        Some(t)
    };
    Ok(TrainOutcome {
        model,
        epoch_losses,
        best_valid,
        test,
    })
}

/// Snapshot of all parameter values, for change detection in tests.
pub fn store_fingerprint(model: &Model) -> Vec<(String, Matrix)> {
    model
        .store
        .iter()
        .map(|(n, m)| (n.to_string(), m.clone()))
        .collect()
}
