//! Evolution encoder: rolls entity and relation embeddings forward through a
//! history window of snapshots with a stacked relational graph convolution and
//! per-step entity/relation GRUs.

use ndarray::Array1;

use crate::autodiff::{concat_cols, constant, Matrix, Var};
use crate::dataset::Snapshot;
use crate::error::{Result, TkgrError};
use crate::nn::{gru_step, ParamVars};

/// Composition of a subject embedding with a relation embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiMode {
    /// Elementwise sum (the default, parameter-free option).
    Add,
    /// One-dimensional convolution; reserved behind config, not implemented.
    Conv1d,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderConfig {
    pub omega: usize,
    /// Negative-side slope of the deterministic leaky rectifier.
    pub leak: f64,
    pub phi: PhiMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            omega: 2,
            leak: 0.2,
            phi: PhiMode::Add,
        }
    }
}

/// Compose per-edge subject rows with relation rows.
pub fn compose_phi(subj: &Var, rel: &Var, mode: PhiMode) -> Result<Var> {
    let (sr, sc) = subj.shape();
    let (rr, rc) = rel.shape();
    if (sr, sc) != (rr, rc) {
        return Err(TkgrError::Shape(format!(
            "compose_phi: {sr}x{sc} vs {rr}x{rc}"
        )));
    }
    match mode {
        PhiMode::Add => Ok(subj.add(rel)),
        PhiMode::Conv1d => Err(TkgrError::Unsupported(
            "1-D convolution composition is a config stub".into(),
        )),
    }
}

/// One graph-convolution layer over a snapshot.
///
/// For each entity `o`:
/// `out_o = rect( sum_{(s,r,o)} (1/d_o) * W1 * phi(E_in[s], R[r]) + W2 * E_in[o] )`.
/// Entities without incoming edges receive only the self-transform term.
pub fn rgcn_layer(
    pv: &ParamVars,
    layer: usize,
    snapshot: &Snapshot,
    e_in: &Var,
    relations: &Var,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let (num_entities, _) = e_in.shape();
    let w1 = pv.get(&format!("encoder.W1.{layer}"));
    let w2 = pv.get(&format!("encoder.W2.{layer}"));
    let self_term = e_in.matmul(w2);
    let pre = if snapshot.edges.is_empty() {
        self_term
    } else {
        let subj: Vec<usize> = snapshot.edges.iter().map(|&(s, _, _)| s).collect();
        let rel: Vec<usize> = snapshot.edges.iter().map(|&(_, r, _)| r).collect();
        let obj: Vec<usize> = snapshot.edges.iter().map(|&(_, _, o)| o).collect();
        let norm: Array1<f64> = obj
            .iter()
            .map(|&o| 1.0 / snapshot.in_degree[o].max(1) as f64)
            .collect();
        let messages = compose_phi(&e_in.gather_rows(&subj), &relations.gather_rows(&rel), cfg.phi)?
            .matmul(w1)
            .scale_rows(&norm);
        messages.scatter_add_rows(&obj, num_entities).add(&self_term)
    };
    let out = pre.leaky_relu(cfg.leak);
    if !out.value().iter().all(|x| x.is_finite()) {
        return Err(TkgrError::Numeric(format!("rgcn_layer {layer}")));
    }
    Ok(out)
}

/// GRU update of the entity matrix from the aggregated snapshot output.
pub fn entity_gru_step(pv: &ParamVars, e_prev: &Var, e_agg: &Var) -> Result<Var> {
    if e_prev.shape() != e_agg.shape() {
        return Err(TkgrError::Shape(format!(
            "entity_gru_step: {:?} vs {:?}",
            e_prev.shape(),
            e_agg.shape()
        )));
    }
    Ok(gru_step(pv, "encoder.egru", e_prev, e_agg))
}

/// Per-relation mean pool over the entities incident to that relation's edges
/// (subject and object endpoints, counted per edge), concatenated with the
/// static relation embedding. Relations absent at this snapshot contribute a
/// zero vector for the pooled half.
pub fn relation_pool(e_prev: &Var, snapshot: &Snapshot, r0: &Var) -> Var {
    let (num_rel_aug, _) = r0.shape();
    if snapshot.edges.is_empty() {
        let (_, d) = e_prev.shape();
        let zeros = constant(&tape_of(e_prev), Matrix::zeros((num_rel_aug, d)));
        return concat_cols(&[&zeros, r0]);
    }
    let mut entity_idx = Vec::with_capacity(snapshot.edges.len() * 2);
    let mut rel_idx = Vec::with_capacity(snapshot.edges.len() * 2);
    let mut counts = vec![0usize; num_rel_aug];
    for &(s, r, o) in &snapshot.edges {
        entity_idx.push(s);
        rel_idx.push(r);
        entity_idx.push(o);
        rel_idx.push(r);
        counts[r] += 2;
    }
    let weights: Array1<f64> = rel_idx
        .iter()
        .map(|&r| 1.0 / counts[r] as f64)
        .collect();
    let pooled = e_prev
        .gather_rows(&entity_idx)
        .scale_rows(&weights)
        .scatter_add_rows(&rel_idx, num_rel_aug);
    concat_cols(&[&pooled, r0])
}

// concat_cols needs a tape handle for the zero block; lift it off an existing var.
fn tape_of(v: &Var) -> std::rc::Rc<crate::autodiff::Tape> {
    v.tape_handle()
}

/// GRU update of the relation matrix from the pooled 2d-wide input.
pub fn relation_gru_step(pv: &ParamVars, r_prev: &Var, r_input: &Var) -> Result<Var> {
    let (n, d) = r_prev.shape();
    let (ni, di) = r_input.shape();
    if ni != n || di != 2 * d {
        return Err(TkgrError::Shape(format!(
            "relation_gru_step: hidden {n}x{d}, input {ni}x{di}"
        )));
    }
    Ok(gru_step(pv, "encoder.rgru", r_prev, r_input))
}

/// The encoder output after consuming a history window.
pub struct EvolvedState {
    pub entities: Var,
    pub relations: Var,
    pub time: Option<usize>,
}

/// Roll `(E0, R0)` through the given time-ordered snapshots: per snapshot the
/// relation matrix evolves first (pool + GRU), then the entity matrix passes
/// through the stacked convolution layers and its own GRU.
pub fn encode_history(
    pv: &ParamVars,
    snapshots: &[&Snapshot],
    cfg: &EncoderConfig,
) -> Result<EvolvedState> {
    let mut entities = pv.get("encoder.E0").clone();
    let mut relations = pv.get("encoder.R0").clone();
    let r0 = pv.get("encoder.R0");
    let mut last_time = None;
    for window in snapshots.windows(2) {
        debug_assert!(window[0].time < window[1].time, "snapshots must be time-ordered");
    }
    for snapshot in snapshots {
        let pooled = relation_pool(&entities, snapshot, r0);
        relations = relation_gru_step(pv, &relations, &pooled)?;
        let mut agg = entities.clone();
        for layer in 0..cfg.omega {
            agg = rgcn_layer(pv, layer, snapshot, &agg, &relations, cfg)?;
        }
        entities = entity_gru_step(pv, &entities, &agg)?;
        last_time = Some(snapshot.time);
    }
    Ok(EvolvedState {
        entities,
        relations,
        time: last_time,
    })
}
