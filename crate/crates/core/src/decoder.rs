//! Temporal-gap decoder: affine time-interval vectors and a convolutional
//! scoring head that stacks (subject, relation, short-interval, long-interval)
//! rows, convolves them with 4x3 kernels, and matches the result against every
//! candidate entity row.

use ndarray::{Array2, Axis};

use crate::autodiff::{concat_cols, Matrix, Var};
use crate::error::{Result, TkgrError};
use crate::nn::ParamVars;

/// Short- and long-interval vectors, affine in the normalized query time.
pub fn time_vectors(pv: &ParamVars, t_norm: f64) -> (Var, Var) {
    let t_s = pv.get("timevec.alpha_s").scale(t_norm).add(pv.get("timevec.beta_s"));
    let t_l = pv.get("timevec.alpha_l").scale(t_norm).add(pv.get("timevec.beta_l"));
    (t_s, t_l)
}

/// Score every entity for a batch of queries on one channel.
///
/// `subj` and `rel` are `B x d` gathered rows, `t_s`/`t_l` are `1 x d` and
/// broadcast over the batch, and `candidates` is the channel's full entity
/// matrix. Returns raw scores `B x num_entities`.
pub fn conv_transe_score(
    pv: &ParamVars,
    subj: &Var,
    rel: &Var,
    t_s: &Var,
    t_l: &Var,
    candidates: &Var,
) -> Result<Var> {
    let (batch, d) = subj.shape();
    for (name, v) in [("rel", rel)] {
        if v.shape() != (batch, d) {
            return Err(TkgrError::Shape(format!(
                "conv_transe_score: {name} is {:?}, want {batch}x{d}",
                v.shape()
            )));
        }
    }
    for (name, v) in [("t_s", t_s), ("t_l", t_l)] {
        if v.shape() != (1, d) {
            return Err(TkgrError::Shape(format!(
                "conv_transe_score: {name} is {:?}, want 1x{d}",
                v.shape()
            )));
        }
    }
    if candidates.shape().1 != d {
        return Err(TkgrError::Shape(format!(
            "conv_transe_score: candidate width {} != {d}",
            candidates.shape().1
        )));
    }
    let broadcast = vec![0usize; batch];
    let t_s_b = t_s.gather_rows(&broadcast);
    let t_l_b = t_l.gather_rows(&broadcast);
    let stacked = concat_cols(&[subj, rel, &t_s_b, &t_l_b]);
    let hidden = stacked
        .conv4x3(pv.get("decoder.kernels"), d)
        .matmul(pv.get("decoder.fc.w"))
        .add_row(pv.get("decoder.fc.b"))
        .relu();
    Ok(hidden.matmul(&candidates.transpose()))
}

/// Softmax over entities for one score row.
pub fn predict_distribution(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// Row-wise softmax of a raw score matrix.
pub fn predict_distribution_rows(scores: &Matrix) -> Matrix {
    let mut out = Array2::zeros(scores.dim());
    for (i, row) in scores.axis_iter(Axis(0)).enumerate() {
        let p = predict_distribution(row.as_slice().unwrap());
        for (j, v) in p.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    out
}
