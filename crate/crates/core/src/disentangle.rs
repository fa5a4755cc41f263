//! Causal/confounding disentanglement: complementary soft masks over each
//! embedding dimension, a variational conditional estimator for the
//! contrastive log-ratio MI upper bound, and intervention features that mix
//! causal rows with permuted confounding rows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward, constant, Matrix, Tape, Var};
use crate::error::{Result, TkgrError};
use crate::nn::{mlp2, Adam, ParamVars};

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// A matrix split into causal and confounding halves by complementary masks.
pub struct DisentangledPair {
    pub causal: Var,
    pub confounding: Var,
    pub mask_causal: Var,
    pub mask_confounding: Var,
}

/// Split `x` with a per-dimension 2-way softmax over mask-net logits.
///
/// The mask net emits `2d` logits per row, read as a (causal, confounding)
/// logit pair per dimension; softmax over each pair yields complementary
/// masks, and each half is the elementwise product of `x` with its mask.
pub fn decouple(pv: &ParamVars, prefix: &str, x: &Var, leak: f64) -> Result<DisentangledPair> {
    let (_, d) = x.shape();
    let logits = mlp2(pv, prefix, x, leak);
    if !logits.value().iter().all(|v| v.is_finite()) {
        return Err(TkgrError::Numeric(format!("{prefix} mask logits")));
    }
    let causal_logit = logits.slice_cols(0, d);
    let confound_logit = logits.slice_cols(d, 2 * d);
    // softmax over a 2-way pair is the sigmoid of the logit difference, so the
    // two masks sum to one by construction.
    let mask_causal = causal_logit.sub(&confound_logit).sigmoid();
    let mask_confounding = confound_logit.sub(&causal_logit).sigmoid();
    Ok(DisentangledPair {
        causal: x.mul(&mask_causal),
        confounding: x.mul(&mask_confounding),
        mask_causal,
        mask_confounding,
    })
}

/// Mean and clamped log-variance of the diagonal-Gaussian variational
/// conditional `q(x_n | x_c)`.
pub fn variational_params(pv: &ParamVars, prefix: &str, x_c: &Var, leak: f64) -> (Var, Var) {
    let mu = mlp2(pv, &format!("{prefix}.mu"), x_c, leak);
    let logvar = mlp2(pv, &format!("{prefix}.logvar"), x_c, leak).clamp(LOGVAR_MIN, LOGVAR_MAX);
    (mu, logvar)
}

/// Mean over rows of `log q(x_n[i] | x_c[i])` under the diagonal Gaussian.
pub fn club_loglik(pv: &ParamVars, prefix: &str, x_c: &Var, x_n: &Var, leak: f64) -> Result<Var> {
    let (rows_c, d) = x_c.shape();
    let (rows_n, dn) = x_n.shape();
    if rows_c != rows_n || d != dn {
        return Err(TkgrError::Shape(format!(
            "club_loglik: {rows_c}x{d} vs {rows_n}x{dn}"
        )));
    }
    let (mu, logvar) = variational_params(pv, prefix, x_c, leak);
    let diff = x_n.sub(&mu);
    let squared_over_var = diff.mul(&diff).mul(&logvar.neg().exp());
    let per_elem = logvar.add(&squared_over_var);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(per_elem
        .sum_all()
        .scale(-0.5 / rows_c as f64)
        .add_scalar(-0.5 * d as f64 * ln_2pi))
}

/// Contrastive log-ratio upper bound contribution:
/// matched-pair log-likelihood minus the permuted-pair log-likelihood.
pub fn club_mi_upper(
    pv: &ParamVars,
    prefix: &str,
    x_c: &Var,
    x_n: &Var,
    perm: &[usize],
    leak: f64,
) -> Result<Var> {
    validate_permutation(perm, x_c.shape().0)?;
    let positive = club_loglik(pv, prefix, x_c, x_n, leak)?;
    let negative = club_loglik(pv, prefix, &x_c.gather_rows(perm), x_n, leak)?;
    Ok(positive.sub(&negative))
}

fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(TkgrError::Argument(format!(
            "permutation length {} for {n} rows",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(TkgrError::Argument("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Uniform random permutation of `0..n`, deterministic in the seed.
pub fn permutation_from_seed(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    perm
}

/// Fit the variational conditional under `prefix` to sample pairs by gradient
/// ascent on [`club_loglik`]. Used by the estimator calibration demo and the
/// acceptance suite; training interleaves smaller versions of this update.
pub fn fit_club(
    store: &mut crate::nn::ParamStore,
    prefix: &str,
    x_c: &Matrix,
    x_n: &Matrix,
    steps: usize,
    lr: f64,
    leak: f64,
) -> Result<()> {
    let mut opt = Adam::new(lr);
    opt.clip_norm = None;
    for _ in 0..steps {
        let tape = Tape::new();
        let pv = store.bind(&tape);
        let ll = club_loglik(
            &pv,
            prefix,
            &constant(&tape, x_c.clone()),
            &constant(&tape, x_n.clone()),
            leak,
        )?;
        let grads = backward(&ll.neg());
        let g = pv.grads(&grads, |n| n.starts_with(prefix));
        opt.step(store, &g);
    }
    Ok(())
}

/// Evaluate the contrastive MI bound with a seeded negative permutation.
pub fn estimate_mi(
    store: &crate::nn::ParamStore,
    prefix: &str,
    x_c: &Matrix,
    x_n: &Matrix,
    seed: u64,
    leak: f64,
) -> Result<f64> {
    let tape = Tape::new();
    let pv = store.bind(&tape);
    let perm = permutation_from_seed(x_c.nrows(), seed);
    Ok(club_mi_upper(
        &pv,
        prefix,
        &constant(&tape, x_c.clone()),
        &constant(&tape, x_n.clone()),
        &perm,
        leak,
    )?
    .scalar())
}

/// Intervention feature: causal rows plus permuted confounding rows.
pub fn intervene(x_c: &Var, x_n: &Var, perm: &[usize]) -> Result<Var> {
    if x_c.shape() != x_n.shape() {
        return Err(TkgrError::Shape(format!(
            "intervene: {:?} vs {:?}",
            x_c.shape(),
            x_n.shape()
        )));
    }
    validate_permutation(perm, x_c.shape().0)?;
    Ok(x_c.add(&x_n.gather_rows(perm)))
}
