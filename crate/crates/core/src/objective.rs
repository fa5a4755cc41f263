//! Training objective: supervised losses on the causal and intervention
//! channels, a uniformity (KL) loss on the confounding channel, and the
//! weighted total.

use crate::autodiff::Var;
use crate::error::{Result, TkgrError};

/// Floor applied to probabilities before logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-epoch (or per-step) loss report.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub l_causal: f64,
    pub l_confounding: f64,
    pub l_mi: f64,
    pub l_intervention: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LossBreakdown {
    pub fn log_line(&self) -> String {
        format!(
            "l_causal={:.6} l_confounding={:.6} l_mi={:.6} l_intervention={:.6} total={:.6}",
            self.l_causal, self.l_confounding, self.l_mi, self.l_intervention, self.total
        )
    }
}

fn check_targets(logp: &Var, targets: &[usize]) -> Result<()> {
    let (rows, vocab) = logp.shape();
    if rows != targets.len() {
        return Err(TkgrError::Shape(format!(
            "loss: {rows} rows vs {} targets",
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
        return Err(TkgrError::Argument(format!(
            "target {bad} out of range for {vocab} entities"
        )));
    }
    Ok(())
}

/// Negative log-likelihood of the targets, averaged over queries.
/// `logp` holds row-wise log-probabilities (log-softmax output).
pub fn loss_causal(logp: &Var, targets: &[usize]) -> Result<Var> {
    check_targets(logp, targets)?;
    let n = targets.len() as f64;
    Ok(logp
        .clamp(PROB_FLOOR.ln(), 0.0)
        .pick(targets)
        .sum_all()
        .scale(-1.0 / n))
}

/// Same contract as [`loss_causal`], applied to the intervention channel.
pub fn loss_intervention(logp: &Var, targets: &[usize]) -> Result<Var> {
    loss_causal(logp, targets)
}

/// Mean over rows of `KL(uniform || p)`, zero iff every row is uniform.
pub fn loss_confounding(logp: &Var) -> Var {
    let (rows, vocab) = logp.shape();
    let clamped = logp.clamp(PROB_FLOOR.ln(), 0.0);
    // KL(u || p) per row = -(1/V) sum_o log p_o - log V.
    clamped
        .sum_all()
        .scale(-1.0 / (rows * vocab) as f64)
        .add_scalar(-(vocab as f64).ln())
}

/// Combine the four parts into the weighted total on the tape.
pub fn total_loss_var(
    l_causal: &Var,
    l_confounding: &Var,
    l_mi: &Var,
    l_intervention: &Var,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
) -> Var {
    l_causal
        .add(&l_confounding.scale(lambda1))
        .add(&l_mi.scale(lambda2))
        .add(&l_intervention.scale(lambda3))
}

/// Scalar bookkeeping for the total objective. Errors name the first
/// non-finite term so a training abort can report it.
pub fn total_loss(
    l_causal: f64,
    l_confounding: f64,
    l_mi: f64,
    l_intervention: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
) -> Result<LossBreakdown> {
    for (name, v) in [
        ("l_causal", l_causal),
        ("l_confounding", l_confounding),
        ("l_mi", l_mi),
        ("l_intervention", l_intervention),
    ] {
        if !v.is_finite() {
            return Err(TkgrError::Numeric(name.into()));
        }
    }
    Ok(LossBreakdown {
        l_causal,
        l_confounding,
        l_mi,
        l_intervention,
        total: l_causal + lambda1 * l_confounding + lambda2 * l_mi + lambda3 * l_intervention,
        lambda1,
        lambda2,
        lambda3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{constant, Tape};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logp_of(rows: Vec<Vec<f64>>) -> Array2<f64> {
        let cols = rows[0].len();
        let mut out = Array2::zeros((rows.len(), cols));
        for (i, row) in rows.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                out[[i, j]] = p.max(PROB_FLOOR).ln();
            }
        }
        out
    }

    #[test]
    fn causal_loss_perfect_prediction_is_zero() {
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(vec![vec![1.0, 0.0, 0.0]]));
        let loss = loss_causal(&logp, &[0]).unwrap().scalar();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn causal_loss_uniform_is_log_v() {
        let v = 8;
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(vec![vec![1.0 / v as f64; v]]));
        let loss = loss_causal(&logp, &[3]).unwrap().scalar();
        assert!((loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn causal_loss_matches_scalar_reference() {
        let rows = vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.3, 0.3, 0.4],
        ];
        let targets = [0usize, 1, 2];
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(rows.clone()));
        let loss = loss_causal(&logp, &targets).unwrap().scalar();
        let expected: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -rows[i][t].ln())
            .sum::<f64>()
            / 3.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn causal_loss_rejects_bad_target() {
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(vec![vec![0.5, 0.5]]));
        assert!(loss_causal(&logp, &[2]).is_err());
    }

    #[test]
    fn confounding_loss_zero_on_uniform() {
        let v = 5;
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(vec![vec![1.0 / v as f64; v]; 3]));
        let loss = loss_confounding(&logp).scalar();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn confounding_loss_large_on_one_hot() {
        // One-hot row with V = 4: dominated by the clamp floor, at least ln 4.
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(vec![vec![1.0, 0.0, 0.0, 0.0]]));
        let loss = loss_confounding(&logp).scalar();
        assert!(loss >= (4.0f64).ln());
    }

    #[test]
    fn confounding_loss_matches_direct_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let v = 6;
        let mut rows = Vec::new();
        for _ in 0..4 {
            let raw: Vec<f64> = (0..v).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / z).collect::<Vec<_>>());
        }
        let tape = Tape::new();
        let logp = constant(&tape, logp_of(rows.clone()));
        let loss = loss_confounding(&logp).scalar();
        let u = 1.0 / v as f64;
        let expected: f64 = rows
            .iter()
            .map(|row| row.iter().map(|p| u * (u.ln() - p.ln())).sum::<f64>())
            .sum::<f64>()
            / rows.len() as f64;
        assert!((loss - expected).abs() < 1e-10, "{loss} vs {expected}");
    }

    #[test]
    fn intervention_loss_equals_causal_on_same_rows() {
        let rows = vec![vec![0.25, 0.5, 0.25], vec![0.6, 0.3, 0.1]];
        let tape = Tape::new();
        let a = constant(&tape, logp_of(rows.clone()));
        let b = constant(&tape, logp_of(rows));
        let targets = [1usize, 0];
        assert_eq!(
            loss_causal(&a, &targets).unwrap().scalar(),
            loss_intervention(&b, &targets).unwrap().scalar()
        );
    }

    #[test]
    fn total_loss_breakdown_invariant() {
        let b = total_loss(1.0, 2.0, 3.0, 4.0, 0.5, 0.5, 0.3).unwrap();
        assert!((b.total - (1.0 + 0.5 * 2.0 + 0.5 * 3.0 + 0.3 * 4.0)).abs() < 1e-9);
        // All lambdas zero: total is the causal part alone.
        let b0 = total_loss(1.7, 9.0, 9.0, 9.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(b0.total, 1.7);
    }

    #[test]
    fn total_loss_affine_in_each_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let parts: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let base = total_loss(parts[0], parts[1], parts[2], parts[3], 0.0, 0.2, 0.4)
                .unwrap()
                .total;
            let bumped = total_loss(parts[0], parts[1], parts[2], parts[3], 1.0, 0.2, 0.4)
                .unwrap()
                .total;
            assert!((bumped - base - parts[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn total_loss_rejects_non_finite_and_names_term() {
        let err = total_loss(1.0, f64::NAN, 0.0, 0.0, 0.5, 0.5, 0.3).unwrap_err();
        assert!(err.to_string().contains("l_confounding"));
    }

    #[test]
    fn total_loss_var_matches_scalar_combination() {
        let tape = Tape::new();
        let c = constant(&tape, array![[0.9]]);
        let n = constant(&tape, array![[0.4]]);
        let mi = constant(&tape, array![[0.2]]);
        let i = constant(&tape, array![[0.7]]);
        let total = total_loss_var(&c, &n, &mi, &i, 0.5, 0.5, 0.3).scalar();
        let expected = total_loss(0.9, 0.4, 0.2, 0.7, 0.5, 0.5, 0.3).unwrap().total;
        assert!((total - expected).abs() < 1e-12);
    }
}
