//! Full model: parameter registration for the encoder, disentanglers,
//! variational estimators, time vectors, and the shared decoder, plus the
//! per-channel scoring path used by both training and evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{constant, Matrix, Var};
use crate::decoder::{conv_transe_score, time_vectors};
use crate::encoder::{EncoderConfig, PhiMode};
use crate::error::Result;
use crate::nn::{init_gru, init_mlp2, ParamStore, ParamVars};

#[derive(Clone, Copy, Debug)]
pub struct ModelConfig {
    /// Embedding and hidden width.
    pub d: usize,
    /// Stacked graph-convolution layers per snapshot.
    pub omega: usize,
    /// Decoder channel count (4x3 kernels).
    pub channels: usize,
    /// Negative-side slope of the leaky rectifier.
    pub leak: f64,
    pub phi: PhiMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 200,
            omega: 2,
            channels: 50,
            leak: 0.2,
            phi: PhiMode::Add,
        }
    }
}

pub struct Model {
    pub num_entities: usize,
    pub num_relations_aug: usize,
    pub cfg: ModelConfig,
    pub store: ParamStore,
}

impl Model {
    pub fn new(num_entities: usize, num_relations_aug: usize, cfg: ModelConfig, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d;
        let mut store = ParamStore::new();

        store.init_weight("encoder.E0", num_entities, d, &mut rng);
        store.init_weight("encoder.R0", num_relations_aug, d, &mut rng);
        for l in 0..cfg.omega {
            store.init_weight(&format!("encoder.W1.{l}"), d, d, &mut rng);
            store.init_weight(&format!("encoder.W2.{l}"), d, d, &mut rng);
        }
        init_gru(&mut store, "encoder.egru", d, d, &mut rng);
        init_gru(&mut store, "encoder.rgru", 2 * d, d, &mut rng);

        init_mlp2(&mut store, "disent.entity", d, 2 * d, 2 * d, &mut rng);
        init_mlp2(&mut store, "disent.relation", d, 2 * d, 2 * d, &mut rng);
        for side in ["entity", "relation"] {
            init_mlp2(&mut store, &format!("club.{side}.mu"), d, d, d, &mut rng);
            init_mlp2(&mut store, &format!("club.{side}.logvar"), d, d, d, &mut rng);
        }

        store.init_weight("decoder.kernels", cfg.channels, 12, &mut rng);
        store.init_weight("decoder.fc.w", cfg.channels * d, d, &mut rng);
        store.init_bias("decoder.fc.b", d);
        for name in ["alpha_s", "beta_s", "alpha_l", "beta_l"] {
            store.init_weight(&format!("timevec.{name}"), 1, d, &mut rng);
        }

        Model {
            num_entities,
            num_relations_aug,
            cfg,
            store,
        }
    }

    /// Rebuild a model around a loaded parameter store.
    pub fn from_store(store: ParamStore, cfg: ModelConfig) -> Model {
        let (num_entities, _) = store.get("encoder.E0").dim();
        let (num_relations_aug, _) = store.get("encoder.R0").dim();
        Model {
            num_entities,
            num_relations_aug,
            cfg,
            store,
        }
    }

    pub fn encoder_cfg(&self) -> EncoderConfig {
        EncoderConfig {
            omega: self.cfg.omega,
            leak: self.cfg.leak,
            phi: self.cfg.phi,
        }
    }

    /// Is `name` updated by the main optimizer (everything except the
    /// variational estimators, which own an inner optimizer)?
    pub fn is_main_param(name: &str) -> bool {
        !name.starts_with("club.")
    }

    /// Score all entities for a batch of `(subject, relation)` queries against
    /// one channel's entity/relation matrices. With `without_td` the time
    /// vectors are replaced by zeros.
    pub fn score_channel(
        &self,
        pv: &ParamVars,
        entities: &Var,
        relations: &Var,
        queries: &[(usize, usize)],
        t_norm: f64,
        without_td: bool,
    ) -> Result<Var> {
        let subjects: Vec<usize> = queries.iter().map(|&(s, _)| s).collect();
        let rels: Vec<usize> = queries.iter().map(|&(_, r)| r).collect();
        let subj = entities.gather_rows(&subjects);
        let rel = relations.gather_rows(&rels);
        let (t_s, t_l) = if without_td {
            let tape = entities.tape_handle();
            (
                constant(&tape, Matrix::zeros((1, self.cfg.d))),
                constant(&tape, Matrix::zeros((1, self.cfg.d))),
            )
        } else {
            time_vectors(pv, t_norm)
        };
        conv_transe_score(pv, &subj, &rel, &t_s, &t_l, entities)
    }
}
