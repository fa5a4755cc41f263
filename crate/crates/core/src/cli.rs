//! Command-line front end: dataset preparation and statistics, training with
//! a written run manifest, checkpoint evaluation, and the experiment suites.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::{parse_config_file, TrainConfig};
use crate::dataset::{self, DatasetBundle};
use crate::error::{Result, TkgrError};
use crate::eval::{evaluate, Split};
use crate::experiments::{format_table, gradient_check, run_ablation, run_noise_suite, sweep_lambda};
use crate::model::{Model, ModelConfig};
use crate::train::run_training;

#[derive(Parser)]
#[command(name = "tkgr", about = "Temporal knowledge graph extrapolation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Data source and configuration flags shared by most subcommands.
#[derive(Args, Clone, Default)]
pub struct CommonOpts {
    /// Directory holding train.txt / valid.txt / test.txt.
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    /// Use the built-in periodic synthetic benchmark instead of files.
    #[arg(long)]
    pub synthetic: bool,
    /// Named benchmark whose default block to start from (ICEWS14, ICEWS18,
    /// ICEWS05-15, YAGO, WIKI, GDELT).
    #[arg(long)]
    pub dataset: Option<String>,
    /// Raw timestamp units per snapshot (inferred when omitted).
    #[arg(long)]
    pub interval: Option<u64>,
    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub history_len: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Disable one component: `td` (time vectors) or `ce` (causal enhancement).
    #[arg(long)]
    pub ablate: Option<String>,
    /// Fraction of training facts to corrupt before training.
    #[arg(long)]
    pub noise_rate: Option<f64>,
}

impl CommonOpts {
    /// Resolve precedence: dataset defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match self.dataset.as_deref() {
            Some(name) => TrainConfig::dataset_defaults(name).ok_or_else(|| {
                TkgrError::Config(format!("no default block for dataset `{name}`"))
            })?,
            None => TrainConfig::default(),
        };
        if let Some(path) = &self.config {
            for (key, value) in parse_config_file(path)? {
                if key == "dataset" {
                    cfg = TrainConfig::dataset_defaults(&value).ok_or_else(|| {
                        TkgrError::Config(format!("no default block for dataset `{value}`"))
                    })?;
                }
            }
            // Second pass so `dataset` never clobbers explicit keys regardless
            // of position in the file.
            for (key, value) in parse_config_file(path)? {
                cfg.set(&key, &value)?;
            }
        }
        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        over!(dim, layers, history_len, channels, lambda1, lambda2, lambda3, epochs, lr, seed, patience, noise_rate);
        match self.ablate.as_deref() {
            None => {}
            Some("td") => cfg.without_td = true,
            Some("ce") => cfg.without_ce = true,
            Some(other) => {
                return Err(TkgrError::Config(format!(
                    "unknown ablation `{other}` (expected td or ce)"
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_data(&self) -> Result<DatasetBundle> {
        match (&self.dataset_dir, self.synthetic) {
            (Some(_), true) => Err(TkgrError::Config(
                "--dataset-dir and --synthetic are mutually exclusive".into(),
            )),
            (Some(dir), false) => dataset::load_bundle(dir, self.interval),
            (None, true) => Ok(crate::synthetic::periodic_bundle()),
            (None, false) => Err(TkgrError::Config(
                "choose a data source: --dataset-dir DIR or --synthetic".into(),
            )),
        }
    }

    /// Hex digest identifying the exact input data.
    pub fn fingerprint(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        match (&self.dataset_dir, self.synthetic) {
            (Some(dir), _) => {
                for file in ["train.txt", "valid.txt", "test.txt"] {
                    let path = dir.join(file);
                    let bytes = fs::read(&path).map_err(|source| TkgrError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    hasher.update(file.as_bytes());
                    hasher.update((bytes.len() as u64).to_le_bytes());
                    hasher.update(&bytes);
                }
            }
            (None, _) => hasher.update(b"builtin periodic synthetic v1"),
        }
        Ok(format!("{:x}", hasher.finalize()))
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a dataset directory and report its statistics.
    Prepare {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Print the dataset statistics table.
    Stats {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train a model, writing a run manifest, checkpoint, and metrics.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory for manifest, checkpoint, and metrics.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved checkpoint on the valid or test split.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to score (`valid` or `test`).
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train the full model and both single-component ablations.
    Ablate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Noise-robustness curve: full model vs the causal-enhancement ablation
    /// at each corruption rate.
    Noise {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated corruption rates, e.g. `0.0,0.1,0.2`.
        #[arg(long, default_value = "0.0,0.1,0.2")]
        rates: String,
    },
    /// Sweep one loss weight over a comma-separated value grid.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Which weight to sweep: lambda1, lambda2, or lambda3.
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "0.0,0.1,0.3,0.5,1.0")]
        values: String,
    },
    /// Compare every pipeline gradient against central finite differences.
    GradCheck {
        /// Perturb this tensor's analytic gradient to prove detection works.
        #[arg(long)]
        fault: Option<String>,
        /// Maximum tolerated relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

/// Everything needed to reproduce one training run, written before it starts.
#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub data_source: String,
    pub data_fingerprint: String,
    pub seed: u64,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| TkgrError::Config(format!("`{t}` is not a number")))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| TkgrError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn stats_text(bundle: &DatasetBundle) -> String {
    let s = dataset::stats(bundle);
    format!(
        "entities\t{}\nrelations\t{}\ntrain_facts\t{}\nvalid_facts\t{}\ntest_facts\t{}\ntimestamps\t{}\ntime_unit\t{}\n",
        s.num_entities,
        s.num_relations,
        s.train_facts,
        s.valid_facts,
        s.test_facts,
        s.num_timestamps,
        s.time_unit
    )
}

/// Run one parsed command, printing through `out`. Returns the process exit
/// code: 0 on success; the caller maps errors to 1 (runtime) or 2 (usage).
pub fn run(cli: Cli, out: &mut dyn FnMut(&str)) -> Result<()> {
    match cli.command {
        Command::Prepare { common } => {
            let bundle = common.load_data()?;
            out(&format!("dataset ok, fingerprint {}", common.fingerprint()?));
            out(stats_text(&bundle).trim_end());
        }
        Command::Stats { common } => {
            let bundle = common.load_data()?;
            out(stats_text(&bundle).trim_end());
        }
        Command::Train { common, out: dir } => {
            let cfg = common.resolve()?;
            let bundle = common.load_data()?;
            fs::create_dir_all(&dir).map_err(|source| TkgrError::Io {
                path: dir.clone(),
                source,
            })?;
            let manifest = RunManifest {
                command: "train".into(),
                config: cfg.to_flat(),
                data_source: common
                    .dataset_dir
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "synthetic".into()),
                data_fingerprint: common.fingerprint()?,
                seed: cfg.seed,
                checkpoint_path: dir.join("model.ckpt"),
                metrics_path: dir.join("metrics.txt"),
            };
            let manifest_json = serde_json::to_string_pretty(&manifest)
                .map_err(|e| TkgrError::Config(e.to_string()))?;
            write_text(&dir.join("run.json"), &manifest_json)?;

            let outcome = run_training(&bundle, &cfg, out)?;
            checkpoint::save(&outcome.model.store, &manifest.checkpoint_path)?;
            let mut metrics = String::new();
            if let Some(v) = &outcome.best_valid {
                metrics.push_str(&v.log_line("valid"));
                metrics.push('\n');
            }
            if let Some(t) = &outcome.test {
                metrics.push_str(&t.log_line("test"));
                metrics.push('\n');
                out(&t.log_line("test"));
            }
            write_text(&manifest.metrics_path, &metrics)?;
            out(&format!("wrote {}", dir.display()));
        }
        Command::Eval {
            common,
            checkpoint: ckpt,
            split,
        } => {
            let split = match split.as_str() {
                "valid" => Split::Valid,
                "test" => Split::Test,
                other => {
                    return Err(TkgrError::Config(format!(
                        "unknown split `{other}` (expected valid or test)"
                    )))
                }
            };
            let cfg = common.resolve()?;
            let bundle = common.load_data()?;
            let store = checkpoint::load(&ckpt)?;
            let model = Model::from_store(
                store,
                ModelConfig {
                    d: cfg.dim,
                    omega: cfg.layers,
                    channels: cfg.channels,
                    leak: cfg.leak,
                    ..Default::default()
                },
            );
            let outcome = evaluate(&model, &bundle, split, &cfg)?;
            out(&outcome.log_line(split.name()));
        }
        Command::Ablate { common } => {
            let cfg = common.resolve()?;
            let bundle = common.load_data()?;
            let rows = run_ablation(&bundle, &cfg, out)?;
            out(format_table(&rows).trim_end());
        }
        Command::Noise { common, rates } => {
            let cfg = common.resolve()?;
            let bundle = common.load_data()?;
            let rates = parse_f64_list(&rates)?;
            let rows = run_noise_suite(&bundle, &cfg, &rates, out)?;
            out(format_table(&rows).trim_end());
        }
        Command::Sweep {
            common,
            target,
            values,
        } => {
            let cfg = common.resolve()?;
            let bundle = common.load_data()?;
            let values = parse_f64_list(&values)?;
            let rows = sweep_lambda(&bundle, &cfg, &target, &values, out)?;
            out(format_table(&rows).trim_end());
        }
        Command::GradCheck { fault, tol } => {
            let report = gradient_check(fault.as_deref())?;
            for (name, err) in &report.per_tensor {
                out(&format!("{name}\t{err:.3e}"));
            }
            out(&format!(
                "checked {} elements, max relative error {:.3e}",
                report.checked, report.max_rel_err
            ));
            if !report.passes(tol) {
                return Err(TkgrError::Numeric(format!(
                    "gradient audit failed: {:.3e} >= {tol:.1e}",
                    report.max_rel_err
                )));
            }
            out("gradient audit passed");
        }
    }
    Ok(())
}

/// Usage and configuration mistakes exit 2; runtime failures exit 1.
pub fn exit_code_for(err: &TkgrError) -> i32 {
    match err {
        TkgrError::Config(_) | TkgrError::Argument(_) | TkgrError::Unsupported(_) => 2,
        _ => 1,
    }
}
