//! End-to-end experiment orchestration: a pure function of the config that
//! produces checkpoints plus the configured report artifacts.

use crate::checkpoint::{save_checkpoint, save_permutation};
use crate::config::{
    ExperimentConfig, Matching, MethodConfig, SourceConfig, Suite,
};
use crate::error::{CliError, Result};
use crate::report::{
    self, condition_rows, SrankRow, StitchRow,
};
use llfc::conditions::{condition_report, stable_rank, stitch_error};
use llfc::connectivity::{error_curve, llfc_metrics, spawn_pair, AlphaGrid};
use llfc::data::{split, Dataset};
use llfc::nn::{classification_error, forward, init_params, train, MlpSpec, ModelParams};
use llfc::permutation::{activation_matching, apply, weight_matching, LayerPermutation};
use std::path::{Path, PathBuf};

/// Build the full dataset described by the config (before any split).
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = match &cfg.dataset.source {
        SourceConfig::Blobs {
            seed,
            n_per_class,
            classes,
            dim,
            spread,
        } => llfc::data::gen_blobs(*seed, *n_per_class, *classes, *dim, *spread)?,
        SourceConfig::Spirals {
            seed,
            n_per_class,
            classes,
            noise,
        } => llfc::data::gen_spirals(*seed, *n_per_class, *classes, *noise)?,
        SourceConfig::Idx { images, labels, classes } => {
            let d = llfc::data::load_idx(images, labels)?;
            if d.classes != *classes {
                return Err(CliError::Config(format!(
                    "IDX labels imply {} classes, config says {classes}",
                    d.classes
                )));
            }
            d
        }
    };
    Ok(data)
}

/// Train/analysis views of the dataset: identical when no split is set.
pub fn build_split(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let full = build_dataset(cfg)?;
    match cfg.dataset.train_fraction {
        Some(f) => {
            let (tr, te) = split(&full, f, cfg.dataset.split_seed)?;
            Ok((tr, te))
        }
        None => Ok((full.clone(), full)),
    }
}

/// The trained pair plus the permutation applied to model B (identity when
/// no matching happened).
pub struct TrainedPair {
    pub a: ModelParams,
    pub b: ModelParams,
    pub pi: LayerPermutation,
}

/// Train the pair dictated by the method block. For independent methods the
/// returned `b` already has the matching permutation applied.
pub fn train_pair(cfg: &ExperimentConfig, train_data: &Dataset) -> Result<TrainedPair> {
    let spec = MlpSpec::new(cfg.model.dims.clone())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let base = cfg.training.to_train_config();
    match &cfg.method {
        MethodConfig::Spawn {
            k_steps,
            seed_a,
            seed_b,
        } => {
            let (a, b) = spawn_pair(&spec, train_data, &base, *k_steps, *seed_a, *seed_b)?;
            let pi = LayerPermutation::identity(&a);
            Ok(TrainedPair { a, b, pi })
        }
        MethodConfig::Independent {
            seed_a,
            seed_b,
            matching,
        } => {
            let run = |seed: u64| -> Result<ModelParams> {
                let mut c = base.clone();
                c.seed = seed;
                let init = init_params(&spec, seed);
                let (trained, _) = train(&init, train_data, &c)?;
                Ok(trained)
            };
            let a = run(*seed_a)?;
            let b = run(*seed_b)?;
            let pi = match matching {
                Matching::None => LayerPermutation::identity(&a),
                Matching::Weight => weight_matching(&a, &b, cfg.training.seed, 100)?,
                Matching::Activation => {
                    let ta = forward(&a, &train_data.x)?;
                    let tb = forward(&b, &train_data.x)?;
                    activation_matching(&ta, &tb)?
                }
            };
            let b = apply(&b, &pi)?;
            Ok(TrainedPair { a, b, pi })
        }
    }
}

/// Run the whole pipeline and return every file written.
pub fn run_experiment(cfg: &ExperimentConfig, raw: &str) -> Result<Vec<PathBuf>> {
    let hash = report::config_hash(raw);
    let dir: &Path = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let (train_data, eval_data) = build_split(cfg)?;
    let pair = train_pair(cfg, &train_data)?;

    let mut files = Vec::new();
    let ckpt_a = dir.join("model_a.bin");
    let ckpt_b = dir.join("model_b.bin");
    save_checkpoint(&pair.a, &ckpt_a)?;
    save_checkpoint(&pair.b, &ckpt_b)?;
    files.push(ckpt_a);
    files.push(ckpt_b);
    if !pair.pi.is_identity() {
        let pi_path = dir.join("permutation.json");
        save_permutation(&pair.pi, &pi_path)?;
        files.push(pi_path);
    }

    let grid = AlphaGrid::uniform(cfg.analysis.alpha_points);
    let formats = &cfg.output.formats;
    for suite in &cfg.analysis.suites {
        match suite {
            Suite::Curve => {
                let (curve, barrier) = error_curve(&pair.a, &pair.b, &eval_data, &grid)?;
                files.extend(report::emit_curve(
                    grid.values(),
                    &curve,
                    barrier,
                    dir,
                    formats,
                    &hash,
                )?);
            }
            Suite::Llfc => {
                let rep = llfc_metrics(&pair.a, &pair.b, &eval_data, &grid)?;
                files.extend(report::emit_llfc(&rep, dir, formats, &hash)?);
            }
            Suite::Conditions => {
                let rep = condition_report(&pair.a, &pair.b, &eval_data, &grid)?;
                let rows = condition_rows(&rep, pair.a.layers());
                files.extend(report::emit_conditions(&rows, dir, formats, &hash)?);
            }
            Suite::Stitch => {
                let rows = stitch_rows(&pair.a, &pair.b, &eval_data)?;
                files.extend(report::emit_stitch(&rows, dir, formats, &hash)?);
            }
            Suite::Srank => {
                let rows = srank_rows(&pair.a, &pair.b)?;
                files.extend(report::emit_srank(&rows, dir, formats, &hash)?);
            }
        }
    }
    Ok(files)
}

pub fn stitch_rows(a: &ModelParams, b: &ModelParams, data: &Dataset) -> Result<Vec<StitchRow>> {
    let err_a = classification_error(a, data)?;
    let err_b = classification_error(b, data)?;
    (1..a.layers())
        .map(|layer| {
            Ok(StitchRow {
                layer,
                err_a_bottom: stitch_error(a, b, layer, data)?,
                err_b_bottom: stitch_error(b, a, layer, data)?,
                err_a,
                err_b,
            })
        })
        .collect()
}

pub fn srank_rows(a: &ModelParams, b: &ModelParams) -> Result<Vec<SrankRow>> {
    let mut rows = Vec::new();
    for (name, m) in [("a", a), ("b", b)] {
        for (i, w) in m.weights.iter().enumerate() {
            rows.push(SrankRow {
                model: name.to_string(),
                layer: i + 1,
                stable_rank: stable_rank(w)?,
            });
        }
    }
    Ok(rows)
}
