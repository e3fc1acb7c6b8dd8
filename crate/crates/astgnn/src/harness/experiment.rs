//! The full experiment loop: per seed, pretrain a dense model, sweep AGS
//! sparsity levels, and run the reinitialise-and-retrain control for every
//! level, evaluating each result on the held-out test split.
//!
//! Failures are recorded per cell (seed x level x variant) and the run
//! continues; a partial `curves.csv` is still written.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Serialize;

use crate::data::save_csv_dataset;
use crate::error::{Error, Result};
use crate::flops::cost_report;
use crate::graph::{EdgeMask, GateParams};
use crate::model::Model;
use crate::sparsify::{ags_sparsify, current_sparsity, pretrain, reinit_retrain, SparsifyConfig};

use super::{
    deterministic_mode, evaluate_denormalised, level_dir, load_series, prepare, probe_window,
    write_json, write_train_artifacts, DatasetRef, ExperimentConfig, Prepared,
    RETRAIN_SEED_OFFSET,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Dense,
    Ags,
    Retrain,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Dense => "dense",
            Variant::Ags => "ags",
            Variant::Retrain => "retrain",
        })
    }
}

/// One row of `curves.csv`: test metrics and cost for a single trained
/// model. Dense baselines appear once per seed with sparsity 0.
#[derive(Clone, Debug, Serialize)]
pub struct RunRow {
    pub sparsity: f64,
    pub seed: u64,
    pub variant: Variant,
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub flops: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellFailure {
    pub sparsity: f64,
    pub seed: u64,
    pub variant: Variant,
    pub error: String,
}

/// Across-seed aggregate for one (sparsity level, variant) cell.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryCell {
    pub sparsity: f64,
    pub variant: Variant,
    pub seeds_completed: usize,
    pub median_mae: f64,
    pub stddev_mae: f64,
    pub median_rmse: f64,
    pub stddev_rmse: f64,
    pub median_mape: Option<f64>,
    pub median_flops: f64,
    /// AGS cells only: median sparsity actually reached, and which seeds
    /// stopped short of the target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_achieved_sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub target_missed_seeds: Vec<u64>,
    /// Run-dir-relative checkpoint path per seed.
    pub checkpoints: IndexMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub curves: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
    pub rows: Vec<RunRow>,
    pub failures: Vec<CellFailure>,
}

/// Median of a non-empty slice (averaging the middle pair for even sizes).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Population standard deviation; a single observation yields 0.
pub(crate) fn population_stddev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn curves_csv(rows: &[RunRow]) -> String {
    let mut out = String::from("sparsity,seed,variant,mae,rmse,mape,flops\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sparsity,
            r.seed,
            r.variant,
            r.mae,
            r.rmse,
            fmt_opt(r.mape),
            r.flops
        ));
    }
    out
}

fn rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Bookkeeping for one completed cell.
struct CellRecord {
    row: RunRow,
    checkpoint: String,
    checkpoint_hash: String,
    achieved_sparsity: Option<f64>,
    target_missed: bool,
}

struct CellKey {
    sparsity: f64,
    variant: Variant,
}

fn summarise(records: &[CellRecord], keys: &[CellKey]) -> Vec<SummaryCell> {
    let mut cells = Vec::with_capacity(keys.len());
    for key in keys {
        let members: Vec<&CellRecord> = records
            .iter()
            .filter(|r| r.row.variant == key.variant && r.row.sparsity == key.sparsity)
            .collect();
        if members.is_empty() {
            continue;
        }
        let collect = |f: &dyn Fn(&CellRecord) -> f64| -> Vec<f64> {
            members.iter().map(|m| f(m)).collect()
        };
        let mae = collect(&|m| m.row.mae);
        let rmse = collect(&|m| m.row.rmse);
        let flops = collect(&|m| m.row.flops as f64);
        let mape: Vec<f64> = members.iter().filter_map(|m| m.row.mape).collect();
        let achieved: Vec<f64> = members.iter().filter_map(|m| m.achieved_sparsity).collect();
        let mut checkpoints = IndexMap::new();
        for m in &members {
            checkpoints.insert(m.row.seed.to_string(), m.checkpoint_hash.clone());
        }
        cells.push(SummaryCell {
            sparsity: key.sparsity,
            variant: key.variant,
            seeds_completed: members.len(),
            median_mae: median(&mae),
            stddev_mae: population_stddev(&mae),
            median_rmse: median(&rmse),
            stddev_rmse: population_stddev(&rmse),
            median_mape: if mape.is_empty() { None } else { Some(median(&mape)) },
            median_flops: median(&flops),
            median_achieved_sparsity: if achieved.is_empty() { None } else { Some(median(&achieved)) },
            target_missed_seeds: members
                .iter()
                .filter(|m| m.target_missed)
                .map(|m| m.row.seed)
                .collect(),
            checkpoints,
        });
    }
    cells
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    cells: Vec<SummaryCell>,
    failures: &'a [CellFailure],
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    deterministic: bool,
    config: &'a ExperimentConfig,
    dataset: IndexMap<&'static str, String>,
    checkpoints: IndexMap<String, String>,
    curves: &'static str,
    summary: &'static str,
}

/// Run the complete sweep described by a config file. `out_override`
/// replaces the config's output directory.
pub fn cmd_experiment(
    config_path: &Path,
    out_override: Option<&Path>,
) -> Result<ExperimentOutcome> {
    let config = ExperimentConfig::load(config_path)?;
    let out_dir = match (out_override, &config.output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => {
            return Err(Error::config(
                "config declares no output directory; pass --out",
            ))
        }
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let series = load_series(&config, &super::config_dir(config_path))?;
    let prepared = prepare(&series, &config, None)?;

    // Dataset provenance: synthetic series are materialised inside the run
    // directory, CSV references are recorded by path.
    let mut dataset_entry = IndexMap::new();
    match &config.dataset {
        DatasetRef::Synthetic { .. } => {
            let dir = out_dir.join("dataset");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            save_csv_dataset(&series, &dir.join("data.csv"), &dir.join("meta.json"), true)?;
            dataset_entry.insert("kind", "synthetic".to_string());
            dataset_entry.insert("data", "dataset/data.csv".to_string());
            dataset_entry.insert("meta", "dataset/meta.json".to_string());
        }
        DatasetRef::Csv { data, meta } => {
            dataset_entry.insert("kind", "csv".to_string());
            dataset_entry.insert("data", data.display().to_string());
            dataset_entry.insert("meta", meta.display().to_string());
        }
    }

    let mut records: Vec<CellRecord> = Vec::new();
    let mut failures: Vec<CellFailure> = Vec::new();
    let fail = |failures: &mut Vec<CellFailure>, sparsity: f64, seed: u64, variant: Variant, e: Error| {
        failures.push(CellFailure { sparsity, seed, variant, error: e.to_string() });
    };

    for &seed in &config.seeds {
        let seed_dir = out_dir.join(format!("seed{seed}"));
        let scfg = config.sparsify_for_seed(seed);

        let dense = match dense_cell(&config, &prepared, &scfg, seed, &seed_dir, &out_dir) {
            Ok((model, record)) => {
                records.push(record);
                model
            }
            Err(e) => {
                // Without a pretrained parent the whole seed column is lost.
                fail(&mut failures, 0.0, seed, Variant::Dense, e);
                continue;
            }
        };

        for &level in &config.sweep {
            let (localised, mask) = match ags_cell(
                &config, &prepared, &scfg, &dense, seed, level, &seed_dir, &out_dir,
            ) {
                Ok((model, mask, record)) => {
                    records.push(record);
                    (model, mask)
                }
                Err(e) => {
                    fail(&mut failures, level, seed, Variant::Ags, e);
                    continue;
                }
            };
            match retrain_cell(
                &config, &prepared, &scfg, &localised, &mask, seed, level, &seed_dir, &out_dir,
            ) {
                Ok(record) => records.push(record),
                Err(e) => fail(&mut failures, level, seed, Variant::Retrain, e),
            }
        }
    }

    // Cell order in the summary: the dense baseline, then each sweep level's
    // AGS and retrain results.
    let mut keys = vec![CellKey { sparsity: 0.0, variant: Variant::Dense }];
    for &level in &config.sweep {
        keys.push(CellKey { sparsity: level, variant: Variant::Ags });
        keys.push(CellKey { sparsity: level, variant: Variant::Retrain });
    }
    let cells = summarise(&records, &keys);

    let rows: Vec<RunRow> = records.iter().map(|r| r.row.clone()).collect();
    let curves = out_dir.join("curves.csv");
    super::write_file(&curves, curves_csv(&rows).as_bytes())?;

    let summary = out_dir.join("summary.json");
    write_json(&summary, &Summary { config: &config, cells, failures: &failures })?;

    let mut checkpoint_index = IndexMap::new();
    for r in &records {
        checkpoint_index.insert(r.checkpoint.clone(), r.checkpoint_hash.clone());
    }
    let manifest = out_dir.join("manifest.json");
    write_json(
        &manifest,
        &Manifest {
            tool: "astgnn",
            version: env!("CARGO_PKG_VERSION"),
            deterministic: deterministic_mode(),
            config: &config,
            dataset: dataset_entry,
            checkpoints: checkpoint_index,
            curves: "curves.csv",
            summary: "summary.json",
        },
    )?;

    Ok(ExperimentOutcome { out_dir, curves, summary, manifest, rows, failures })
}

/// Test-split metrics plus flop count for a finished model.
fn scored_row(
    config: &ExperimentConfig,
    prepared: &Prepared,
    model: &Model,
    mask: &EdgeMask,
    sparsity: f64,
    seed: u64,
    variant: Variant,
) -> Result<RunRow> {
    let mask_values = mask.inference_values();
    let metrics = evaluate_denormalised(
        model,
        &mask_values,
        &prepared.splits["test"],
        prepared.stats.as_ref(),
        config.mape_epsilon,
    )?;
    let cost = cost_report(model, &mask_values, &probe_window(&model.config))?;
    Ok(RunRow {
        sparsity,
        seed,
        variant,
        mae: metrics.mae,
        rmse: metrics.rmse,
        mape: metrics.mape,
        flops: cost.flops(),
    })
}

#[allow(clippy::too_many_arguments)]
fn dense_cell(
    config: &ExperimentConfig,
    prepared: &Prepared,
    scfg: &SparsifyConfig,
    seed: u64,
    seed_dir: &Path,
    out_dir: &Path,
) -> Result<(Model, CellRecord)> {
    let start = Model::new(config.model.clone(), GateParams::default(), seed)?;
    let (model, log) = pretrain(
        &start,
        &prepared.splits["train"].norm,
        &prepared.splits["val"].norm,
        scfg,
    )?;
    let mask = EdgeMask::all_open(config.model.num_nodes());
    let artifacts =
        write_train_artifacts(seed_dir, "pretrain", &model, &mask, prepared.stats.as_ref(), &log)?;
    let row = scored_row(config, prepared, &model, &mask, 0.0, seed, Variant::Dense)?;
    Ok((
        model,
        CellRecord {
            row,
            checkpoint: rel(&artifacts.checkpoint, out_dir),
            checkpoint_hash: artifacts.checkpoint_hash,
            achieved_sparsity: None,
            target_missed: false,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn ags_cell(
    config: &ExperimentConfig,
    prepared: &Prepared,
    scfg: &SparsifyConfig,
    dense: &Model,
    seed: u64,
    level: f64,
    seed_dir: &Path,
    out_dir: &Path,
) -> Result<(Model, EdgeMask, CellRecord)> {
    let cfg = SparsifyConfig { s_g: level, ..scfg.clone() };
    cfg.validate()?;
    let (model, mask, log) = ags_sparsify(
        dense,
        &prepared.splits["train"].norm,
        &prepared.splits["val"].norm,
        &cfg,
    )?;
    let dir = level_dir(&seed_dir.join("sparsify"), level);
    let artifacts =
        write_train_artifacts(&dir, "localised", &model, &mask, prepared.stats.as_ref(), &log)?;
    let row = scored_row(config, prepared, &model, &mask, level, seed, Variant::Ags)?;
    let record = CellRecord {
        row,
        checkpoint: rel(&artifacts.checkpoint, out_dir),
        checkpoint_hash: artifacts.checkpoint_hash,
        achieved_sparsity: Some(current_sparsity(&mask)),
        target_missed: log.target_missed,
    };
    Ok((model, mask, record))
}

#[allow(clippy::too_many_arguments)]
fn retrain_cell(
    config: &ExperimentConfig,
    prepared: &Prepared,
    scfg: &SparsifyConfig,
    localised: &Model,
    mask: &EdgeMask,
    seed: u64,
    level: f64,
    seed_dir: &Path,
    out_dir: &Path,
) -> Result<CellRecord> {
    let fresh_seed = seed.wrapping_add(RETRAIN_SEED_OFFSET);
    let (model, log) = reinit_retrain(
        localised,
        mask,
        &prepared.splits["train"].norm,
        &prepared.splits["val"].norm,
        scfg,
        fresh_seed,
    )?;
    let dir = level_dir(&seed_dir.join("retrain"), level);
    let artifacts =
        write_train_artifacts(&dir, "retrained", &model, mask, prepared.stats.as_ref(), &log)?;
    let row = scored_row(config, prepared, &model, mask, level, seed, Variant::Retrain)?;
    Ok(CellRecord {
        row,
        checkpoint: rel(&artifacts.checkpoint, out_dir),
        checkpoint_hash: artifacts.checkpoint_hash,
        achieved_sparsity: None,
        target_missed: false,
    })
}
