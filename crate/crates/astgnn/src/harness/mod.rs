//! Experiment orchestration: configuration, dataset preparation, and the
//! operations behind each CLI subcommand.
//!
//! Every operation is deterministic for a fixed configuration: outputs carry
//! no timestamps, floats render in shortest-roundtrip form, and reruns
//! produce byte-identical artifacts. All artifacts live under a caller
//! -chosen run directory; `manifest.json` ties them together.

mod experiment;

pub use experiment::{cmd_experiment, ExperimentOutcome, RunRow, SummaryCell, Variant};

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, generate_synthetic, load_csv_dataset, make_windows, save_csv_dataset, NormStats,
    SpatioTemporalSeries, SyntheticSpec, WindowSample,
};
use crate::error::{Error, Result};
use crate::flops::{cost_report, flops_analytic, format_speedup, speedup, CostReport};
use crate::graph::{adaptive_adjacency, deterministic_gate, EdgeMask, GateParams};
use crate::metrics::{compute_metrics, MetricReport};
use crate::model::{load_checkpoint, save_checkpoint, Model, ModelConfig};
use crate::sparsify::{ags_sparsify, pretrain, reinit_retrain, SparsifyConfig, TrainLog};
use crate::tensor::Tensor;

/// Seed offset applied when a retrain run derives its fresh seed from the
/// experiment seed.
pub const RETRAIN_SEED_OFFSET: u64 = 0x9e3779b9;

/// Deterministic mode, controlled by `ASTGNN_DETERMINISTIC` (default on).
/// Execution is single-threaded either way; the flag is recorded in run
/// manifests so artifacts are self-describing.
pub fn deterministic_mode() -> bool {
    match std::env::var("ASTGNN_DETERMINISTIC") {
        Err(_) => true,
        Ok(v) => !matches!(v.trim(), "0" | "false" | "off"),
    }
}

/// Where the experiment's series comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetRef {
    /// Generate on the fly from a synthetic spec.
    Synthetic { spec: SyntheticSpec },
    /// Load from a CSV + metadata pair; relative paths resolve against the
    /// config file's directory.
    Csv { data: PathBuf, meta: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    PerNode,
    Global,
    None,
}

fn default_sweep() -> Vec<f64> {
    vec![0.0, 0.30, 0.50, 0.80, 0.99, 0.995, 1.00]
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_split() -> Vec<f64> {
    vec![0.6, 0.2, 0.2]
}
fn default_normalization() -> Normalization {
    Normalization::PerNode
}
fn default_mape_epsilon() -> f64 {
    crate::metrics::DEFAULT_MAPE_EPSILON
}

/// One self-contained experiment description: dataset, architecture,
/// sparsification knobs, sweep grid, seeds, and output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    pub model: ModelConfig,
    #[serde(default)]
    pub sparsify: SparsifyConfig,
    #[serde(default = "default_sweep")]
    pub sweep: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Train/validation/test fractions.
    #[serde(default = "default_split")]
    pub split: Vec<f64>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_mape_epsilon")]
    pub mape_epsilon: f64,
    /// Run directory; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sparsify.validate()?;
        if self.sweep.is_empty() {
            return Err(Error::config("sweep must name at least one sparsity level"));
        }
        for pair in self.sweep.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::config(format!(
                    "sweep must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.sweep.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::config("sweep levels must lie in [0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must name at least one seed"));
        }
        if self.split.len() != 3 || self.split.iter().any(|r| *r <= 0.0) {
            return Err(Error::config(
                "split must be three positive train/val/test fractions",
            ));
        }
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split fractions sum to {total}, expected 1")));
        }
        if !(self.mape_epsilon > 0.0) {
            return Err(Error::config("mape_epsilon must be positive"));
        }
        if let DatasetRef::Synthetic { spec } = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    /// The sparsifier settings for one experiment seed: the seed field
    /// follows the run seed so every seed trains on its own batch order.
    pub fn sparsify_for_seed(&self, seed: u64) -> SparsifyConfig {
        SparsifyConfig { seed, ..self.sparsify.clone() }
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::artifact(format!("serialising {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// Resolve the configured dataset into an in-memory series.
pub fn load_series(config: &ExperimentConfig, config_dir: &Path) -> Result<SpatioTemporalSeries> {
    let series = match &config.dataset {
        DatasetRef::Synthetic { spec } => generate_synthetic(spec)?,
        DatasetRef::Csv { data, meta } => {
            let data = config_dir.join(data);
            let meta = config_dir.join(meta);
            for p in [&data, &meta] {
                if !p.exists() {
                    return Err(Error::Dataset {
                        path: p.display().to_string(),
                        detail: "file not found".to_string(),
                    });
                }
            }
            load_csv_dataset(&data, &meta)?
        }
    };
    if series.num_nodes() != config.model.num_nodes()
        || series.channels() != config.model.channels()
    {
        return Err(Error::config(format!(
            "model expects {} nodes x {} channels but the dataset provides {} x {}",
            config.model.num_nodes(),
            config.model.channels(),
            series.num_nodes(),
            series.channels()
        )));
    }
    Ok(series)
}

/// Windows for one split on both scales: the model consumes `norm`, metric
/// targets come from `raw`.
pub(crate) struct SplitSet {
    pub norm: Vec<WindowSample>,
    pub raw: Vec<WindowSample>,
}

pub(crate) struct Prepared {
    pub stats: Option<NormStats>,
    pub splits: IndexMap<String, SplitSet>,
}

/// Split, normalise (statistics fitted on the training split unless a
/// checkpoint supplies them), and window the series.
pub(crate) fn prepare(
    series: &SpatioTemporalSeries,
    config: &ExperimentConfig,
    stats_override: Option<NormStats>,
) -> Result<Prepared> {
    let names = ["train", "val", "test"];
    let parts = data::split(series, &config.split, &names)?;
    let stats = match stats_override {
        Some(s) => Some(s),
        None => match config.normalization {
            Normalization::None => None,
            Normalization::PerNode => Some(NormStats::fit(&parts[0], true)),
            Normalization::Global => Some(NormStats::fit(&parts[0], false)),
        },
    };
    let (history, horizon) = (config.model.history(), config.model.horizon());
    let mut splits = IndexMap::new();
    for (name, part) in names.iter().zip(&parts) {
        // make_windows rejects splits shorter than history + horizon.
        let raw = make_windows(part, history, horizon)?;
        let norm = match &stats {
            Some(s) => make_windows(&s.normalize(part)?, history, horizon)?,
            None => raw.clone(),
        };
        splits.insert(name.to_string(), SplitSet { norm, raw });
    }
    Ok(Prepared { stats, splits })
}

/// Forward every window, denormalise the predictions, and score them
/// against the raw-scale targets.
pub(crate) fn evaluate_denormalised(
    model: &Model,
    mask_values: &Tensor,
    split: &SplitSet,
    stats: Option<&NormStats>,
    mape_epsilon: f64,
) -> Result<MetricReport> {
    let channels = model.config.channels();
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for (norm_w, raw_w) in split.norm.iter().zip(&split.raw) {
        let mut p = model.forward(&norm_w.history, mask_values)?;
        if let Some(s) = stats {
            p = s.denormalize_matrix(&p, channels)?;
        }
        preds.extend_from_slice(p.data());
        targets.extend_from_slice(raw_w.target_matrix()?.data());
    }
    compute_metrics(&preds, &targets, mape_epsilon)
}

pub(crate) fn config_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

/// A zero-valued input window shaped for the model, used when a flop count
/// needs a representative forward pass.
pub(crate) fn probe_window(config: &ModelConfig) -> Tensor {
    Tensor::zeros(&[config.history(), config.num_nodes(), config.channels()])
}

// ---------------------------------------------------------------------------
// generate

#[derive(Debug, Serialize)]
pub struct GenerateOutcome {
    pub data: PathBuf,
    pub meta: PathBuf,
    pub num_nodes: usize,
    pub t_total: usize,
}

/// Generate a synthetic dataset from a spec file and write the CSV pair.
pub fn cmd_generate(spec_path: &Path, out_dir: &Path) -> Result<GenerateOutcome> {
    let spec: SyntheticSpec = read_json(spec_path)?;
    spec.validate()?;
    let series = generate_synthetic(&spec)?;
    let data = out_dir.join("data.csv");
    let meta = out_dir.join("meta.json");
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_csv_dataset(&series, &data, &meta, true)?;
    Ok(GenerateOutcome {
        data,
        meta,
        num_nodes: series.num_nodes(),
        t_total: series.t_total(),
    })
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Serialize)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
    pub log: PathBuf,
    pub iterations: usize,
    pub stopped_early: bool,
    pub best_val_mae: Option<f64>,
}

fn best_val_mae(log: &TrainLog) -> Option<f64> {
    log.records
        .iter()
        .filter_map(|r| r.val_mae)
        .fold(None, |best, v| Some(best.map_or(v, |b: f64| b.min(v))))
}

pub(crate) fn write_train_artifacts(
    out_dir: &Path,
    stem: &str,
    model: &Model,
    mask: &EdgeMask,
    stats: Option<&NormStats>,
    log: &TrainLog,
) -> Result<TrainOutcome> {
    let checkpoint = out_dir.join(format!("{stem}.ckpt"));
    let log_path = out_dir.join(format!("{stem}_log.csv"));
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint_hash = save_checkpoint(&checkpoint, model, mask, stats)?;
    write_file(&log_path, log.to_csv().as_bytes())?;
    Ok(TrainOutcome {
        checkpoint,
        checkpoint_hash,
        log: log_path,
        iterations: log.records.len(),
        stopped_early: log.stopped_early,
        best_val_mae: best_val_mae(log),
    })
}

/// Pretrain a dense model. With `resume`, parameters start from the given
/// checkpoint (the optimiser state starts fresh).
pub fn cmd_train(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    let config = ExperimentConfig::load(config_path)?;
    let series = load_series(&config, &config_dir(config_path))?;
    let prepared = prepare(&series, &config, None)?;
    let seed = seed.unwrap_or(config.seeds[0]);

    let start = match resume {
        None => Model::new(config.model.clone(), GateParams::default(), seed)?,
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.model.config != config.model {
                return Err(Error::config(format!(
                    "checkpoint {} was built for a different architecture",
                    path.display()
                )));
            }
            ckpt.model
        }
    };
    let train_cfg = config.sparsify_for_seed(seed);
    let (trained, log) = pretrain(
        &start,
        &prepared.splits["train"].norm,
        &prepared.splits["val"].norm,
        &train_cfg,
    )?;
    let mask = EdgeMask::all_open(config.model.num_nodes());
    write_train_artifacts(out_dir, "pretrain", &trained, &mask, prepared.stats.as_ref(), &log)
}

// ---------------------------------------------------------------------------
// sparsify

#[derive(Debug, Serialize)]
pub struct SparsifyOutcome {
    pub level: f64,
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
    pub log: PathBuf,
    pub achieved_sparsity: f64,
    pub target_missed: bool,
}

pub(crate) fn level_dir(base: &Path, level: f64) -> PathBuf {
    base.join(format!("s{level}"))
}

/// Run AGS from one pretrained parent at every requested sweep level.
pub fn cmd_sparsify(
    config_path: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    sweep_override: Option<Vec<f64>>,
) -> Result<Vec<SparsifyOutcome>> {
    let config = ExperimentConfig::load(config_path)?;
    let parent = load_checkpoint(checkpoint)?;
    if parent.model.config != config.model {
        return Err(Error::config(format!(
            "checkpoint {} was built for a different architecture",
            checkpoint.display()
        )));
    }
    let series = load_series(&config, &config_dir(config_path))?;
    let prepared = prepare(&series, &config, parent.norm_stats.clone())?;
    let levels = sweep_override.unwrap_or_else(|| config.sweep.clone());

    let mut outcomes = Vec::with_capacity(levels.len());
    for level in levels {
        let cfg = SparsifyConfig {
            s_g: level,
            seed: parent.model.seed,
            ..config.sparsify.clone()
        };
        cfg.validate()?;
        let (model, mask, log) = ags_sparsify(
            &parent.model,
            &prepared.splits["train"].norm,
            &prepared.splits["val"].norm,
            &cfg,
        )?;
        let dir = level_dir(out_dir, level);
        let out = write_train_artifacts(
            &dir,
            "localised",
            &model,
            &mask,
            prepared.stats.as_ref(),
            &log,
        )?;
        outcomes.push(SparsifyOutcome {
            level,
            checkpoint: out.checkpoint,
            checkpoint_hash: out.checkpoint_hash,
            log: out.log,
            achieved_sparsity: crate::sparsify::current_sparsity(&mask),
            target_missed: log.target_missed,
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// retrain

/// Reinitialise a localised checkpoint's parameters and retrain against its
/// frozen mask.
pub fn cmd_retrain(
    config_path: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<TrainOutcome> {
    let config = ExperimentConfig::load(config_path)?;
    let localised = load_checkpoint(checkpoint)?;
    if localised.model.config != config.model {
        return Err(Error::config(format!(
            "checkpoint {} was built for a different architecture",
            checkpoint.display()
        )));
    }
    let series = load_series(&config, &config_dir(config_path))?;
    let prepared = prepare(&series, &config, localised.norm_stats.clone())?;
    let fresh_seed = seed.unwrap_or(localised.model.seed.wrapping_add(RETRAIN_SEED_OFFSET));
    let cfg = config.sparsify_for_seed(fresh_seed);
    let (model, log) = reinit_retrain(
        &localised.model,
        &localised.mask,
        &prepared.splits["train"].norm,
        &prepared.splits["val"].norm,
        &cfg,
        fresh_seed,
    )?;
    write_train_artifacts(
        out_dir,
        "retrained",
        &model,
        &localised.mask,
        prepared.stats.as_ref(),
        &log,
    )
}

// ---------------------------------------------------------------------------
// eval

/// Metrics per requested split, denormalised to the data's raw scale.
pub fn cmd_eval(
    config_path: &Path,
    checkpoint: &Path,
    splits: &[String],
) -> Result<IndexMap<String, MetricReport>> {
    let config = ExperimentConfig::load(config_path)?;
    let ckpt = load_checkpoint(checkpoint)?;
    if ckpt.model.config != config.model {
        return Err(Error::config(format!(
            "checkpoint {} was built for a different architecture",
            checkpoint.display()
        )));
    }
    let series = load_series(&config, &config_dir(config_path))?;
    let prepared = prepare(&series, &config, ckpt.norm_stats.clone())?;
    let mask_values = ckpt.mask.inference_values();

    let mut out = IndexMap::new();
    for name in splits {
        let split = prepared.splits.get(name.as_str()).ok_or_else(|| {
            Error::config(format!("unknown split '{name}', expected train, val or test"))
        })?;
        let report = evaluate_denormalised(
            &ckpt.model,
            &mask_values,
            split,
            prepared.stats.as_ref(),
            config.mape_epsilon,
        )?;
        out.insert(name.clone(), report);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// flops

#[derive(Debug, Serialize)]
pub struct FlopsOutcome {
    pub report: CostReport,
    pub dense: CostReport,
    /// Where the dense reference came from: a checkpoint path, or
    /// "analytic" when none was supplied.
    pub dense_source: String,
    pub speedup: f64,
    pub speedup_rendered: String,
}

/// Cost accounting for a checkpoint, compared against a dense reference
/// (another checkpoint, or the analytic dense model of the same shape).
pub fn cmd_flops(checkpoint: &Path, dense: Option<&Path>) -> Result<FlopsOutcome> {
    let ckpt = load_checkpoint(checkpoint)?;
    let window = probe_window(&ckpt.model.config);
    let report = cost_report(&ckpt.model, &ckpt.mask.inference_values(), &window)?;

    let (dense_report, dense_source) = match dense {
        Some(path) => {
            let reference = load_checkpoint(path)?;
            if reference.model.config != ckpt.model.config {
                return Err(Error::config(format!(
                    "dense reference {} has a different architecture",
                    path.display()
                )));
            }
            let dense_window = probe_window(&reference.model.config);
            let r = cost_report(&reference.model, &reference.mask.inference_values(), &dense_window)?;
            (r, path.display().to_string())
        }
        None => {
            let n = ckpt.model.config.num_nodes();
            (flops_analytic(&ckpt.model.config, n * n), "analytic".to_string())
        }
    };
    let ratio = speedup(&dense_report, &report);
    Ok(FlopsOutcome {
        report,
        dense: dense_report,
        dense_source,
        speedup: ratio,
        speedup_rendered: format_speedup(ratio),
    })
}

/// Aligned text table for a flops outcome.
pub fn render_flops_table(outcome: &FlopsOutcome) -> String {
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".to_string());
    let mut rows = vec![format!("{:<14}{:>16}{:>16}", "term", "localised", "dense")];
    let pairs = [
        ("adjacency", outcome.report.breakdown.adjacency, outcome.dense.breakdown.adjacency),
        ("node_param", outcome.report.breakdown.node_param, outcome.dense.breakdown.node_param),
        ("temporal", outcome.report.breakdown.temporal, outcome.dense.breakdown.temporal),
        ("aggregation", outcome.report.breakdown.aggregation, outcome.dense.breakdown.aggregation),
    ];
    for (name, a, b) in pairs {
        rows.push(format!("{name:<14}{a:>16}{b:>16}"));
    }
    rows.push(format!(
        "{:<14}{:>16}{:>16}",
        "analytic", outcome.report.flops_analytic, outcome.dense.flops_analytic
    ));
    rows.push(format!(
        "{:<14}{:>16}{:>16}",
        "counted",
        opt(outcome.report.flops_counted),
        opt(outcome.dense.flops_counted)
    ));
    rows.push(format!(
        "speedup vs dense ({}): {}",
        outcome.dense_source, outcome.speedup_rendered
    ));
    rows.join("\n") + "\n"
}

// ---------------------------------------------------------------------------
// inspect

#[derive(Debug, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Serialize)]
pub struct InspectOutcome {
    pub adjacency_csv: PathBuf,
    pub gates_csv: PathBuf,
    pub histogram_csv: PathBuf,
    pub bins: Vec<HistogramBin>,
    pub kept_edges: usize,
    pub off_diagonal_sparsity: f64,
}

/// Export a checkpoint's adjacency, gate state, and an adjacency-weight
/// histogram with `bins` fixed-width bins over [0, 1].
pub fn cmd_inspect(checkpoint: &Path, out_dir: &Path, bins: usize) -> Result<InspectOutcome> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let n = ckpt.model.config.num_nodes();
    let adjacency = adaptive_adjacency(ckpt.model.embedding()?)?;
    let logits = ckpt.model.gate_logits()?;
    let det = deterministic_gate(&logits, &ckpt.model.gate, &ckpt.mask)?;

    let mut adjacency_text = String::from("i,j,weight\n");
    let mut gates_text = String::from("i,j,logit,gate,state\n");
    let mut counts = vec![0usize; bins];
    for i in 0..n {
        for j in 0..n {
            let w = adjacency.at(&[i, j]);
            adjacency_text.push_str(&format!("{i},{j},{w}\n"));
            gates_text.push_str(&format!(
                "{i},{j},{},{},{}\n",
                logits.at(&[i, j]),
                det.at(&[i, j]),
                ckpt.mask.state(i, j) as u8
            ));
            let bin = ((w * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
        }
    }
    let width = 1.0 / bins as f64;
    let bins: Vec<HistogramBin> = counts
        .iter()
        .enumerate()
        .map(|(k, count)| HistogramBin { lo: k as f64 * width, hi: (k + 1) as f64 * width, count: *count })
        .collect();
    let mut histogram_text = String::from("bin_lo,bin_hi,count\n");
    for b in &bins {
        histogram_text.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
    }

    let adjacency_csv = out_dir.join("adjacency.csv");
    let gates_csv = out_dir.join("gates.csv");
    let histogram_csv = out_dir.join("histogram.csv");
    write_file(&adjacency_csv, adjacency_text.as_bytes())?;
    write_file(&gates_csv, gates_text.as_bytes())?;
    write_file(&histogram_csv, histogram_text.as_bytes())?;
    Ok(InspectOutcome {
        adjacency_csv,
        gates_csv,
        histogram_csv,
        bins,
        kept_edges: ckpt.mask.kept_edges(),
        off_diagonal_sparsity: ckpt.mask.off_diagonal_prune_fraction(),
    })
}
