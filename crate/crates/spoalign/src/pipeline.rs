//! End-to-end orchestration: load scores and embeddings, screen, compute
//! standardization statistics, train the setting grid, ensemble, and
//! evaluate. Every artifact lands under a work directory and is a pure
//! function of the configuration, so re-runs reproduce files bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, EmbeddingTable, PairRef};
use crate::ensemble::{ensemble_predict, Setting};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::screening::{screen, ScreeningConfig};
use crate::spo::{compute_global_stats, make_raw_normalized_targets, make_training_targets};
use crate::training::{train, TrainConfig, TrainedModel};

/// The training grid: one model per (setting, warmup, seed) combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub settings: Vec<Setting>,
    pub warmup: Vec<bool>,
    pub seeds: Vec<u64>,
}

fn default_true() -> bool {
    true
}

/// Everything `run_pipeline` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train_scores: PathBuf,
    pub eval_scores: PathBuf,
    pub embeddings: PathBuf,
    pub workdir: PathBuf,
    pub screening: ScreeningConfig,
    pub grid: GridConfig,
    /// Base hyperparameters; screening/contrastive/warmup/seed are filled
    /// in per grid job.
    #[serde(default)]
    pub train: TrainConfig,
    /// Also train one extra model on globally-normalized raw targets and
    /// report it next to its standardized twin.
    #[serde(default)]
    pub spo_ablation: bool,
    /// Enforce the 3-audios-per-text shape on the training split.
    #[serde(default = "default_true")]
    pub strict_triplets: bool,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&content).map_err(|e| Error::json(path, e))
    }

    fn validate(&self) -> std::result::Result<(), PipelineError> {
        let check = || -> Result<()> {
            if self.grid.settings.is_empty() || self.grid.warmup.is_empty() || self.grid.seeds.is_empty()
            {
                return Err(Error::InvalidConfig("pipeline grid must be non-empty".into()));
            }
            ScreeningConfig::new(self.screening.tau, self.screening.rate_threshold)?;
            self.train.validate()
        };
        check().map_err(|source| PipelineError {
            stage: Stage::Load,
            source,
        })
    }
}

/// Pipeline stages, used to label failures and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Screen,
    Stats,
    Train,
    Predict,
    Ensemble,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Screen => "screen",
            Stage::Stats => "stats",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Ensemble => "ensemble",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Nonzero process exit code identifying the failed stage.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Load => 10,
            Stage::Screen => 11,
            Stage::Stats => 12,
            Stage::Train => 13,
            Stage::Predict => 14,
            Stage::Ensemble => 15,
            Stage::Evaluate => 16,
            Stage::Report => 17,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage-labelled pipeline failure.
#[derive(Debug, thiserror::Error)]
#[error("pipeline stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

/// One grid model's held-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleModelReport {
    pub setting: Setting,
    pub warmup: bool,
    pub seed: u64,
    pub model_path: String,
    pub metrics: MetricReport,
}

/// Standardized-vs-raw target comparison for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoAblationReport {
    pub setting: Setting,
    pub warmup: bool,
    pub seed: u64,
    pub with_spo: MetricReport,
    pub without_spo: MetricReport,
}

/// Slimmed screening outcome for the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSummary {
    pub excluded_listeners: Vec<String>,
    pub records_before: usize,
    pub records_after: usize,
}

/// The pipeline's final report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    /// Keyed "full", "wo_setting_a", "wo_settings_bc".
    pub ensembles: BTreeMap<String, MetricReport>,
    pub single_models: Vec<SingleModelReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spo_ablation: Option<SpoAblationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningSummary>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let body = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

fn stage<T>(stage: Stage, result: Result<T>) -> std::result::Result<T, PipelineError> {
    result.map_err(|source| PipelineError { stage, source })
}

/// Score every pair with one saved model.
pub fn predict(
    model_path: impl AsRef<Path>,
    embeddings: &EmbeddingTable,
    pairs: &[PairRef],
) -> Result<BTreeMap<String, f64>> {
    let model = TrainedModel::load(model_path)?;
    ensemble_predict(&[&model], embeddings, pairs)
}

struct DataVariant {
    dataset: Dataset,
    stats: crate::spo::GlobalStats,
    targets: Vec<crate::spo::Target>,
}

fn prepare_variant(dataset: Dataset) -> Result<DataVariant> {
    let stats = compute_global_stats(&dataset)?;
    let targets = make_training_targets(&dataset)?.targets;
    Ok(DataVariant {
        dataset,
        stats,
        targets,
    })
}

fn model_filename(setting: Setting, warmup: bool, seed: u64) -> String {
    format!(
        "setting_{setting}_{}_seed_{seed}.json",
        if warmup { "warmup" } else { "nowarmup" }
    )
}

/// Run the whole pipeline; see [`run_pipeline_with_progress`] for a
/// variant that reports stage transitions.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<PipelineSummary, PipelineError> {
    run_pipeline_with_progress(config, |_| {})
}

/// Run the whole pipeline, invoking `progress` with human-readable stage
/// messages as work proceeds.
pub fn run_pipeline_with_progress(
    config: &PipelineConfig,
    mut progress: impl FnMut(&str),
) -> std::result::Result<PipelineSummary, PipelineError> {
    config.validate()?;

    progress("load: reading scores and embeddings");
    let train_ds = stage(
        Stage::Load,
        data::load_scores(&config.train_scores, config.strict_triplets),
    )?;
    let eval_ds = stage(Stage::Load, data::load_scores(&config.eval_scores, false))?;
    let embeddings = stage(Stage::Load, data::load_embeddings(&config.embeddings))?;

    let needs_screened = config.grid.settings.iter().any(|s| s.screening());
    let needs_raw = config.grid.settings.iter().any(|s| !s.screening());

    let mut screening_summary = None;
    let screened_variant = if needs_screened {
        progress("screen: filtering inconsistent listeners");
        let (kept, report) = stage(Stage::Screen, screen(&train_ds, &config.screening))?;
        stage(
            Stage::Screen,
            write_json(&config.workdir.join("screening_report.json"), &report),
        )?;
        screening_summary = Some(ScreeningSummary {
            excluded_listeners: report.excluded_listeners.clone(),
            records_before: report.records_before,
            records_after: report.records_after,
        });
        Some(stage(Stage::Stats, prepare_variant(kept))?)
    } else {
        None
    };
    let raw_variant = if needs_raw || config.spo_ablation {
        Some(stage(Stage::Stats, prepare_variant(train_ds.clone()))?)
    } else {
        None
    };

    progress("stats: writing standardization statistics");
    for (name, variant) in [("screened", &screened_variant), ("unscreened", &raw_variant)] {
        if let Some(v) = variant {
            let report = stage(Stage::Stats, crate::spo::SpoStatsReport::compute(&v.dataset))?;
            stage(
                Stage::Stats,
                write_json(
                    &config.workdir.join(format!("spo_stats_{name}.json")),
                    &report,
                ),
            )?;
        }
    }

    let variant_for = |setting: Setting| -> &DataVariant {
        if setting.screening() {
            screened_variant.as_ref().expect("screened variant prepared")
        } else {
            raw_variant.as_ref().expect("raw variant prepared")
        }
    };

    // Train the grid in sorted order so downstream summation order is fixed.
    let mut grid: Vec<(Setting, bool, u64)> = Vec::new();
    for &setting in &config.grid.settings {
        for &warmup in &config.grid.warmup {
            for &seed in &config.grid.seeds {
                grid.push((setting, warmup, seed));
            }
        }
    }
    grid.sort();
    grid.dedup();

    let models_dir = config.workdir.join("models");
    let mut trained: Vec<((Setting, bool, u64), TrainedModel, PathBuf)> = Vec::new();
    for &(setting, warmup, seed) in &grid {
        progress(&format!(
            "train: setting {setting}, warmup {warmup}, seed {seed}"
        ));
        let variant = variant_for(setting);
        let job_config = TrainConfig {
            screening: setting.screening(),
            contrastive: setting.contrastive(),
            warmup,
            seed,
            ..config.train.clone()
        };
        let model = stage(
            Stage::Train,
            train(
                &variant.dataset,
                &embeddings,
                &variant.targets,
                &variant.stats,
                &job_config,
            ),
        )?;
        let path = models_dir.join(model_filename(setting, warmup, seed));
        stage(Stage::Train, write_json(&path, &model))?;
        trained.push(((setting, warmup, seed), model, path));
    }

    progress("predict: scoring evaluation pairs");
    let eval_pairs = eval_ds.unique_pairs();
    let preds_dir = config.workdir.join("preds");
    let mut single_preds: Vec<BTreeMap<String, f64>> = Vec::new();
    for ((setting, warmup, seed), model, _) in &trained {
        let preds = stage(
            Stage::Predict,
            ensemble_predict(&[model], &embeddings, &eval_pairs),
        )?;
        stage(
            Stage::Predict,
            write_json(
                &preds_dir.join(format!("single_{}", model_filename(*setting, *warmup, *seed))),
                &preds,
            ),
        )?;
        single_preds.push(preds);
    }

    progress("ensemble: averaging model predictions");
    let mut ensemble_sets: Vec<(&'static str, Vec<usize>)> = Vec::new();
    let all: Vec<usize> = (0..trained.len()).collect();
    ensemble_sets.push(("full", all));
    let has_a = trained.iter().any(|((s, _, _), _, _)| *s == Setting::A);
    let has_bc = trained.iter().any(|((s, _, _), _, _)| *s != Setting::A);
    if has_a && has_bc {
        ensemble_sets.push((
            "wo_setting_a",
            trained
                .iter()
                .enumerate()
                .filter(|(_, ((s, _, _), _, _))| *s != Setting::A)
                .map(|(i, _)| i)
                .collect(),
        ));
        ensemble_sets.push((
            "wo_settings_bc",
            trained
                .iter()
                .enumerate()
                .filter(|(_, ((s, _, _), _, _))| *s == Setting::A)
                .map(|(i, _)| i)
                .collect(),
        ));
    }

    let mut ensembles = BTreeMap::new();
    for (name, indices) in &ensemble_sets {
        let members: Vec<&TrainedModel> = indices.iter().map(|&i| &trained[i].1).collect();
        let preds = stage(
            Stage::Ensemble,
            ensemble_predict(&members, &embeddings, &eval_pairs),
        )?;
        stage(
            Stage::Ensemble,
            write_json(&preds_dir.join(format!("ensemble_{name}.json")), &preds),
        )?;
        progress(&format!("evaluate: ensemble {name} ({} members)", members.len()));
        let report = stage(Stage::Evaluate, evaluate(&preds, &eval_ds))?;
        ensembles.insert((*name).to_owned(), report);
    }

    let mut single_models = Vec::new();
    for (((setting, warmup, seed), _, path), preds) in trained.iter().zip(&single_preds) {
        let metrics = stage(Stage::Evaluate, evaluate(preds, &eval_ds))?;
        single_models.push(SingleModelReport {
            setting: *setting,
            warmup: *warmup,
            seed: *seed,
            model_path: path.display().to_string(),
            metrics,
        });
    }

    let spo_ablation = if config.spo_ablation {
        // Compare one grid model with a twin trained on raw targets,
        // preferring setting B (the configuration the comparison is about).
        let &(setting, warmup, seed) = grid
            .iter()
            .find(|(s, _, _)| *s == Setting::B)
            .unwrap_or(&grid[0]);
        progress(&format!(
            "train: raw-target ablation twin (setting {setting}, warmup {warmup}, seed {seed})"
        ));
        let variant = variant_for(setting);
        let job_config = TrainConfig {
            screening: setting.screening(),
            contrastive: setting.contrastive(),
            warmup,
            seed,
            ..config.train.clone()
        };
        let raw_targets = make_raw_normalized_targets(&variant.dataset, &variant.stats);
        let raw_model = stage(
            Stage::Train,
            train(
                &variant.dataset,
                &embeddings,
                &raw_targets,
                &variant.stats,
                &job_config,
            ),
        )?;
        stage(
            Stage::Train,
            write_json(&models_dir.join("ablation_raw_targets.json"), &raw_model),
        )?;
        let raw_preds = stage(
            Stage::Predict,
            ensemble_predict(&[&raw_model], &embeddings, &eval_pairs),
        )?;
        let without_spo = stage(Stage::Evaluate, evaluate(&raw_preds, &eval_ds))?;
        let with_spo = single_models
            .iter()
            .find(|m| m.setting == setting && m.warmup == warmup && m.seed == seed)
            .map(|m| m.metrics.clone())
            .expect("ablation twin exists in the grid");
        Some(SpoAblationReport {
            setting,
            warmup,
            seed,
            with_spo,
            without_spo,
        })
    } else {
        None
    };

    let summary = PipelineSummary {
        ensembles,
        single_models,
        spo_ablation,
        screening: screening_summary,
    };
    progress("report: writing summary");
    stage(
        Stage::Report,
        write_json(&config.workdir.join("summary.json"), &summary),
    )?;
    Ok(summary)
}
