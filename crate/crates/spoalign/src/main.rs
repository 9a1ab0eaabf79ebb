//! Command-line front end: one thin subcommand per pipeline stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spoalign::data;
use spoalign::ensemble::{build_challenge_ensemble, ensemble_predict, EnsembleSpec};
use spoalign::error::Error;
use spoalign::metrics::evaluate;
use spoalign::pipeline::{self, PipelineConfig};
use spoalign::screening::{screen, ScreeningConfig};
use spoalign::spo::SpoStatsReport;
use spoalign::synth::{self, SynthConfig};
use spoalign::training::{train, TrainConfig};

#[derive(Parser)]
#[command(
    name = "spoalign",
    version,
    about = "Audio-text alignment score prediction: screening, standardization, training, ensembling, evaluation"
)]
struct Cli {
    /// Override the seed in synth/train configuration files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Work directory for pipeline artifacts.
    #[arg(long, global = true, env = "SPOALIGN_WORKDIR")]
    workdir: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rated dataset with known latent alignments.
    Synth {
        /// SynthConfig as JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_scores: PathBuf,
        /// Directory for the embedding manifest and vector files.
        #[arg(long)]
        out_embeddings: PathBuf,
        /// JSON map pair_id -> latent alignment.
        #[arg(long)]
        out_latent: PathBuf,
        /// Hold out this fraction of texts into a separate scores file.
        #[arg(long, requires = "out_eval_scores")]
        eval_fraction: Option<f64>,
        #[arg(long, requires = "eval_fraction")]
        out_eval_scores: Option<PathBuf>,
    },
    /// Flag NG scores and drop inconsistent listeners.
    Screen {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        tau: f64,
        #[arg(long, default_value_t = 0.2)]
        rate: f64,
        /// Screened scores (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Screening report (JSON).
        #[arg(long)]
        report: PathBuf,
    },
    /// Per-listener and global standardization statistics.
    SpoStats {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one projection head.
    Train {
        #[arg(long)]
        scores: PathBuf,
        /// Embedding manifest (TSV).
        #[arg(long)]
        embeddings: PathBuf,
        /// TrainConfig as JSON.
        #[arg(long)]
        config: PathBuf,
        /// Trained model (JSON); per-epoch losses land next to it as JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Screening interval half-width, used when the config enables screening.
        #[arg(long, default_value_t = 5.0)]
        tau: f64,
        /// Screening exclusion threshold, used when the config enables screening.
        #[arg(long, default_value_t = 0.2)]
        rate: f64,
        /// Require the 3-audios-per-text shape on the training scores.
        #[arg(long, default_value_t = true)]
        strict_triplets: bool,
    },
    /// Score pairs with one saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Scores file naming the pairs to predict.
        #[arg(long)]
        pairs: PathBuf,
        /// JSON map pair_id -> score.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average predictions across an ensemble spec.
    Ensemble {
        /// EnsembleSpec as JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions against mean human scores.
    Evaluate {
        /// JSON map pair_id -> score.
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full grid: screen, standardize, train, ensemble, evaluate.
    Pipeline {
        /// PipelineConfig as JSON.
        #[arg(long)]
        config: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    serde_json::from_str(&content).map_err(|e| Error::Json {
        path: Some(path.to_owned()),
        source: e,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_owned(),
                source: e,
            })?;
        }
    }
    let body = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: Some(path.to_owned()),
        source: e,
    })?;
    std::fs::write(path, body + "\n").map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    let quiet = cli.quiet;
    let say = |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };

    match cli.command {
        Command::Synth {
            config,
            out_scores,
            out_embeddings,
            out_latent,
            eval_fraction,
            out_eval_scores,
        } => {
            let mut synth_config: SynthConfig = read_json(&config)?;
            if let Some(seed) = cli.seed {
                synth_config.seed = seed;
            }
            let (dataset, table, latent) = synth::generate(&synth_config)?;
            say(&format!(
                "generated {} records over {} pairs",
                dataset.len(),
                latent.len()
            ));
            let manifest = data::write_embeddings(&table, &out_embeddings)?;
            write_json(&out_latent, &latent)?;
            match (eval_fraction, out_eval_scores) {
                (Some(fraction), Some(eval_path)) => {
                    // Split with a stream independent of the generator's.
                    let (train_ds, eval_ds) =
                        dataset.split_by_text(fraction, synth_config.seed ^ 0x53504c49);
                    data::save_scores(&train_ds, &out_scores)?;
                    data::save_scores(&eval_ds, &eval_path)?;
                    say(&format!(
                        "split {} train / {} eval records; manifest at {}",
                        train_ds.len(),
                        eval_ds.len(),
                        manifest.display()
                    ));
                }
                _ => {
                    data::save_scores(&dataset, &out_scores)?;
                    say(&format!("manifest at {}", manifest.display()));
                }
            }
            Ok(())
        }
        Command::Screen {
            scores,
            tau,
            rate,
            out,
            report,
        } => {
            let dataset = data::load_scores(&scores, false)?;
            let config = ScreeningConfig::new(tau, rate)?;
            let (kept, screening_report) = screen(&dataset, &config)?;
            data::save_scores(&kept, &out)?;
            write_json(&report, &screening_report)?;
            say(&format!(
                "kept {}/{} records; excluded listeners: {:?}",
                screening_report.records_after,
                screening_report.records_before,
                screening_report.excluded_listeners
            ));
            Ok(())
        }
        Command::SpoStats { scores, out } => {
            let dataset = data::load_scores(&scores, false)?;
            let report = SpoStatsReport::compute(&dataset)?;
            write_json(&out, &report)?;
            say(&format!(
                "{} listeners; mu_train {:.4}, sigma_train {:.4}, {} records dropped",
                report.listeners.len(),
                report.mu_train,
                report.sigma_train,
                report.dropped_records
            ));
            Ok(())
        }
        Command::Train {
            scores,
            embeddings,
            config,
            out,
            tau,
            rate,
            strict_triplets,
        } => {
            let mut train_config: TrainConfig = read_json(&config)?;
            if let Some(seed) = cli.seed {
                train_config.seed = seed;
            }
            let dataset = data::load_scores(&scores, strict_triplets)?;
            let table = data::load_embeddings(&embeddings)?;
            let dataset = if train_config.screening {
                let (kept, report) = screen(&dataset, &ScreeningConfig::new(tau, rate)?)?;
                say(&format!(
                    "screening kept {}/{} records",
                    report.records_after, report.records_before
                ));
                kept
            } else {
                dataset
            };
            let stats = spoalign::spo::compute_global_stats(&dataset)?;
            let targets = spoalign::spo::make_training_targets(&dataset)?;
            if targets.dropped_records > 0 {
                say(&format!(
                    "dropped {} records from degenerate listeners",
                    targets.dropped_records
                ));
            }
            let model = train(&dataset, &table, &targets.targets, &stats, &train_config)?;
            model.save(&out)?;
            let log_path = out.with_extension("log.jsonl");
            let mut log = String::new();
            for entry in &model.loss_history {
                log.push_str(&serde_json::to_string(entry).map_err(|e| Error::Json {
                    path: Some(log_path.clone()),
                    source: e,
                })?);
                log.push('\n');
            }
            std::fs::write(&log_path, log).map_err(|e| Error::Io {
                path: log_path.clone(),
                source: e,
            })?;
            let last = model.loss_history.last().expect("at least one epoch");
            say(&format!(
                "trained {} epochs; final loss {:.6}; model at {}",
                model.config.epochs,
                last.total,
                out.display()
            ));
            Ok(())
        }
        Command::Predict {
            model,
            embeddings,
            pairs,
            out,
        } => {
            let table = data::load_embeddings(&embeddings)?;
            let pair_refs = data::load_scores(&pairs, false)?.unique_pairs();
            let preds = pipeline::predict(&model, &table, &pair_refs)?;
            write_json(&out, &preds)?;
            say(&format!("predicted {} pairs", preds.len()));
            Ok(())
        }
        Command::Ensemble {
            spec,
            embeddings,
            pairs,
            out,
        } => {
            let spec: EnsembleSpec = read_json(&spec)?;
            let loaded = build_challenge_ensemble(&spec)?;
            say(&format!("ensemble composition: {:?}", loaded.composition));
            let table = data::load_embeddings(&embeddings)?;
            let pair_refs = data::load_scores(&pairs, false)?.unique_pairs();
            let preds = ensemble_predict(&loaded.models(), &table, &pair_refs)?;
            write_json(&out, &preds)?;
            say(&format!(
                "averaged {} models over {} pairs",
                loaded.members.len(),
                preds.len()
            ));
            Ok(())
        }
        Command::Evaluate { preds, scores, out } => {
            let predictions: BTreeMap<String, f64> = read_json(&preds)?;
            let dataset = data::load_scores(&scores, false)?;
            let report = evaluate(&predictions, &dataset)?;
            write_json(&out, &report)?;
            say(&format!(
                "n {} | srcc {} | lcc {} | ktau {} | mse {:.4}",
                report.n,
                fmt_opt(report.srcc),
                fmt_opt(report.lcc),
                fmt_opt(report.ktau),
                report.mse
            ));
            Ok(())
        }
        Command::Pipeline { .. } => unreachable!("pipeline handled in main"),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    // The pipeline carries stage-specific exit codes, so it gets its own path.
    if let Command::Pipeline { config } = &cli.command {
        let mut pipeline_config = match PipelineConfig::load(config) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        };
        if let Some(workdir) = &cli.workdir {
            pipeline_config.workdir = workdir.clone();
        }
        let quiet = cli.quiet;
        let result = pipeline::run_pipeline_with_progress(&pipeline_config, |msg| {
            if !quiet {
                eprintln!("{msg}");
            }
        });
        return match result {
            Ok(summary) => {
                if !quiet {
                    for (name, report) in &summary.ensembles {
                        eprintln!(
                            "ensemble {name}: srcc {} | lcc {} | ktau {} | mse {:.4}",
                            fmt_opt(report.srcc),
                            fmt_opt(report.lcc),
                            fmt_opt(report.ktau),
                            report.mse
                        );
                    }
                    eprintln!(
                        "summary at {}",
                        pipeline_config.workdir.join("summary.json").display()
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.stage.exit_code() as u8)
            }
        };
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
