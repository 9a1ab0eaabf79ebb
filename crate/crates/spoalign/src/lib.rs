//! Predicting human-judged audio-text semantic-alignment scores from
//! precomputed embeddings.
//!
//! The pipeline: simulated listeners rate how well audio matches text on a
//! 0..10 scale; inconsistent listeners are screened out; each remaining
//! listener's ratings are standardized into relative preference scores; a
//! trainable affine projection over the audio embedding, scored by cosine
//! similarity against the text embedding (x 10), is fit to those targets
//! with a regression plus pairwise-contrastive objective; models trained
//! under different settings are ensembled by averaging; predictions are
//! judged by SRCC, LCC, KTAU, and MSE against mean human scores.
//!
//! ## Start with the examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! examples/
//! ├── synthetic_data.rs      # generate a rated dataset with known ground truth
//! ├── screening.rs           # NG-score flagging and listener exclusion
//! ├── standardization.rs     # per-listener preference standardization
//! ├── train_model.rs         # fit one projection head, watch the loss fall
//! ├── evaluate_metrics.rs    # SRCC/LCC/KTAU/MSE with tie handling
//! ├── ensemble_models.rs     # average models trained under different seeds
//! └── full_pipeline.rs       # the whole A/B/C setting grid, end to end
//! ```
//!
//! ```bash
//! cargo run --example synthetic_data
//! cargo run --example screening
//! cargo run --example standardization
//! cargo run --example train_model
//! cargo run --example evaluate_metrics
//! cargo run --example ensemble_models
//! cargo run --example full_pipeline
//! ```
//!
//! ## Library sketch
//!
//! ```
//! use spoalign::prelude::*;
//!
//! // Simulated panel: two honest listeners, one consistently harsh,
//! // one erratic.
//! let pool = vec![
//!     ListenerProfile::faithful("ana"),
//!     ListenerProfile::faithful("ben"),
//!     ListenerProfile { listener_id: "cruz".into(), scale: 1.0, offset: -1.0,
//!                       noise_std: 0.0, outlier_prob: 0.0 },
//!     ListenerProfile { listener_id: "dee".into(), scale: 1.0, offset: 0.0,
//!                       noise_std: 0.0, outlier_prob: 1.0 },
//! ];
//! let config = SynthConfig {
//!     num_texts: 60, audios_per_text: 3, listeners_per_pair: 4,
//!     dim: 16, listener_pool: pool, noise_std: 1.0, seed: 7,
//! };
//! let (dataset, embeddings, _latent) = synth::generate(&config)?;
//!
//! // Screen, standardize, train, evaluate.
//! let screening = ScreeningConfig::new(5.0, 0.2)?;
//! let (kept, report) = screening::screen(&dataset, &screening)?;
//! assert!(report.excluded_listeners.contains(&"dee".to_string()));
//!
//! let stats = spo::compute_global_stats(&kept)?;
//! let targets = spo::make_training_targets(&kept)?.targets;
//! let model = training::train(&kept, &embeddings, &targets, &stats,
//!                             &TrainConfig { epochs: 5, ..TrainConfig::default() })?;
//! let preds = ensemble::ensemble_predict(&[&model], &embeddings, &kept.unique_pairs())?;
//! let metrics = metrics::evaluate(&preds, &kept)?;
//! println!("srcc = {:?}", metrics.srcc);
//! # Ok::<(), spoalign::Error>(())
//! ```
//!
//! The `spoalign` binary exposes the same stages as subcommands
//! (`synth`, `screen`, `spo-stats`, `train`, `predict`, `ensemble`,
//! `evaluate`, `pipeline`); see the README for file formats.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod screening;
pub mod spo;
pub mod synth;
pub mod training;

pub use error::{Error, Result};

/// The types most callers need.
pub mod prelude {
    pub use crate::data::{Dataset, EmbeddingTable, PairRef, ScoreRecord};
    pub use crate::ensemble::{self, EnsembleMember, EnsembleSpec, Setting};
    pub use crate::error::{Error, Result};
    pub use crate::metrics::{self, MetricReport};
    pub use crate::pipeline::{self, PipelineConfig, PipelineSummary};
    pub use crate::scoring::{self, ProjectionHead};
    pub use crate::screening::{self, ScreeningConfig, ScreeningReport};
    pub use crate::spo::{self, GlobalStats, ListenerStats};
    pub use crate::synth::{self, ListenerProfile, SynthConfig};
    pub use crate::training::{self, TrainConfig, TrainedModel};
}
