//! Model ensembling: combine predictions from heads trained under
//! different settings, warm-up choices, and seeds by plain averaging.
//!
//! Members are kept in sorted (setting, warmup, seed) order so the
//! summation order, and therefore the output bits, never depend on how
//! the spec file lists them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingTable, PairRef};
use crate::error::{Error, Result};
use crate::scoring;
use crate::training::TrainedModel;

/// A/B/C training configurations: A = no screening and no contrastive
/// loss, B = both, C = screening only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
    C,
}

impl Setting {
    pub fn screening(self) -> bool {
        !matches!(self, Setting::A)
    }

    pub fn contrastive(self) -> bool {
        matches!(self, Setting::B)
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Setting::A => write!(f, "A"),
            Setting::B => write!(f, "B"),
            Setting::C => write!(f, "C"),
        }
    }
}

/// One ensemble member: a model file plus its grid coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub path: PathBuf,
    pub setting: Setting,
    pub warmup: bool,
    pub seed: u64,
}

/// The members to combine; the full challenge configuration lists
/// 3 settings x 2 warm-up choices x 3 seeds = 18 models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<EnsembleMember>,
}

/// A loaded, validated ensemble with a composition report.
#[derive(Debug)]
pub struct LoadedEnsemble {
    pub members: Vec<(EnsembleMember, TrainedModel)>,
    pub composition: BTreeMap<Setting, usize>,
}

impl LoadedEnsemble {
    pub fn models(&self) -> Vec<&TrainedModel> {
        self.members.iter().map(|(_, m)| m).collect()
    }
}

/// Load and validate every member of the spec: files must exist, grid
/// coordinates must be unique, and all heads must share one dimension.
pub fn build_challenge_ensemble(spec: &EnsembleSpec) -> Result<LoadedEnsemble> {
    if spec.members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut seen: BTreeSet<(Setting, bool, u64)> = BTreeSet::new();
    for member in &spec.members {
        if !seen.insert((member.setting, member.warmup, member.seed)) {
            return Err(Error::DuplicateEnsembleMember {
                setting: member.setting.to_string(),
                warmup: member.warmup,
                seed: member.seed,
            });
        }
    }
    let mut ordered = spec.members.clone();
    ordered.sort_by_key(|m| (m.setting, m.warmup, m.seed));

    let mut members = Vec::with_capacity(ordered.len());
    let mut composition: BTreeMap<Setting, usize> = BTreeMap::new();
    let mut dim = None;
    for member in ordered {
        let model = TrainedModel::load(&member.path)?;
        match dim {
            None => dim = Some(model.head.dim),
            Some(d) if d != model.head.dim => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: model.head.dim,
                })
            }
            _ => {}
        }
        *composition.entry(member.setting).or_insert(0) += 1;
        members.push((member, model));
    }
    Ok(LoadedEnsemble {
        members,
        composition,
    })
}

/// Mean of a fixed-order slice of member predictions. Identical members
/// must reproduce the single model exactly, so the all-equal case returns
/// the common value instead of round-tripping through a sum.
fn mean_predictions(values: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|v| v.to_bits() == first.to_bits()) {
        return first;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-pair unweighted mean of each model's raw score. Models are
/// evaluated in the order given; pass sorted members for bit-stable output.
pub fn ensemble_predict(
    models: &[&TrainedModel],
    embeddings: &EmbeddingTable,
    pairs: &[PairRef],
) -> Result<BTreeMap<String, f64>> {
    if models.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let dim = models[0].head.dim;
    for model in models {
        if model.head.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: model.head.dim,
            });
        }
    }
    let mut out = BTreeMap::new();
    let mut member_scores = Vec::with_capacity(models.len());
    for pair in pairs {
        let audio = embeddings.get(&pair.audio_id)?;
        let text = embeddings.get(&pair.text_id)?;
        member_scores.clear();
        for model in models {
            member_scores.push(scoring::score(&model.head, audio, text)?);
        }
        out.insert(pair.pair_id.clone(), mean_predictions(&member_scores));
    }
    Ok(out)
}
