//! Synthetic benchmark data with a known ground truth.
//!
//! The generator builds embeddings with a controlled latent alignment and
//! simulates listeners with configurable bias, noise, and outlier
//! behavior, so screening, standardization, and training claims can be
//! tested without any external dataset.
//!
//! Construction: a fixed low-dimensional "nuisance" subspace models
//! non-semantic variation (think recording-channel axes). Text embeddings
//! are random unit vectors, so they overlap that subspace a little, the
//! way real text embeddings are not perfectly disentangled. Each audio
//! gets a clean embedding orthogonal to the nuisance subspace whose
//! cosine against the text is the latent alignment (arcsine-distributed,
//! so mass concentrates near 0 and 10 like strongly-misaligned and
//! strongly-aligned clips). The *stored* audio embedding additionally
//! carries random-magnitude nuisance components scaled by `noise_std`;
//! through the text overlap these corrupt the raw cosine on almost every
//! clip. A projection that suppresses the nuisance subspace recovers the
//! clean geometry exactly, so the corruption is learnable. Latent scores
//! are computed from the clean embeddings.
//!
//! All randomness flows from one seeded ChaCha8 stream; identical configs
//! produce identical outputs on a given build.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EmbeddingTable, ScoreRecord};
use crate::error::{Error, Result};

/// How one simulated listener maps latent quality to a raw score:
/// `clamp(round(scale * q + offset + gaussian(0, noise_std)), 0, 10)`,
/// replaced by a uniform draw from {0..10} with probability `outlier_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerProfile {
    pub listener_id: String,
    pub scale: f64,
    pub offset: f64,
    pub noise_std: f64,
    pub outlier_prob: f64,
}

impl ListenerProfile {
    /// An unbiased, noiseless listener.
    pub fn faithful(listener_id: impl Into<String>) -> Self {
        ListenerProfile {
            listener_id: listener_id.into(),
            scale: 1.0,
            offset: 0.0,
            noise_std: 0.0,
            outlier_prob: 0.0,
        }
    }
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_texts: usize,
    #[serde(default = "default_audios_per_text")]
    pub audios_per_text: usize,
    #[serde(default = "default_listeners_per_pair")]
    pub listeners_per_pair: usize,
    pub dim: usize,
    pub listener_pool: Vec<ListenerProfile>,
    /// Scale of the nuisance component mixed into stored audio embeddings.
    pub noise_std: f64,
    pub seed: u64,
}

fn default_audios_per_text() -> usize {
    3
}

fn default_listeners_per_pair() -> usize {
    4
}

/// Number of nuisance directions mixed into stored audio embeddings.
const NUISANCE_DIRS: usize = 4;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_texts == 0 || self.audios_per_text == 0 || self.listeners_per_pair == 0 {
            return Err(Error::InvalidConfig("all synth counts must be positive".into()));
        }
        if self.dim < NUISANCE_DIRS + 2 {
            return Err(Error::InvalidConfig(format!(
                "synth dim must be >= {}",
                NUISANCE_DIRS + 2
            )));
        }
        if self.listener_pool.len() < self.listeners_per_pair {
            return Err(Error::InvalidConfig(format!(
                "listener pool of {} cannot cover {} listeners per pair",
                self.listener_pool.len(),
                self.listeners_per_pair
            )));
        }
        let mut ids = std::collections::BTreeSet::new();
        for profile in &self.listener_pool {
            if !ids.insert(profile.listener_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate listener id in pool: {}",
                    profile.listener_id
                )));
            }
            if !(profile.scale.is_finite() && profile.scale > 0.0) {
                return Err(Error::InvalidConfig("listener scale must be > 0".into()));
            }
            if !(profile.noise_std.is_finite() && profile.noise_std >= 0.0) {
                return Err(Error::InvalidConfig("listener noise_std must be >= 0".into()));
            }
            if !(0.0..=1.0).contains(&profile.outlier_prob) {
                return Err(Error::InvalidConfig(
                    "listener outlier_prob must be in [0, 1]".into(),
                ));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("synth noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| gaussian(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    v
}

/// Remove the components of `v` along each (unit) direction.
fn project_out(mut v: Vec<f64>, directions: &[&[f64]]) -> Vec<f64> {
    for dir in directions {
        let d = dot(&v, dir);
        for (x, u) in v.iter_mut().zip(*dir) {
            *x -= d * u;
        }
    }
    v
}

/// Stored embeddings round-trip through the on-disk f32 format, so values
/// are quantized to f32 precision at generation time.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

/// One listener's raw score for a pair of latent quality `q`.
pub fn simulate_listener_score(q: f64, profile: &ListenerProfile, rng: &mut ChaCha8Rng) -> u8 {
    if rng.gen::<f64>() < profile.outlier_prob {
        return rng.gen_range(0..=10);
    }
    let noisy = profile.scale * q + profile.offset + gaussian(rng) * profile.noise_std;
    noisy.round().clamp(0.0, 10.0) as u8
}

/// Generate a dataset, its embedding table, and the latent alignment map.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, EmbeddingTable, BTreeMap<String, f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;

    let mut nuisance: Vec<Vec<f64>> = Vec::with_capacity(NUISANCE_DIRS);
    for _ in 0..NUISANCE_DIRS {
        let existing: Vec<&[f64]> = nuisance.iter().map(Vec::as_slice).collect();
        nuisance.push(normalize(project_out(
            gaussian_vec(&mut rng, dim),
            &existing,
        )));
    }
    let nuisance_refs: Vec<&[f64]> = nuisance.iter().map(Vec::as_slice).collect();

    let mut table = EmbeddingTable::new(dim)?;
    let mut latent = BTreeMap::new();
    let mut records = Vec::new();
    let pool = &config.listener_pool;

    for text_idx in 0..config.num_texts {
        let text_id = format!("t{text_idx:05}");
        let text_unit = normalize(gaussian_vec(&mut rng, dim));
        table.insert(&text_id, quantize(text_unit.clone()))?;
        let text_stored = table.get(&text_id)?.to_vec();
        // Semantic part of the text: what clean audio can align with.
        let text_semantic = normalize(project_out(text_unit.clone(), &nuisance_refs));

        // The same listeners rate every audio of this text.
        let listeners: Vec<&ListenerProfile> = (0..config.listeners_per_pair)
            .map(|k| &pool[(text_idx + k) % pool.len()])
            .collect();

        for audio_idx in 0..config.audios_per_text {
            let pair_id = format!("p{text_idx:05}_{audio_idx}");
            let audio_id = format!("a{text_idx:05}_{audio_idx}");

            // Arcsine-distributed latent alignment: most clips are clearly
            // good or clearly bad, which mirrors how panels separate.
            let alignment = (PI * rng.gen::<f64>() / 2.0).sin().powi(2);
            let mut blockers: Vec<&[f64]> = nuisance_refs.clone();
            blockers.push(text_unit.as_slice());
            let lateral = normalize(project_out(gaussian_vec(&mut rng, dim), &blockers));
            let clean: Vec<f64> = text_semantic
                .iter()
                .zip(&lateral)
                .map(|(t, w)| alignment * t + (1.0 - alignment * alignment).sqrt() * w)
                .collect();
            let q = 10.0
                * (dot(&clean, &text_stored) / (norm(&clean) * norm(&text_stored))).max(0.0);
            latent.insert(pair_id.clone(), q);

            let mut observed = clean.clone();
            for direction in &nuisance {
                let beta = config.noise_std * gaussian(&mut rng);
                for (o, c) in observed.iter_mut().zip(direction) {
                    *o += beta * c;
                }
            }
            table.insert(&audio_id, quantize(observed))?;

            for profile in &listeners {
                records.push(ScoreRecord {
                    pair_id: pair_id.clone(),
                    text_id: text_id.clone(),
                    audio_id: audio_id.clone(),
                    listener_id: profile.listener_id.clone(),
                    score: simulate_listener_score(q, profile, &mut rng),
                });
            }
        }
    }

    let dataset = Dataset::new(records, format!("synth-{}", config.seed))?;
    Ok((dataset, table, latent))
}
