//! Standardized preference scores.
//!
//! Raw ratings carry per-listener scale and offset habits (one listener
//! lives on 0..10, another never leaves 3..8). Standardizing each
//! listener's scores by their own mean and standard deviation turns raw
//! ratings into relative preference indicators: positive means "above
//! this listener's personal average". Training targets use these
//! standardized values; predictions are normalized by the global training
//! mean and standard deviation to live on the same scale.
//!
//! All standard deviations here are population form (divide by n).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// A listener's standard deviation below this threshold counts as
/// degenerate: a constant-scoring listener carries no preference signal.
pub const SIGMA_EPSILON: f64 = 1e-8;

/// Per-listener score statistics over the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerStats {
    pub listener_id: String,
    pub mu: f64,
    pub sigma: f64,
    pub count: usize,
}

/// Global mean/std of the raw scores in the (post-screening) training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub mu_train: f64,
    pub sigma_train: f64,
}

/// One training target: the standardized preference score of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub pair_id: String,
    pub listener_id: String,
    pub value: f64,
}

/// Targets plus how many records were dropped for degenerate listeners.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTargets {
    pub targets: Vec<Target>,
    pub dropped_records: usize,
}

fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mu = sum / n as f64;
    let var = values.map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    (mu, var.sqrt(), n)
}

/// Population mean/std of each listener's raw scores.
pub fn compute_listener_stats(dataset: &Dataset) -> Result<BTreeMap<String, ListenerStats>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("listener stats on empty dataset"));
    }
    let mut per_listener: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for rec in dataset.records() {
        per_listener
            .entry(&rec.listener_id)
            .or_default()
            .push(rec.score as f64);
    }
    Ok(per_listener
        .into_iter()
        .map(|(listener_id, scores)| {
            let (mu, sigma, count) = population_stats(scores.iter().copied());
            (
                listener_id.to_owned(),
                ListenerStats {
                    listener_id: listener_id.to_owned(),
                    mu,
                    sigma,
                    count,
                },
            )
        })
        .collect())
}

/// z-score one raw rating against its listener's statistics.
pub fn standardize(score: u8, stats: &ListenerStats) -> Result<f64> {
    if stats.sigma < SIGMA_EPSILON {
        return Err(Error::DegenerateListener {
            listener_id: stats.listener_id.clone(),
            sigma: stats.sigma,
        });
    }
    Ok((score as f64 - stats.mu) / stats.sigma)
}

/// Population mean/std over all raw scores of the dataset.
pub fn compute_global_stats(dataset: &Dataset) -> Result<GlobalStats> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("global stats on empty dataset"));
    }
    let (mu, sigma, _) = population_stats(dataset.records().iter().map(|r| r.score as f64));
    if sigma < SIGMA_EPSILON {
        return Err(Error::DegenerateGlobalStd);
    }
    Ok(GlobalStats {
        mu_train: mu,
        sigma_train: sigma,
    })
}

/// Standardize every record of the dataset. Records of degenerate
/// listeners are dropped and counted, not fatal. Target order follows
/// dataset record order.
pub fn make_training_targets(dataset: &Dataset) -> Result<TrainingTargets> {
    if dataset.is_empty() {
        return Ok(TrainingTargets {
            targets: Vec::new(),
            dropped_records: 0,
        });
    }
    let stats = compute_listener_stats(dataset)?;
    let mut targets = Vec::with_capacity(dataset.len());
    let mut dropped = 0usize;
    for rec in dataset.records() {
        let ls = &stats[&rec.listener_id];
        if ls.sigma < SIGMA_EPSILON {
            dropped += 1;
            continue;
        }
        targets.push(Target {
            pair_id: rec.pair_id.clone(),
            listener_id: rec.listener_id.clone(),
            value: (rec.score as f64 - ls.mu) / ls.sigma,
        });
    }
    Ok(TrainingTargets {
        targets,
        dropped_records: dropped,
    })
}

/// Listener and global statistics for one dataset, in the shape the
/// `spo-stats` report uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoStatsReport {
    pub listeners: BTreeMap<String, ListenerStats>,
    pub mu_train: f64,
    pub sigma_train: f64,
    pub dropped_records: usize,
}

impl SpoStatsReport {
    pub fn compute(dataset: &Dataset) -> Result<Self> {
        let listeners = compute_listener_stats(dataset)?;
        let global = compute_global_stats(dataset)?;
        let dropped = make_training_targets(dataset)?.dropped_records;
        Ok(SpoStatsReport {
            listeners,
            mu_train: global.mu_train,
            sigma_train: global.sigma_train,
            dropped_records: dropped,
        })
    }
}

/// Globally normalized raw-score targets: (score - mu_train) / sigma_train
/// for every record. This is the "no per-listener standardization"
/// counterpart of [`make_training_targets`], used for ablations.
pub fn make_raw_normalized_targets(dataset: &Dataset, stats: &GlobalStats) -> Vec<Target> {
    dataset
        .records()
        .iter()
        .map(|rec| Target {
            pair_id: rec.pair_id.clone(),
            listener_id: rec.listener_id.clone(),
            value: (rec.score as f64 - stats.mu_train) / stats.sigma_train,
        })
        .collect()
}
