//! Loss computation, Adam optimization with a linear warm-up schedule,
//! and the training loop for the projection head.
//!
//! The objective is a regression loss on standardized targets plus an
//! optional pairwise contrastive term:
//!
//!   L = mse(targets, preds_norm) + lambda * con(targets, preds_norm)
//!
//! where preds_norm = (x_hat - mu_train) / sigma_train and the contrastive
//! term is the mean over ordered in-batch pairs of
//! max(0, |dpred - dtarget| - margin). Differences of predictions must
//! track differences of targets; absolute offsets are free.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EmbeddingTable};
use crate::error::{Error, Result};
use crate::scoring::{self, ProjectionHead};
use crate::spo::{GlobalStats, Target};

/// Training hyperparameters. Defaults follow the common configuration:
/// Adam, 50 epochs, warm-up from 0 to 1e-4 peaking at epoch 5,
/// lambda 0.5, margin 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup: bool,
    pub warmup_peak_epoch: usize,
    pub initial_lr: f64,
    pub lambda_con: f64,
    pub contrastive: bool,
    pub screening: bool,
    pub margin: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            peak_lr: 1e-4,
            warmup: true,
            warmup_peak_epoch: 5,
            initial_lr: 0.0,
            lambda_con: 0.5,
            contrastive: false,
            screening: false,
            margin: 0.1,
            batch_size: 32,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::InvalidConfig("peak_lr must be > 0".into()));
        }
        if self.warmup_peak_epoch > self.epochs {
            return Err(Error::InvalidConfig(
                "warmup_peak_epoch must be <= epochs".into(),
            ));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr >= 0.0) {
            return Err(Error::InvalidConfig("initial_lr must be >= 0".into()));
        }
        if !(self.lambda_con.is_finite() && self.lambda_con >= 0.0) {
            return Err(Error::InvalidConfig("lambda_con must be >= 0".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidConfig("margin must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1)")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::InvalidConfig("adam_eps must be > 0".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of the configuration (FNV-1a over its canonical
    /// JSON encoding), recorded in trained model files.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in json.as_bytes() {
            hash ^= *byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

/// Per-epoch mean losses (batch-size weighted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub reg: f64,
    pub con: f64,
}

/// A trained head plus everything needed to reproduce and apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub head: ProjectionHead,
    pub config: TrainConfig,
    pub global_stats: GlobalStats,
    pub loss_history: Vec<EpochLoss>,
    pub seed: u64,
    pub config_hash: String,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel =
            serde_json::from_str(&content).map_err(|e| Error::json(path, e))?;
        model.head.validate()?;
        Ok(model)
    }
}

/// Mean squared error between standardized targets and normalized predictions.
pub fn regression_loss(targets: &[f64], preds_norm: &[f64]) -> Result<f64> {
    if targets.len() != preds_norm.len() {
        return Err(Error::LengthMismatch {
            context: "regression loss",
            left: targets.len(),
            right: preds_norm.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("regression loss on empty batch"));
    }
    Ok(targets
        .iter()
        .zip(preds_norm)
        .map(|(t, p)| (p - t) * (p - t))
        .sum::<f64>()
        / targets.len() as f64)
}

/// (x_hat - mu_train) / sigma_train
pub fn normalize_prediction(x_hat: f64, stats: &GlobalStats) -> f64 {
    (x_hat - stats.mu_train) / stats.sigma_train
}

/// Pairwise difference-preserving hinge: mean over ordered pairs i != j of
/// max(0, |(p_i - p_j) - (t_i - t_j)| - margin). Batches with fewer than
/// two elements have no pairs and contribute zero.
pub fn contrastive_loss(targets: &[f64], preds_norm: &[f64], margin: f64) -> Result<f64> {
    if targets.len() != preds_norm.len() {
        return Err(Error::LengthMismatch {
            context: "contrastive loss",
            left: targets.len(),
            right: preds_norm.len(),
        });
    }
    let n = targets.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let diff = (preds_norm[i] - preds_norm[j]) - (targets[i] - targets[j]);
            sum += (diff.abs() - margin).max(0.0);
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Combined objective; returns (total, reg, con). The contrastive value is
/// always computed for logging but only enters the total when enabled.
pub fn total_loss(
    targets: &[f64],
    preds_norm: &[f64],
    lambda_con: f64,
    margin: f64,
    contrastive_enabled: bool,
) -> Result<(f64, f64, f64)> {
    let reg = regression_loss(targets, preds_norm)?;
    let con = contrastive_loss(targets, preds_norm, margin)?;
    let total = if contrastive_enabled {
        reg + lambda_con * con
    } else {
        reg
    };
    Ok((total, reg, con))
}

/// Learning rate at an epoch: linear from `initial_lr` at epoch 0 to
/// `peak_lr` at `warmup_peak_epoch`, constant afterward; constant
/// `peak_lr` when warm-up is off.
pub fn lr_at_epoch(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            epochs: config.epochs,
        });
    }
    if !config.warmup || epoch >= config.warmup_peak_epoch {
        return Ok(config.peak_lr);
    }
    let frac = epoch as f64 / config.warmup_peak_epoch as f64;
    Ok(config.initial_lr + (config.peak_lr - config.initial_lr) * frac)
}

/// Adam moment estimates; one state per model, weight and bias jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::LengthMismatch {
            context: "adam step",
            left: params.len(),
            right: grads.len(),
        });
    }
    if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            index: idx,
            value: grads[idx],
        });
    }
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// One resolved training example: embeddings plus the standardized target.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub audio: Vec<f64>,
    pub text: Vec<f64>,
    pub target: f64,
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub reg: f64,
    pub con: f64,
}

/// Gradient of the batch loss with respect to the head parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Batch loss by straight composition of the public operations
/// (score -> normalize -> total_loss). This is the reference path the
/// analytic gradient is checked against.
pub fn batch_loss(
    head: &ProjectionHead,
    batch: &[TrainingExample],
    stats: &GlobalStats,
    config: &TrainConfig,
) -> Result<LossTerms> {
    let mut targets = Vec::with_capacity(batch.len());
    let mut preds = Vec::with_capacity(batch.len());
    for ex in batch {
        targets.push(ex.target);
        preds.push(normalize_prediction(
            scoring::score(head, &ex.audio, &ex.text)?,
            stats,
        ));
    }
    let (total, reg, con) = total_loss(
        &targets,
        &preds,
        config.lambda_con,
        config.margin,
        config.contrastive,
    )?;
    Ok(LossTerms { total, reg, con })
}

/// Batch loss together with its analytic gradient.
pub fn batch_loss_and_gradient(
    head: &ProjectionHead,
    batch: &[TrainingExample],
    stats: &GlobalStats,
    config: &TrainConfig,
) -> Result<(LossTerms, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient on empty batch"));
    }
    let n = batch.len();
    let d = head.dim;

    // Forward pass, caching the per-example score gradient direction.
    let mut preds = Vec::with_capacity(n);
    let mut score_grads: Vec<Vec<f64>> = Vec::with_capacity(n); // d x_hat / d v
    for ex in batch {
        let v = scoring::project_audio(head, &ex.audio)?;
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nt = ex.text.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv < scoring::NORM_EPSILON {
            return Err(Error::ZeroNormVector {
                side: "projected audio",
            });
        }
        if nt < scoring::NORM_EPSILON {
            return Err(Error::ZeroNormVector { side: "text" });
        }
        let dot = v.iter().zip(&ex.text).map(|(a, b)| a * b).sum::<f64>();
        // Same expression shape as scoring::score so the two paths agree
        // bit-for-bit; exact agreement makes a perfect fit a true fixed
        // point of the optimizer.
        let x_hat = 10.0 * dot / (nv * nt);
        preds.push(normalize_prediction(x_hat, stats));
        let cos = dot / (nv * nt);
        score_grads.push(
            (0..d)
                .map(|k| 10.0 * (ex.text[k] / nt - cos * v[k] / nv) / nv)
                .collect(),
        );
    }
    let targets: Vec<f64> = batch.iter().map(|ex| ex.target).collect();
    let (total, reg, con) = total_loss(
        &targets,
        &preds,
        config.lambda_con,
        config.margin,
        config.contrastive,
    )?;

    // d total / d preds_norm.
    let mut dp = vec![0.0; n];
    for i in 0..n {
        dp[i] = 2.0 * (preds[i] - targets[i]) / n as f64;
    }
    if config.contrastive && n >= 2 {
        let pair_weight = config.lambda_con / (n * (n - 1)) as f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let diff = (preds[i] - preds[j]) - (targets[i] - targets[j]);
                if diff.abs() > config.margin {
                    let s = diff.signum() * pair_weight;
                    dp[i] += s;
                    dp[j] -= s;
                }
            }
        }
    }

    // Chain through the normalization and the score: d p / d x_hat = 1/sigma,
    // d x_hat / d W[k][j] = g[k] * audio[j], d x_hat / d b[k] = g[k].
    let mut d_weight = vec![0.0; d * d];
    let mut d_bias = vec![0.0; d];
    for (i, ex) in batch.iter().enumerate() {
        let coeff = dp[i] / stats.sigma_train;
        if coeff == 0.0 {
            continue;
        }
        let g = &score_grads[i];
        for k in 0..d {
            let gk = coeff * g[k];
            d_bias[k] += gk;
            let row = &mut d_weight[k * d..(k + 1) * d];
            for (w, a) in row.iter_mut().zip(&ex.audio) {
                *w += gk * a;
            }
        }
    }

    Ok((
        LossTerms { total, reg, con },
        Gradients {
            weight: d_weight,
            bias: d_bias,
        },
    ))
}

/// Resolve targets against the dataset's pair map and the embedding table.
pub fn resolve_examples(
    dataset: &Dataset,
    embeddings: &EmbeddingTable,
    targets: &[Target],
) -> Result<Vec<TrainingExample>> {
    let pair_map: std::collections::BTreeMap<&str, (&str, &str)> = dataset
        .records()
        .iter()
        .map(|r| (r.pair_id.as_str(), (r.audio_id.as_str(), r.text_id.as_str())))
        .collect();
    targets
        .iter()
        .map(|t| {
            let &(audio_id, text_id) =
                pair_map
                    .get(t.pair_id.as_str())
                    .ok_or_else(|| Error::UnknownPair {
                        pair_id: t.pair_id.clone(),
                    })?;
            Ok(TrainingExample {
                audio: embeddings.get(audio_id)?.to_vec(),
                text: embeddings.get(text_id)?.to_vec(),
                target: t.value,
            })
        })
        .collect()
}

/// Train a projection head from identity initialization. Deterministic
/// given (config.seed, inputs): repeated runs produce bit-identical loss
/// histories and heads.
pub fn train(
    dataset: &Dataset,
    embeddings: &EmbeddingTable,
    targets: &[Target],
    global_stats: &GlobalStats,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if targets.is_empty() {
        return Err(Error::EmptyInput("training targets"));
    }
    let mut examples = resolve_examples(dataset, embeddings, targets)?;

    let d = embeddings.dim();
    let mut head = ProjectionHead::identity(d)?;
    let mut state = AdamState::new(d * d + d);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(epoch, config)?;
        examples.shuffle(&mut rng);

        let mut sums = (0.0, 0.0, 0.0);
        for batch in examples.chunks(config.batch_size) {
            let (losses, grad) = batch_loss_and_gradient(&head, batch, global_stats, config)?;
            if !losses.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let w = batch.len() as f64;
            sums.0 += losses.total * w;
            sums.1 += losses.reg * w;
            sums.2 += losses.con * w;

            let mut params: Vec<f64> = head
                .weight
                .iter()
                .chain(head.bias.iter())
                .copied()
                .collect();
            let grads: Vec<f64> = grad
                .weight
                .iter()
                .chain(grad.bias.iter())
                .copied()
                .collect();
            adam_step(
                &mut params,
                &grads,
                &mut state,
                lr,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_eps,
            )?;
            head.weight.copy_from_slice(&params[..d * d]);
            head.bias.copy_from_slice(&params[d * d..]);
        }

        let n = examples.len() as f64;
        loss_history.push(EpochLoss {
            epoch,
            total: sums.0 / n,
            reg: sums.1 / n,
            con: sums.2 / n,
        });
    }

    Ok(TrainedModel {
        head,
        config: config.clone(),
        global_stats: *global_stats,
        loss_history,
        seed: config.seed,
        config_hash: config.fingerprint(),
    })
}
