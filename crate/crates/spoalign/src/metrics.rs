//! Evaluation metrics: SRCC, LCC, KTAU, and MSE between predicted scores
//! and mean human scores.
//!
//! Tie handling follows the de-facto standard implementations: SRCC uses
//! average (fractional) ranks, KTAU is tau-b with tie corrections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{group_scores_by_pair, mean_pair_score, Dataset};
use crate::error::{Error, Result};

/// All four metrics for one prediction set. Correlations degenerate to
/// `None` (with a note in `degenerate`) when an input has no variance,
/// instead of propagating NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub srcc: Option<f64>,
    pub lcc: Option<f64>,
    pub ktau: Option<f64>,
    pub mse: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Mean squared error.
pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            context: "mse",
            left: preds.len(),
            right: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("mse on empty input"));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64)
}

fn check_correlation_inputs(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            context: "correlation",
            left: preds.len(),
            right: targets.len(),
        });
    }
    if preds.len() < 2 {
        return Err(Error::EmptyInput("correlation needs at least two points"));
    }
    Ok(())
}

fn all_equal(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Pearson linear correlation.
pub fn lcc(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_correlation_inputs(preds, targets)?;
    if all_equal(preds) {
        return Err(Error::ZeroVariance { side: "predictions" });
    }
    if all_equal(targets) {
        return Err(Error::ZeroVariance { side: "targets" });
    }
    let n = preds.len() as f64;
    let mean_p = preds.iter().sum::<f64>() / n;
    let mean_t = targets.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_t = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        let dp = p - mean_p;
        let dt = t - mean_t;
        cov += dp * dt;
        var_p += dp * dp;
        var_t += dt * dt;
    }
    let denom = (var_p * var_t).sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroVariance { side: "predictions" });
    }
    Ok(cov / denom)
}

/// Average (fractional) ranks, 1-based; ties share the mean of the
/// positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average of ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn srcc(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_correlation_inputs(preds, targets)?;
    lcc(&average_ranks(preds), &average_ranks(targets))
}

/// Kendall rank correlation, tau-b, by exhaustive pair enumeration:
/// (C - D) / sqrt((n0 - n1)(n0 - n2)) with n1/n2 the pair counts tied on
/// each side (pairs tied on both count in both).
pub fn ktau(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_correlation_inputs(preds, targets)?;
    let n = preds.len();
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut tied_p = 0u64;
    let mut tied_t = 0u64;
    let mut tied_both = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dp = preds[i] - preds[j];
            let dt = targets[i] - targets[j];
            if dp == 0.0 && dt == 0.0 {
                tied_both += 1;
            } else if dp == 0.0 {
                tied_p += 1;
            } else if dt == 0.0 {
                tied_t += 1;
            } else if dp * dt > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as u64;
    let n1 = tied_p + tied_both;
    let n2 = tied_t + tied_both;
    if n0 == n1 || n0 == n2 {
        return Err(Error::DegenerateTau);
    }
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((concordant as f64 - discordant as f64) / denom)
}

/// Evaluate predictions against per-pair mean human scores. Targets use
/// every listener's score (evaluation data is never screened); pairs are
/// processed in pair_id order.
pub fn evaluate(preds: &BTreeMap<String, f64>, dataset: &Dataset) -> Result<MetricReport> {
    let groups = group_scores_by_pair(dataset);
    if groups.is_empty() {
        return Err(Error::EmptyInput("evaluate on empty dataset"));
    }
    let mut pred_vec = Vec::with_capacity(groups.len());
    let mut target_vec = Vec::with_capacity(groups.len());
    for (pair_id, scores) in &groups {
        let p = preds
            .get(pair_id)
            .ok_or_else(|| Error::MissingPrediction {
                pair_id: pair_id.clone(),
            })?;
        pred_vec.push(*p);
        target_vec.push(mean_pair_score(scores)?);
    }

    let mse_value = mse(&pred_vec, &target_vec)?;
    let mut degenerate = Vec::new();
    let mut run = |name: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            degenerate.push(format!("{name}: {e}"));
            None
        }
    };
    let srcc_value = run("srcc", srcc(&pred_vec, &target_vec));
    let lcc_value = run("lcc", lcc(&pred_vec, &target_vec));
    let ktau_value = run("ktau", ktau(&pred_vec, &target_vec));

    Ok(MetricReport {
        srcc: srcc_value,
        lcc: lcc_value,
        ktau: ktau_value,
        mse: mse_value,
        n: pred_vec.len(),
        degenerate,
    })
}
