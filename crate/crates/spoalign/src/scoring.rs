//! The prediction model: a trainable affine projection applied to the
//! audio embedding, followed by cosine similarity with the (frozen) text
//! embedding, scaled by 10 to match the 0..10 rating scale.
//!
//! A fresh head is the identity map, so an untrained model scores exactly
//! 10x the raw cosine of the stored embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm floor below which a cosine denominator counts as zero. Silent
/// clamping would hide corrupt data, so this is an error instead.
pub const NORM_EPSILON: f64 = 1e-12;

/// Trainable affine map (dim x dim weight, dim bias) over audio embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub dim: usize,
    /// Row-major, `dim * dim` entries.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A model's raw score for one pair; cosine keeps it within [-10, 10].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair_id: String,
    pub x_hat: f64,
}

impl ProjectionHead {
    /// Identity weight, zero bias: scores equal the untrained cosine x 10.
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("projection dim must be positive".into()));
        }
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Ok(ProjectionHead {
            dim,
            weight,
            bias: vec![0.0; dim],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("projection dim must be positive".into()));
        }
        if self.weight.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                got: self.weight.len(),
            });
        }
        if self.bias.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.bias.len(),
            });
        }
        if let Some(v) = self
            .weight
            .iter()
            .chain(self.bias.iter())
            .find(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "projection head contains non-finite entry {v}"
            )));
        }
        Ok(())
    }
}

fn check_dim(head: &ProjectionHead, vector: &[f64]) -> Result<()> {
    if vector.len() != head.dim {
        return Err(Error::DimensionMismatch {
            expected: head.dim,
            got: vector.len(),
        });
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// weight . e + bias
pub fn project_audio(head: &ProjectionHead, e_audio_raw: &[f64]) -> Result<Vec<f64>> {
    check_dim(head, e_audio_raw)?;
    let d = head.dim;
    let mut out = head.bias.clone();
    for (row, out_k) in out.iter_mut().enumerate() {
        let w_row = &head.weight[row * d..(row + 1) * d];
        *out_k += dot(w_row, e_audio_raw);
    }
    Ok(out)
}

/// x_hat = 10 * cos(project(e_audio), e_text), in [-10, 10].
pub fn score(head: &ProjectionHead, e_audio_raw: &[f64], e_text: &[f64]) -> Result<f64> {
    check_dim(head, e_text)?;
    let v = project_audio(head, e_audio_raw)?;
    let nv = norm(&v);
    let nt = norm(e_text);
    if nv < NORM_EPSILON {
        return Err(Error::ZeroNormVector {
            side: "projected audio",
        });
    }
    if nt < NORM_EPSILON {
        return Err(Error::ZeroNormVector { side: "text" });
    }
    Ok(10.0 * dot(&v, e_text) / (nv * nt))
}

/// Analytic gradient of the score with respect to the head parameters.
/// Returns (d x_hat / d weight) row-major and (d x_hat / d bias).
///
/// With v = W a + b, u = v / ||v||, t = e_text / ||e_text||:
///   d x_hat / d v = 10 (t - (u . t) u) / ||v||
/// and the chain rule gives dW[k][j] = g[k] * a[j], db[k] = g[k].
pub fn score_gradient(
    head: &ProjectionHead,
    e_audio_raw: &[f64],
    e_text: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(head, e_text)?;
    let v = project_audio(head, e_audio_raw)?;
    let nv = norm(&v);
    let nt = norm(e_text);
    if nv < NORM_EPSILON {
        return Err(Error::ZeroNormVector {
            side: "projected audio",
        });
    }
    if nt < NORM_EPSILON {
        return Err(Error::ZeroNormVector { side: "text" });
    }
    let cos = dot(&v, e_text) / (nv * nt);
    let d = head.dim;
    let g: Vec<f64> = (0..d)
        .map(|k| 10.0 * (e_text[k] / nt - cos * v[k] / nv) / nv)
        .collect();
    let mut d_weight = vec![0.0; d * d];
    for k in 0..d {
        for j in 0..d {
            d_weight[k * d + j] = g[k] * e_audio_raw[j];
        }
    }
    Ok((d_weight, g))
}
