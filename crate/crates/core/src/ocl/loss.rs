use serde::{Deserialize, Serialize};

use crate::scalar::dot;
use crate::Scalar;

use super::OclError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectEmbedding<T> {
    pub vector: Vec<T>,
    /// Name of the encoder (or adapter) that produced the vector.
    pub source: String,
    pub track_id: String,
}

impl<T: Scalar> ObjectEmbedding<T> {
    pub fn new(vector: Vec<T>, source: &str, track_id: &str) -> Self {
        Self {
            vector,
            source: source.to_string(),
            track_id: track_id.to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// One anchor (expert side, after the adapter) against its positive and negatives (base side).
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveBatch<T> {
    pub anchor: ObjectEmbedding<T>,
    pub positive: ObjectEmbedding<T>,
    pub negatives: Vec<ObjectEmbedding<T>>,
}

impl<T: Scalar> ContrastiveBatch<T> {
    pub fn check(&self) -> Result<(), OclError> {
        let d = self.anchor.dim();
        if d == 0 {
            return Err(OclError::InvalidBatch("zero-dimensional anchor".into()));
        }
        for e in std::iter::once(&self.positive).chain(&self.negatives) {
            if e.dim() != d {
                return Err(OclError::DimensionMismatch {
                    expected: d,
                    got: e.dim(),
                });
            }
        }
        for e in std::iter::once(&self.anchor).chain(std::iter::once(&self.positive)).chain(&self.negatives) {
            if e.vector.iter().any(|v| !v.is_finite()) {
                return Err(OclError::InvalidBatch(format!("non-finite value in {}", e.track_id)));
            }
        }
        if self.positive.track_id != self.anchor.track_id {
            return Err(OclError::InvalidBatch(format!(
                "positive track {} differs from anchor {}",
                self.positive.track_id, self.anchor.track_id
            )));
        }
        if let Some(n) = self.negatives.iter().find(|n| n.track_id == self.anchor.track_id) {
            return Err(OclError::InvalidBatch(format!("negative shares anchor track {}", n.track_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    /// Score with cosine similarity instead of raw dot products.
    pub cosine: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            cosine: false,
        }
    }
}

impl LossConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    pub grad_anchor: Vec<T>,
    pub grad_positive: Vec<T>,
    pub grad_negatives: Vec<Vec<T>>,
}

/// Cross-entropy of the first logit under softmax, with its gradient w.r.t. every logit.
///
/// Shifted by the max logit, so magnitudes far beyond the exp range are fine.
pub fn first_logit_cross_entropy<T: Scalar>(logits: &[T]) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let loss = (max + sum.ln()) - logits[0];
    let mut grad: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    grad[0] -= T::one();
    // log-sum-exp >= the first logit; clamp rounding noise
    (loss.max(T::zero()), grad)
}

fn normalized<T: Scalar>(v: &[T]) -> Result<(Vec<T>, T), OclError> {
    let norm = dot(v, v).sqrt();
    if norm <= T::zero() {
        return Err(OclError::ZeroNorm);
    }
    Ok((v.iter().map(|&x| x / norm).collect(), norm))
}

/// Gradient w.r.t. `x` given the gradient w.r.t. `x / |x|`.
fn through_normalization<T: Scalar>(unit: &[T], norm: T, g: &[T]) -> Vec<T> {
    let along = dot(unit, g);
    unit.iter().zip(g).map(|(&u, &gi)| (gi - along * u) / norm).collect()
}

/// Negative log of the probability that the anchor picks its positive among
/// positive and negatives, with similarities divided by the temperature.
pub fn contrastive_loss<T: Scalar>(batch: &ContrastiveBatch<T>, cfg: &LossConfig) -> Result<LossOutput<T>, OclError> {
    if !(cfg.temperature > 0.0) || !cfg.temperature.is_finite() {
        return Err(OclError::NonPositiveTemperature(cfg.temperature));
    }
    batch.check()?;
    let tau = T::from_f64_lossy(cfg.temperature);
    let raw: Vec<&[T]> = std::iter::once(batch.positive.vector.as_slice())
        .chain(batch.negatives.iter().map(|n| n.vector.as_slice()))
        .collect();

    if !cfg.cosine {
        let a = &batch.anchor.vector;
        let logits: Vec<T> = raw.iter().map(|c| dot(a, c) / tau).collect();
        let (loss, dl) = first_logit_cross_entropy(&logits);
        let mut grad_anchor = vec![T::zero(); a.len()];
        for (c, &w) in raw.iter().zip(&dl) {
            for (g, &ci) in grad_anchor.iter_mut().zip(c.iter()) {
                *g += w * ci / tau;
            }
        }
        let mut cand: Vec<Vec<T>> = dl.iter().map(|&w| a.iter().map(|&ai| w * ai / tau).collect()).collect();
        let grad_positive = cand.remove(0);
        return Ok(LossOutput {
            loss,
            grad_anchor,
            grad_positive,
            grad_negatives: cand,
        });
    }

    let (a, a_norm) = normalized(&batch.anchor.vector)?;
    let units: Vec<(Vec<T>, T)> = raw.iter().map(|c| normalized(c)).collect::<Result<_, _>>()?;
    let logits: Vec<T> = units.iter().map(|(c, _)| dot(&a, c) / tau).collect();
    let (loss, dl) = first_logit_cross_entropy(&logits);
    let mut g_unit_anchor = vec![T::zero(); a.len()];
    for ((c, _), &w) in units.iter().zip(&dl) {
        for (g, &ci) in g_unit_anchor.iter_mut().zip(c) {
            *g += w * ci / tau;
        }
    }
    let grad_anchor = through_normalization(&a, a_norm, &g_unit_anchor);
    let mut cand: Vec<Vec<T>> = units
        .iter()
        .zip(&dl)
        .map(|((c, n), &w)| {
            let g: Vec<T> = a.iter().map(|&ai| w * ai / tau).collect();
            through_normalization(c, *n, &g)
        })
        .collect();
    let grad_positive = cand.remove(0);
    Ok(LossOutput {
        loss,
        grad_anchor,
        grad_positive,
        grad_negatives: cand,
    })
}

/// The softmax probability of the positive, i.e. `exp(-loss)`.
pub fn match_probability<T: Scalar>(batch: &ContrastiveBatch<T>, cfg: &LossConfig) -> Result<T, OclError> {
    Ok((-contrastive_loss(batch, cfg)?.loss).exp())
}
