//! Skip-gram negative-sampling objective and its SGD update.

use super::{EmbeddingError, Result};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, which is `-ln σ(-x)`.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Scores one (center, output) pair, accumulates the center update into
/// `center_delta` and applies the output update in place.
///
/// Both updates use the pre-step values, so calling this for each target of a
/// step and only then adding `center_delta` to the center is one exact SGD
/// step on the summed loss.
#[inline]
pub(crate) fn update_output(
    center: &[f64],
    output: &mut [f64],
    positive: bool,
    lr: f64,
    center_delta: &mut [f64],
) -> f64 {
    let score = dot(center, output);
    let (loss, g) = if positive {
        (softplus(-score), 1.0 - sigmoid(score))
    } else {
        (softplus(score), -sigmoid(score))
    };
    let step = lr * g;
    for ((o, c), d) in output.iter_mut().zip(center).zip(center_delta.iter_mut()) {
        let old = *o;
        *d += step * old;
        *o = old + step * c;
    }
    loss
}

/// Loss of one positive pair and its negatives:
/// `-ln σ(w·c) - Σ ln σ(-w·n)`.
pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<f64> {
    check_dims(center.len(), context.len(), negatives.iter().map(|n| n.len()))?;
    Ok(softplus(-dot(center, context))
        + negatives.iter().map(|n| softplus(dot(center, n))).sum::<f64>())
}

/// One SGD step on [`sgns_loss`]. Returns the loss before the update.
pub fn sgns_step(
    center: &mut [f64],
    context: &mut [f64],
    negatives: &mut [&mut [f64]],
    lr: f64,
) -> Result<f64> {
    check_dims(center.len(), context.len(), negatives.iter().map(|n| n.len()))?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(EmbeddingError::Invalid(format!("learning rate {lr} must be ≥ 0")));
    }
    let mut delta = vec![0.0; center.len()];
    let mut loss = update_output(center, context, true, lr, &mut delta);
    for n in negatives.iter_mut() {
        loss += update_output(center, n, false, lr, &mut delta);
    }
    for (c, d) in center.iter_mut().zip(&delta) {
        *c += d;
    }
    Ok(loss)
}

fn check_dims(center: usize, context: usize, negatives: impl Iterator<Item = usize>) -> Result<()> {
    if context != center {
        return Err(EmbeddingError::DimensionMismatch {
            expected: center,
            found: context,
        });
    }
    for n in negatives {
        if n != center {
            return Err(EmbeddingError::DimensionMismatch {
                expected: center,
                found: n,
            });
        }
    }
    Ok(())
}
