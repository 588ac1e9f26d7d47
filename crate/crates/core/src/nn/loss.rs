use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

fn check_logits<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let s = logits.shape();
    if s.len() != 2 {
        return Err(Error::Shape(format!("logits must be [batch, classes], got {s:?}")));
    }
    let (n, k) = (s[0], s[1]);
    if n == 0 {
        return Err(Error::Empty("logits"));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, class_count: k });
    }
    Ok((n, k))
}

/// `ln(sum(exp(row)))` computed in 64-bit with the max subtracted.
pub fn log_sum_exp<T: Real>(row: &[T]) -> f64 {
    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|v| Float::exp(v.as_f64() - max)).sum();
    max + Float::ln(s)
}

/// Mean over rows of `-log softmax(logits)[label]`.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, _) = check_logits(logits, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row(i);
            log_sum_exp(row) - row[y].as_f64()
        })
        .sum();
    Ok(total / n as f64)
}

/// Sum (not mean) of per-example cross-entropy, for streaming evaluation.
pub(crate) fn cross_entropy_sum<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, _) = check_logits(logits, labels)?;
    Ok(cross_entropy(logits, labels)? * n as f64)
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy_with_grad<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (n, k) = check_logits(logits, labels)?;
    let inv_n = 1.0 / n as f64;
    let mut grad = Vec::with_capacity(n * k);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        total += lse - row[y].as_f64();
        for (j, v) in row.iter().enumerate() {
            let p = Float::exp(v.as_f64() - lse);
            let target = if j == y { 1.0 } else { 0.0 };
            grad.push(T::of_f64((p - target) * inv_n));
        }
    }
    Ok((total * inv_n, Tensor::from_parts(logits.shape().to_vec(), grad)?))
}

/// Binary logistic loss `sum_n ln(1 + exp(-y_n f_n))` with `y_n` in {-1, +1}.
pub fn binary_logistic(scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    scores.iter().zip(labels).try_fold(0.0, |acc, (&f, &y)| {
        if y != 1 && y != -1 {
            return Err(Error::InvalidArgument(format!("binary label must be -1 or +1, got {y}")));
        }
        Ok(acc + softplus(-(y as f64) * f))
    })
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + Float::ln_1p(Float::exp(-z.abs()))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose argmax differs from the label.
pub fn classification_error<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, _) = check_logits(logits, labels)?;
    Ok(count_errors(logits, labels) as f64 / n as f64)
}

pub(crate) fn count_errors<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    labels.iter().enumerate().filter(|&(i, &y)| argmax(logits.row(i)) != y).count()
}
