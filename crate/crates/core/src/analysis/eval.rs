use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::loss::{count_errors, cross_entropy_sum};
use crate::nn::{Mode, Network};
use crate::real::Real;

/// Examples per forward pass during evaluation. Sums are accumulated in
/// dataset order, so results do not depend on it.
pub const EVAL_BATCH: usize = 256;

/// Mean cross-entropy and classification error of a network on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub loss: f64,
    pub error: f64,
    pub n: usize,
}

fn for_each_batch<T: Real>(
    net: &Network<T>,
    ds: &Dataset,
    mut f: impl FnMut(&crate::Tensor<T>, &[usize]) -> Result<()>,
) -> Result<()> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y) = ds.batch::<T>(chunk)?;
        let logits = net.forward(&x, Mode::Eval)?;
        f(&logits, &y)?;
    }
    Ok(())
}

/// Eval-mode loss and error over every example.
pub fn evaluate<T: Real>(net: &Network<T>, ds: &Dataset) -> Result<EvalReport> {
    if ds.class_count() != net.class_count() {
        return Err(Error::InvalidArgument(alloc::format!(
            "dataset has {} classes, network {}",
            ds.class_count(),
            net.class_count()
        )));
    }
    let mut loss = 0.0;
    let mut errors = 0usize;
    for_each_batch(net, ds, |logits, y| {
        loss += cross_entropy_sum(logits, y)?;
        errors += count_errors(logits, y);
        Ok(())
    })?;
    let n = ds.len();
    Ok(EvalReport { dataset_id: ds.id(), loss: loss / n as f64, error: errors as f64 / n as f64, n })
}

/// Equal-width bins over `[min, max]` of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

/// Histogram of `values`; a constant sample fills the first of `bins` unit-width bins.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Empty("histogram values"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        hi = lo + bins as f64;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Distribution of the largest logit per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputStats {
    pub histogram: Histogram,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

/// Histogram with mean and std of the winning-class output over a dataset.
pub fn output_histogram<T: Real>(net: &Network<T>, ds: &Dataset, bins: usize) -> Result<OutputStats> {
    let mut top = Vec::with_capacity(ds.len());
    for_each_batch(net, ds, |logits, y| {
        for i in 0..y.len() {
            top.push(logits.row(i).iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(())
    })?;
    let n = top.len();
    let mean = top.iter().sum::<f64>() / n as f64;
    let std = Float::sqrt(top.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64);
    Ok(OutputStats { histogram: histogram(&top, bins)?, mean, std, n })
}
