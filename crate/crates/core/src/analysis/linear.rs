use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::{NormKind, PNorm};

/// Entrywise `p`-norm of a vector.
pub fn lp_norm(x: &[f64], p: PNorm) -> f64 {
    NormKind { p, divisor: 1.0 }.of(x.iter().copied())
}

fn exponent_inverse(p: PNorm) -> f64 {
    match p {
        PNorm::Finite(p) => 1.0 / p,
        PNorm::Infinity => 0.0,
    }
}

/// The two comparisons between `p`- and `q`-norms of one vector, `p <= q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub norm_p: f64,
    pub norm_q: f64,
    /// `||x||_p / (n^(1/p - 1/q) ||x||_q)`; at most 1.
    pub upper_ratio: f64,
    /// `||x||_q / ||x||_p`; at most 1.
    pub lower_ratio: f64,
    /// Both ratios are at most 1 up to rounding.
    pub holds: bool,
}

/// Checks `||x||_q <= ||x||_p <= n^(1/p - 1/q) ||x||_q` for a nonzero vector.
pub fn norm_equivalence_check(x: &[f64], p: PNorm, q: PNorm) -> Result<NormEquivalence> {
    for e in [p, q] {
        NormKind::new(e, 1.0)?;
    }
    let (ip, iq) = (exponent_inverse(p), exponent_inverse(q));
    if ip < iq {
        return Err(Error::InvalidArgument("norm_equivalence_check needs p <= q".into()));
    }
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("vector must be non-empty and finite".into()));
    }
    let norm_p = lp_norm(x, p);
    let norm_q = lp_norm(x, q);
    if norm_q == 0.0 {
        return Err(Error::InvalidArgument("zero vector".into()));
    }
    let factor = Float::powf(x.len() as f64, ip - iq);
    let upper_ratio = norm_p / (factor * norm_q);
    let lower_ratio = norm_q / norm_p;
    let slack = 1.0 + 1e-12;
    Ok(NormEquivalence { norm_p, norm_q, upper_ratio, lower_ratio, holds: upper_ratio <= slack && lower_ratio <= slack })
}

/// Gradient-descent settings for the least-squares demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    /// Step size; `None` picks `1 / lambda_max` of `X^T X / N`.
    pub learning_rate: Option<f64>,
    pub max_iterations: usize,
    /// Stop once the gradient norm falls below this fraction of its initial value.
    pub tolerance: f64,
    /// Iterations over which a loss increase is read as divergence.
    pub divergence_window: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { learning_rate: None, max_iterations: 200_000, tolerance: 1e-13, divergence_window: 10 }
    }
}

/// Result of running gradient descent from zero on `(1/2N) ||Xw - y||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinNormReport {
    pub weights: Vec<f64>,
    pub norm: f64,
    /// `min_n y_n <w, x_n> / ||w||`; `None` when `w = 0`.
    pub margin: Option<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_max: f64,
    pub learning_rate: f64,
}

fn residual(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(row, &t)| dot(row, w) - t).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `X^T r / N`.
fn adjoint(x: &[Vec<f64>], r: &[f64], d: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let mut g = vec![0.0; d];
    for (row, &ri) in x.iter().zip(r) {
        g.iter_mut().zip(row).for_each(|(gj, xj)| *gj += ri * xj);
    }
    g.iter_mut().for_each(|v| *v /= n);
    g
}

fn norm2(v: &[f64]) -> f64 {
    Float::sqrt(dot(v, v))
}

/// Largest eigenvalue of `X^T X / N` by power iteration.
fn lambda_max(x: &[Vec<f64>], d: usize) -> f64 {
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 * 0.618_034).fract()).collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let nv = norm2(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|e| *e /= nv);
        let xv: Vec<f64> = x.iter().map(|row| dot(row, &v)).collect();
        let next = adjoint(x, &xv, d);
        let l = dot(&next, &v);
        v = next;
        if (l - lambda).abs() <= 1e-13 * l.abs() {
            return l;
        }
        lambda = l;
    }
    lambda
}

/// [`min_norm_gd_observed`] without an observer.
pub fn min_norm_gd(x: &[Vec<f64>], y: &[f64], cfg: &GdConfig) -> Result<MinNormReport> {
    min_norm_gd_observed(x, y, cfg, |_, _| {})
}

/// Gradient descent from `w = 0`. Every iterate is a combination of the rows
/// of `X`, so the limit is the minimum-norm least-squares solution.
/// `observe(t, w)` sees each iterate.
pub fn min_norm_gd_observed(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &GdConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<MinNormReport> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Empty("design matrix"));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("design matrix rows must share a positive width".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix or targets".into()));
    }
    let lam = lambda_max(x, d);
    if !(lam > 0.0) {
        return Err(Error::InvalidArgument("design matrix is zero".into()));
    }
    let lr = cfg.learning_rate.unwrap_or(1.0 / lam);
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    let loss_of = |r: &[f64]| dot(r, r) / (2.0 * n as f64);
    let floor = 1e-20 * dot(y, y) / (2.0 * n as f64);

    let mut w = vec![0.0; d];
    observe(0, &w);
    let mut r = residual(x, y, &w);
    let mut history = vec![loss_of(&r)];
    let mut g = adjoint(x, &r, d);
    let g0 = norm2(&g);
    let mut iterations = 0;
    let mut converged = g0 == 0.0;
    while !converged && iterations < cfg.max_iterations {
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= lr * gi);
        iterations += 1;
        observe(iterations, &w);
        r = residual(x, y, &w);
        let loss = loss_of(&r);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("loss became non-finite at iteration {iterations}")));
        }
        history.push(loss);
        if history.len() > cfg.divergence_window {
            let past = history[history.len() - 1 - cfg.divergence_window];
            if loss > past * (1.0 + 1e-9) + floor {
                return Err(Error::Diverged(format!(
                    "loss rose from {past:e} to {loss:e} over {} iterations (learning rate {lr:e}, 2/lambda_max {:e})",
                    cfg.divergence_window,
                    2.0 / lam
                )));
            }
        }
        g = adjoint(x, &r, d);
        converged = norm2(&g) <= cfg.tolerance * g0;
    }
    let norm = norm2(&w);
    let margin = (norm > 0.0)
        .then(|| x.iter().zip(y).map(|(row, &t)| t * dot(row, &w) / norm).fold(f64::INFINITY, f64::min));
    Ok(MinNormReport {
        loss: *history.last().expect("history starts non-empty"),
        weights: w,
        norm,
        margin,
        iterations,
        converged,
        lambda_max: lam,
        learning_rate: lr,
    })
}
