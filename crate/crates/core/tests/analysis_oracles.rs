mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use normgen_core::analysis::{
    linear_fit, min_norm_gd, min_norm_gd_observed, norm_equivalence_check, psi_transform, rademacher_linear,
    spearman, GdConfig,
};
use normgen_core::normalize::PNorm;
use rand::Rng;

/// Normal-equations least squares on the design `[1, x]`.
fn oracle_fit(pts: &[(f64, f64)]) -> (f64, f64, f64, f64, f64) {
    let n = pts.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { pts[i].0 });
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1));
    let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
    let resid = &y - &x * &beta;
    let sse = resid.norm_squared();
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = 1.0 - sse / sst;
    let adj = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - 2.0);
    (beta[1], beta[0], r2, adj, (sse / n as f64).sqrt())
}

#[test]
fn linear_fit_matches_normal_equations() {
    let mut r = rng(1);
    for t in 0..100 {
        let n = r.random_range(3..60);
        let slope: f64 = r.random_range(-2.0..2.0);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = r.random_range(0.0..3.0);
                (x, slope * x + 0.3 + r.random_range(-0.5..0.5))
            })
            .collect();
        let f = linear_fit(&pts).unwrap();
        let (s, i, r2, adj, rmse) = oracle_fit(&pts);
        for (name, a, b) in [
            ("slope", f.slope, s),
            ("intercept", f.intercept, i),
            ("r2", f.r2, r2),
            ("adj_r2", f.adj_r2.unwrap(), adj),
            ("rmse", f.rmse, rmse),
        ] {
            assert!((a - b).abs() < 1e-10, "set {t} {name}: {a} vs {b}");
        }
    }
}

#[test]
fn published_fit_values_round_trip_as_fixtures() {
    // points on y = 1.0075 x - 0.0174 and y = 0.9642 x + 0.0844 reproduce their coefficients
    for (m, c) in [(1.0075, -0.0174), (0.9642, 0.0844)] {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| 2.0 + 0.05 * i as f64).map(|x| (x, m * x + c)).collect();
        let f = linear_fit(&pts).unwrap();
        assert!((f.slope - m).abs() < 1e-10 && (f.intercept - c).abs() < 1e-10);
        assert!(f.rmse < 1e-12);
    }
}

#[test]
fn psi_grid_properties() {
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let v: Vec<f64> = grid.iter().map(|&x| psi_transform(x).unwrap()).collect();
    for i in 1..v.len() {
        assert!(v[i] > v[i - 1]);
        assert!(v[i] <= grid[i]);
    }
    for i in 1..v.len() - 1 {
        assert!(v[i + 1] - 2.0 * v[i] + v[i - 1] >= 0.0);
    }
    for (x, want) in [(0.0, 0.0), (1.0, 1.0), (0.6, 0.2)] {
        assert!((psi_transform(x).unwrap() - want).abs() < 1e-12);
    }
}

fn random_orthonormal(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = DMatrix::from_vec(d, n, gaussian(n * d, 1.0, seed));
    let q = g.qr().q();
    (0..n).map(|j| q.column(j).iter().copied().collect()).collect()
}

#[test]
fn rademacher_on_orthonormal_data_is_analytic() {
    for (n, d) in [(4, 4), (25, 40), (100, 100)] {
        let data = random_orthonormal(n, d, n as u64);
        let r = rademacher_linear(&data, 1.0, 200, 3).unwrap();
        let exact = 1.0 / (n as f64).sqrt();
        assert!((r.estimate - exact).abs() <= 3.0 * r.std_error + 1e-12, "{r:?}");
        assert!(r.estimate <= r.ceiling + 3.0 * r.std_error + 1e-12);
    }
}

#[test]
fn rademacher_respects_the_ceiling() {
    let mut r = rng(5);
    for t in 0..20 {
        let n = r.random_range(1..80);
        let d = r.random_range(1..30);
        let data: Vec<Vec<f64>> = (0..n).map(|i| gaussian(d, r.random_range(0.1..3.0), 100 * t + i as u64)).collect();
        let w = r.random_range(0.1..5.0);
        let est = rademacher_linear(&data, w, 300, t).unwrap();
        assert!(est.estimate <= est.ceiling + 3.0 * est.std_error, "{est:?}");
    }
}

#[test]
fn gd_limit_is_the_minimum_norm_solution() {
    let mut r = rng(11);
    for t in 0..20 {
        let n = r.random_range(2..12);
        let d = n + r.random_range(1..20);
        let xm = DMatrix::from_vec(n, d, gaussian(n * d, 1.0, 300 + t));
        let y = DVector::from_vec(gaussian(n, 1.0, 400 + t));
        let gram_inv = (&xm * xm.transpose()).try_inverse().unwrap();
        let w_star = xm.transpose() * &gram_inv * &y;
        let projector = xm.transpose() * &gram_inv * &xm;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| xm.row(i).iter().copied().collect()).collect();
        let mut worst_orth: f64 = 0.0;
        let report = min_norm_gd_observed(&rows, y.as_slice(), &GdConfig::default(), |_, w| {
            let w = DVector::from_column_slice(w);
            worst_orth = worst_orth.max((&w - &projector * &w).norm());
        })
        .unwrap();
        assert!(report.converged, "system {t}: {report:?}");
        let diff = report.weights.iter().zip(w_star.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "system {t}: {diff}");
        assert!(worst_orth < 1e-10, "system {t}: {worst_orth}");
    }
}

#[test]
fn gd_on_identity_returns_targets() {
    let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let y = [0.5, -1.0, 2.0, 0.0];
    let r = min_norm_gd(&rows, &y, &GdConfig::default()).unwrap();
    for (a, b) in r.weights.iter().zip(&y) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn norm_equivalence_on_random_vectors() {
    let mut r = rng(2);
    let kinds = [PNorm::Finite(1.0), PNorm::Finite(1.5), PNorm::Finite(2.0), PNorm::Finite(4.0), PNorm::Infinity];
    for t in 0..50 {
        let x = gaussian(r.random_range(2..40), 1.0, 500 + t);
        for (i, &p) in kinds.iter().enumerate() {
            for &q in &kinds[i..] {
                let c = norm_equivalence_check(&x, p, q).unwrap();
                assert!(c.holds, "{p:?} {q:?}: {c:?}");
                if i > 0 || q != p {
                    assert!(c.upper_ratio <= 1.0 + 1e-12 && c.lower_ratio <= 1.0 + 1e-12);
                }
            }
        }
    }
}

#[test]
fn spearman_of_monotone_transform_is_one() {
    let xs = gaussian(30, 1.0, 8);
    let ys: Vec<f64> = xs.iter().map(|v| v.exp()).collect();
    assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
}
