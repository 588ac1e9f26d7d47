use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

/// Record of which labels were swapped and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub fraction: f64,
    pub seed: u64,
    /// Dataset indices whose labels were permuted, in draw order.
    pub selected: Vec<usize>,
    /// `selected[i]` receives the original label of `selected[permutation[i]]`.
    /// Always a single cycle over `0..selected.len()`.
    pub permutation: Vec<usize>,
}

/// `round(fraction * n)` with halves rounded up.
pub fn selection_count(fraction: f64, n: usize) -> usize {
    let k = Float::round(fraction * n as f64) as usize;
    k.min(n)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if (0.0..=1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("corruption fraction must be in [0, 1], got {fraction}")))
    }
}

/// Uniform random cyclic permutation of `0..n` (Sattolo's shuffle).
fn random_cycle(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

/// Swaps the labels of `round(fraction * N)` uniformly chosen examples among
/// themselves along one random cycle. The label multiset is unchanged.
pub fn corrupt_labels(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, CorruptionPlan)> {
    check_fraction(fraction)?;
    let n = ds.len();
    let k = selection_count(fraction, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selected = index::sample(&mut rng, n, k).into_vec();
    let permutation = random_cycle(k, &mut rng);
    let mut labels = ds.labels().to_vec();
    for (dst, &src) in selected.iter().zip(&permutation) {
        labels[*dst] = ds.labels()[selected[src]];
    }
    let prov = Provenance { corruption_fraction: fraction, corruption_seed: Some(seed), ..ds.provenance().clone() };
    let out = ds.with_labels(labels, prov)?;
    Ok((out, CorruptionPlan { fraction, seed, selected, permutation }))
}

/// Replaces every label with an independent uniform draw over the classes.
pub fn randomize_all_labels(ds: &Dataset, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = ds.class_count();
    let labels = (0..ds.len()).map(|_| rng.random_range(0..k)).collect();
    let prov = Provenance { random_label_seed: Some(seed), ..ds.provenance().clone() };
    ds.with_labels(labels, prov)
}

/// `n` examples drawn without replacement, in draw order.
pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("subset size must be positive".into()));
    }
    if n > ds.len() {
        return Err(Error::InvalidArgument(format!("subset of {n} from {} examples", ds.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, ds.len(), n).into_vec();
    let prov = Provenance { subset: Some((n, seed)), ..ds.provenance().clone() };
    ds.select(&picked, prov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::synthetic;
    use crate::tensor::Tensor;
    use alloc::vec;
    use alloc::vec::Vec;

    fn with_labels(labels: Vec<usize>, k: usize) -> Dataset {
        let n = labels.len();
        Dataset::new(Tensor::zeros(vec![n, 1, 1, 1]), labels, k, Provenance::default()).unwrap()
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn fraction_zero_is_identity() {
        let ds = synthetic(20, 1, 2, 2, 10);
        let (out, plan) = corrupt_labels(&ds, 0.0, 5).unwrap();
        assert_eq!(out.labels(), ds.labels());
        assert!(plan.selected.is_empty());
    }

    #[test]
    fn round_half_up() {
        assert_eq!(selection_count(0.5, 5), 3);
        assert_eq!(selection_count(0.25, 10), 3);
        assert_eq!(selection_count(0.0, 10), 0);
        assert_eq!(selection_count(1.0, 10), 10);
    }

    #[test]
    fn full_corruption_of_four_is_a_four_cycle() {
        // every cyclic arrangement of 4 labels: 3! = 6 of them
        let orig = [0usize, 1, 2, 3];
        let mut cycles = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        if sorted(p.to_vec()) != vec![0, 1, 2, 3] {
                            continue;
                        }
                        // single cycle: following p from 0 visits all 4
                        let mut seen = 1;
                        let mut x = p[0];
                        while x != 0 {
                            x = p[x];
                            seen += 1;
                        }
                        if seen == 4 {
                            cycles.push(p.iter().map(|&i| orig[i]).collect::<Vec<_>>());
                        }
                    }
                }
            }
        }
        assert_eq!(cycles.len(), 6);
        for seed in 0..20 {
            let (out, _) = corrupt_labels(&with_labels(orig.to_vec(), 4), 1.0, seed).unwrap();
            assert!(cycles.contains(&out.labels().to_vec()), "seed {seed}: {:?}", out.labels());
        }
    }

    #[test]
    fn rejects_bad_fraction() {
        let ds = synthetic(4, 1, 1, 1, 2);
        assert!(corrupt_labels(&ds, 1.5, 0).is_err());
        assert!(corrupt_labels(&ds, -0.1, 0).is_err());
    }

    #[test]
    fn random_labels_agree_at_chance() {
        let n = 10_000;
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let ds = with_labels(labels, 10);
        let r = randomize_all_labels(&ds, 11).unwrap();
        let agree = r.labels().iter().zip(ds.labels()).filter(|(a, b)| a == b).count() as f64 / n as f64;
        // binomial sd = sqrt(0.09 / 1e4) = 0.003
        assert!((agree - 0.1).abs() < 0.015, "{agree}");
        assert_eq!(randomize_all_labels(&ds, 11).unwrap(), r);

        let single = with_labels(vec![0; 5], 1);
        assert_eq!(randomize_all_labels(&single, 3).unwrap().labels(), single.labels());
    }

    #[test]
    fn subset_cases() {
        let ds = synthetic(12, 1, 1, 1, 3);
        let full = subset(&ds, 12, 1).unwrap();
        assert_eq!(sorted(full.labels().to_vec()), sorted(ds.labels().to_vec()));
        assert!(subset(&ds, 0, 1).is_err());
        assert!(subset(&ds, 13, 1).is_err());
        assert_eq!(subset(&ds, 5, 2).unwrap().provenance().subset, Some((5, 2)));
    }

    #[test]
    fn subset_class_balance() {
        // 10 balanced classes, 2000 of 10000 drawn: chi-square with 9 dof
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        let ds = with_labels(labels, 10);
        let s = subset(&ds, 2000, 9).unwrap();
        let mut counts = [0f64; 10];
        s.labels().iter().for_each(|&l| counts[l] += 1.0);
        let chi2: f64 = counts.iter().map(|c| (c - 200.0).powi(2) / 200.0).sum();
        // 99.9th percentile of chi2(9) is 27.88
        assert!(chi2 < 27.88, "{chi2}");
    }
}
