//! Comparison costs of the quicksort recursion on random keys, their exact
//! means, and the check that normalized costs land in the fixed-point
//! family of the splitting step.

use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;

use crate::fixpoints::CoupledBatch;
use crate::rng::SeedNode;
use crate::stable::{solution_sample, Regime, SolutionSpec, StableParams, StableSampler};
use crate::verify::{statistic_for, two_sample_test, TestOptions, TestOutcome};
use crate::{Error, Result};

/// `E C_n` by the divide-and-conquer recursion
/// `e_n = n - 1 + (2/n) Σ_{k<n} e_k`, carried with a running prefix sum.
pub fn exact_mean(n: usize) -> f64 {
    let mut prefix = 0.0f64;
    let mut e = 0.0f64;
    for k in 1..=n {
        prefix += e;
        e = (k - 1) as f64 + 2.0 * prefix / k as f64;
    }
    e
}

/// `E C_n = 2 (n+1) H_n - 4n`, the solved form of the same recursion.
pub fn exact_mean_closed_form(n: usize) -> f64 {
    let h: f64 = (1..=n).rev().map(|k| 1.0 / k as f64).sum();
    2.0 * (n as f64 + 1.0) * h - 4.0 * n as f64
}

/// Sorts the keys in place with first-element pivots and returns the number
/// of key comparisons. Partitioning a block of `k` keys costs `k - 1`.
pub fn count_comparisons(keys: &mut [f64]) -> u64 {
    let n = keys.len();
    if n <= 1 {
        return 0;
    }
    let pivot = keys[0];
    let mut lt = 0;
    for i in 1..n {
        if keys[i] < pivot {
            lt += 1;
            keys.swap(i, lt);
        }
    }
    keys.swap(0, lt);
    let (left, rest) = keys.split_at_mut(lt);
    (n - 1) as u64 + count_comparisons(left) + count_comparisons(&mut rest[1..])
}

/// `C_n` over independent runs on fresh uniform keys.
pub fn comparison_counts(n: usize, reps: usize, seed: u64) -> Vec<u64> {
    let root = SeedNode::new(seed, "quicksort/costs");
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i as u64).rng();
            let mut keys: Vec<f64> = (0..n).map(|_| rng.sample(Open01)).collect();
            count_comparisons(&mut keys)
        })
        .collect()
}

/// `(C_n - E C_n) / n`, the normalization whose law stabilizes as `n`
/// grows.
pub fn normalized_costs(n: usize, reps: usize, seed: u64) -> Vec<f64> {
    let center = exact_mean(n);
    let scale = n as f64;
    comparison_counts(n, reps, seed)
        .into_iter()
        .map(|c| (c as f64 - center) / scale)
        .collect()
}

/// Tests that shifted and smoothed normalized costs sit in the fixed-point
/// family: `(C_n - E C_n)/n + μ + σ Z` with a Cauchy `Z` against solution
/// draws for the same `(μ, σ)` over the pool. The statistic follows the
/// tail rule, so a live `σ` switches to the ECF grid.
pub fn limit_family_check(
    mu: f64,
    sigma: f64,
    n_keys: usize,
    reps: usize,
    pool: &CoupledBatch,
    opts: &TestOptions,
    seed: u64,
) -> Result<TestOutcome> {
    if n_keys < 2 {
        return Err(Error::InvalidArgument(
            "need at least two keys per run".into(),
        ));
    }
    if reps < 100 {
        return Err(Error::InvalidArgument(format!(
            "{reps} runs are too few to compare laws"
        )));
    }
    if pool.model != "quicksort" {
        return Err(Error::InvalidArgument(format!(
            "the family check needs a quicksort pool, this one came from {}",
            pool.model
        )));
    }
    let spec = SolutionSpec::new(1.0, Regime::AlphaOne { mu, sigma }, true)?;

    let mut candidate = normalized_costs(n_keys, reps, seed);
    if sigma > 0.0 {
        let sampler = StableSampler::new(StableParams::cauchy(0.0, sigma)?)?;
        let mut rng = SeedNode::new(seed, "quicksort/family").rng();
        for v in &mut candidate {
            *v += mu + sampler.draw(&mut rng);
        }
    } else if mu != 0.0 {
        for v in &mut candidate {
            *v += mu;
        }
    }

    let reference = solution_sample(&spec, pool, seed)?;
    let run_opts = TestOptions {
        statistic: statistic_for(&spec),
        ..opts.clone()
    };
    two_sample_test(&candidate, &reference, &run_opts)
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fixpoints::{sample_coupled, SampleOptions};
    use crate::models::BasicSequenceModel;
    use crate::spectral::{profile_and_report, FindAlphaOptions};

    #[test]
    fn small_means_by_hand() {
        assert_eq!(exact_mean(0), 0.0);
        assert_eq!(exact_mean(1), 0.0);
        assert!((exact_mean(2) - 1.0).abs() < 1e-12);
        assert!((exact_mean(3) - 8.0 / 3.0).abs() < 1e-12);
        assert!((exact_mean_closed_form(3) - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn recursion_agrees_with_the_closed_form() {
        for n in [10, 100, 1_000, 10_000] {
            let a = exact_mean(n);
            let b = exact_mean_closed_form(n);
            assert!((a - b).abs() <= 1e-8 * b, "n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn counting_sorts_and_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(2..200usize);
            let mut keys: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let c = count_comparisons(&mut keys);
            assert!(keys.windows(2).all(|w| w[0] <= w[1]));
            assert!(c >= (n - 1) as u64);
            assert!(c <= (n * (n - 1) / 2) as u64);
        }
    }

    #[test]
    fn three_keys_hit_the_exact_mean() {
        let counts = comparison_counts(3, 2_000, 8);
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
        let mean = counts.iter().sum::<u64>() as f64 / 2_000.0;
        // C_3 is 2 + Bernoulli(2/3), so the mean is 8/3 with sd 0.471
        assert!((mean - 8.0 / 3.0).abs() < 4.0 * 0.471 / (2_000.0f64).sqrt());
    }

    #[test]
    fn simulated_mean_tracks_the_recursion() {
        let n = 200;
        let reps = 3_000;
        let counts = comparison_counts(n, reps, 15);
        let mean = counts.iter().sum::<u64>() as f64 / reps as f64;
        let var = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let exact = exact_mean(n);
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn rank_recursion_generates_the_same_law() {
        fn by_rank(n: usize, rng: &mut ChaCha8Rng) -> u64 {
            if n <= 1 {
                return 0;
            }
            let r = rng.random_range(0..n);
            (n - 1) as u64 + by_rank(r, rng) + by_rank(n - 1 - r, rng)
        }
        let direct: Vec<f64> = comparison_counts(100, 3_000, 23)
            .into_iter()
            .map(|c| c as f64)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let ranked: Vec<f64> = (0..3_000).map(|_| by_rank(100, &mut rng) as f64).collect();
        let outcome = two_sample_test(&direct, &ranked, &TestOptions::default()).unwrap();
        assert!(!outcome.reject, "p = {}", outcome.p_value);
    }

    #[test]
    fn normalized_costs_settle_near_the_limit_moments() {
        let reps = 4_000;
        let xs = normalized_costs(1_000, reps, 31);
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(mean.abs() <= 4.0 * se, "mean {mean} (se {se})");
        // the limit variance is 7 - 2π²/3
        let limit = 7.0 - 2.0 * std::f64::consts::PI.powi(2) / 3.0;
        assert!((var - limit).abs() < 0.05, "var {var} vs {limit}");
    }

    fn quicksort_pool() -> &'static CoupledBatch {
        static POOL: OnceLock<CoupledBatch> = OnceLock::new();
        POOL.get_or_init(|| {
            let model = BasicSequenceModel::quicksort();
            let (profile, report) =
                profile_and_report(&model, FindAlphaOptions::default()).unwrap();
            sample_coupled(
                &profile,
                &report,
                &SampleOptions {
                    depth: 14,
                    batch: 4_000,
                    seed: 2,
                },
            )
            .unwrap()
        })
    }

    #[test]
    fn family_check_holds_for_two_members() {
        let pool = quicksort_pool();
        let plain = limit_family_check(
            0.0,
            0.0,
            2_000,
            3_000,
            pool,
            &TestOptions {
                seed: 41,
                ..TestOptions::default()
            },
            41,
        )
        .unwrap();
        assert!(!plain.reject, "toll solution: p = {}", plain.p_value);

        let smoothed = limit_family_check(
            0.25,
            0.5,
            2_000,
            3_000,
            pool,
            &TestOptions {
                seed: 43,
                ..TestOptions::default()
            },
            43,
        )
        .unwrap();
        assert!(!smoothed.reject, "smoothed member: p = {}", smoothed.p_value);
    }

    #[test]
    fn family_check_rejects_a_tampered_pool() {
        let mut tampered = quicksort_pool().clone();
        for w in &mut tampered.wstar {
            *w *= 1.5;
        }
        let outcome = limit_family_check(
            0.0,
            0.0,
            2_000,
            3_000,
            &tampered,
            &TestOptions {
                seed: 47,
                ..TestOptions::default()
            },
            47,
        )
        .unwrap();
        assert!(outcome.reject, "p = {}", outcome.p_value);
    }

    #[test]
    fn family_check_wants_a_quicksort_pool() {
        let mut foreign = quicksort_pool().clone();
        foreign.model = "uniform-split-pair".into();
        let err = limit_family_check(
            0.0,
            0.0,
            2_000,
            500,
            &foreign,
            &TestOptions::default(),
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("quicksort"), "{err}");
    }
}
