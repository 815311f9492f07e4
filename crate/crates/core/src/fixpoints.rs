//! Monte Carlo access to the two martingale limits.
//!
//! A weighted branching process carries two companion processes: the additive
//! martingale `W_n = Σ_{|v|=n} L(v)^α`, whose limit `W` is the intrinsic
//! scale of the tree, and the toll sums `W*_n = Σ_{|v|≤n} L(v) C(v)`, whose
//! limit `W*` is the canonical special solution of the inhomogeneous
//! equation. The samplers here run a streaming walker instead of
//! materializing trees: a depth-20 tree has two million nodes and the
//! verification suite needs tens of thousands of them.
//!
//! The walker draws every node from one sequential stream per batch element.
//! Elements are hash-split, so batches are reproducible and order
//! independent, but within an element the draws are consumed in visit order.
//! That gives up the per-subtree addressability of the materialized trees in
//! [`crate::wbp`] in exchange for throughput; distributional agreement
//! between the two engines is covered by tests.
//!
//! Both samplers refuse models whose limits are degenerate: `W` needs
//! strictly negative drift `m'(α) < 0` together with an `x log x` moment,
//! `W*` needs one of the two toll-side conditions from the assumption
//! report.

use rayon::prelude::*;
use serde::Serialize;

use crate::models::BasicSequenceModel;
use crate::rng::SeedNode;
use crate::spectral::{AssumptionReport, SpectralProfile, DRIFT_MARGIN};
use crate::{Error, Result, TriState};

/// Recursion depth cap for the streaming walker. Full trees this deep are
/// unreachable anyway; the cap protects worker stacks on thinned models.
pub const MAX_WALK_DEPTH: usize = 2_048;

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    pub depth: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            depth: 20,
            batch: 10_000,
            seed: 0,
        }
    }
}

/// `x^α` with the common exponents special-cased. Located roots land within
/// bisection slack of the nominal values, so snapping inside `1e-9` changes
/// nothing statistically and keeps the hot path off `powf`.
#[derive(Clone, Copy)]
pub(crate) enum AlphaPow {
    One,
    Half,
    Square,
    General(f64),
}

impl AlphaPow {
    pub(crate) fn of(alpha: f64) -> Self {
        if (alpha - 1.0).abs() < 1e-9 {
            AlphaPow::One
        } else if (alpha - 0.5).abs() < 1e-9 {
            AlphaPow::Half
        } else if (alpha - 2.0).abs() < 1e-9 {
            AlphaPow::Square
        } else {
            AlphaPow::General(alpha)
        }
    }

    #[inline(always)]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            AlphaPow::One => x,
            AlphaPow::Half => x.sqrt(),
            AlphaPow::Square => x * x,
            AlphaPow::General(a) => x.powf(a),
        }
    }
}

/// Visits every node of one streaming tree in depth-first preorder, calling
/// `visit(level, l, c)` with the node's depth, path weight `L(v)`, and toll.
/// All randomness comes from `rng` in visit order.
pub(crate) fn stream_walk<R, F>(model: &BasicSequenceModel, rng: &mut R, depth: usize, visit: &mut F)
where
    R: rand::Rng + ?Sized,
    F: FnMut(usize, f64, f64),
{
    walk_rec(model, rng, 0, depth, 1.0, visit);
}

fn walk_rec<R, F>(
    model: &BasicSequenceModel,
    rng: &mut R,
    level: usize,
    depth: usize,
    l: f64,
    visit: &mut F,
) where
    R: rand::Rng + ?Sized,
    F: FnMut(usize, f64, f64),
{
    let r = model.draw_with(rng);
    visit(level, l, r.c);
    if level < depth {
        for &(_, t) in r.children() {
            walk_rec(model, rng, level + 1, depth, l * t, visit);
        }
    }
}

/// Per-level sums of one tree: `Σ_{|v|=n} L^α` and `Σ_{|v|=n} L C`.
struct LevelSums {
    w_alpha: Vec<f64>,
    toll: Vec<f64>,
}

fn element_sums(model: &BasicSequenceModel, pow: AlphaPow, depth: usize, seed: SeedNode) -> LevelSums {
    let mut sums = LevelSums {
        w_alpha: vec![0.0; depth + 1],
        toll: vec![0.0; depth + 1],
    };
    let mut rng = seed.rng();
    stream_walk(model, &mut rng, depth, &mut |level, l, c| {
        sums.w_alpha[level] += pow.apply(l);
        sums.toll[level] += l * c;
    });
    sums
}

fn batch_sums(
    model: &BasicSequenceModel,
    alpha: f64,
    opts: &SampleOptions,
    tag: &str,
) -> Result<Vec<LevelSums>> {
    if opts.batch == 0 {
        return Err(Error::InvalidArgument("sampling needs a positive batch size".into()));
    }
    if opts.depth > MAX_WALK_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "walk depth {} exceeds the cap of {MAX_WALK_DEPTH}",
            opts.depth
        )));
    }
    let pow = AlphaPow::of(alpha);
    let root = SeedNode::new(opts.seed, tag);
    Ok((0..opts.batch)
        .into_par_iter()
        .map(|i| element_sums(model, pow, opts.depth, root.child(i as u64)))
        .collect())
}

/// One Monte Carlo sample of a martingale limit proxy, one value per tree.
#[derive(Clone, Debug, Serialize)]
pub struct SampleBatch {
    pub model: String,
    pub depth: usize,
    pub alpha: f64,
    pub values: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    }

    pub fn se(&self) -> f64 {
        (self.variance() / self.len().max(1) as f64).sqrt()
    }
}

/// Same-tree pairs `(W_n, W*_n)`, the raw material for solution sampling.
#[derive(Clone, Debug, Serialize)]
pub struct CoupledBatch {
    pub model: String,
    pub depth: usize,
    pub alpha: f64,
    pub w: Vec<f64>,
    pub wstar: Vec<f64>,
}

impl CoupledBatch {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

// a NaN drift estimate must land in the refusal branch, hence the negation
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn gate_w(profile: &SpectralProfile) -> Result<()> {
    if !(profile.m_prime_alpha < -DRIFT_MARGIN) {
        return Err(Error::Precondition(format!(
            "the additive martingale limit degenerates without strictly negative drift at the \
             exponent; here m'(α) = {:.3e}. A boundary root needs a norming beyond L^α itself.",
            profile.m_prime_alpha
        )));
    }
    if profile.model().tilted_log_moments_finite() == TriState::False {
        return Err(Error::Precondition(
            "the x log x moment at the exponent is missing, so the limit W is zero".into(),
        ));
    }
    Ok(())
}

fn gate_wstar(report: &AssumptionReport) -> Result<()> {
    if report.c1_lp_bounded.admissible() || report.c2_contractive.admissible() {
        return Ok(());
    }
    Err(Error::Precondition(
        "the toll sums carry no convergence certificate: both the L^p bound and the \
         contraction route fail for this model"
            .into(),
    ))
}

/// Samples `W_n = Σ_{|v|=n} L^α` as a proxy for the limit `W`.
pub fn sample_w(profile: &SpectralProfile, opts: &SampleOptions) -> Result<SampleBatch> {
    gate_w(profile)?;
    let model = profile.model();
    let sums = batch_sums(model, profile.alpha, opts, "fixpoints/w")?;
    Ok(SampleBatch {
        model: model.spec_string(),
        depth: opts.depth,
        alpha: profile.alpha,
        values: sums.into_iter().map(|s| s.w_alpha[opts.depth]).collect(),
    })
}

/// Samples `W*_n = Σ_{|v|≤n} L C` as a proxy for the special solution `W*`.
pub fn sample_wstar(
    profile: &SpectralProfile,
    report: &AssumptionReport,
    opts: &SampleOptions,
) -> Result<SampleBatch> {
    gate_wstar(report)?;
    let model = profile.model();
    let sums = batch_sums(model, profile.alpha, opts, "fixpoints/wstar")?;
    Ok(SampleBatch {
        model: model.spec_string(),
        depth: opts.depth,
        alpha: profile.alpha,
        values: sums.into_iter().map(|s| s.toll.iter().sum()).collect(),
    })
}

/// Samples `(W_n, W*_n)` pairs off the same trees. Both gates apply, since
/// both coordinates are returned.
pub fn sample_coupled(
    profile: &SpectralProfile,
    report: &AssumptionReport,
    opts: &SampleOptions,
) -> Result<CoupledBatch> {
    gate_w(profile)?;
    gate_wstar(report)?;
    let model = profile.model();
    let sums = batch_sums(model, profile.alpha, opts, "fixpoints/coupled")?;
    let mut w = Vec::with_capacity(sums.len());
    let mut wstar = Vec::with_capacity(sums.len());
    for s in sums {
        w.push(s.w_alpha[opts.depth]);
        wstar.push(s.toll.iter().sum());
    }
    Ok(CoupledBatch {
        model: model.spec_string(),
        depth: opts.depth,
        alpha: profile.alpha,
        w,
        wstar,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DepthStats {
    pub depth: usize,
    /// Mean and standard error of `W_n`; a martingale with `E W_n = 1`.
    pub w_mean: f64,
    pub w_se: f64,
    /// Mean and standard error of the toll increment `Σ_{|v|=n} L C`, which
    /// has mean zero exactly when the tolls are centered.
    pub increment_mean: f64,
    pub increment_se: f64,
    pub w_flag: bool,
    pub drift_flag: bool,
}

/// Per-depth diagnostics for both processes. Flags mark depths whose sample
/// mean is inconsistent with the martingale value at four standard errors.
/// No admissibility gates here: the report is how one looks at a broken
/// model.
#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub model: String,
    pub alpha: f64,
    pub batch: usize,
    pub depths: Vec<DepthStats>,
    pub any_flag: bool,
}

pub fn martingale_report(profile: &SpectralProfile, opts: &SampleOptions) -> Result<MartingaleReport> {
    let model = profile.model();
    let sums = batch_sums(model, profile.alpha, opts, "fixpoints/martingale")?;
    let n = sums.len() as f64;
    let mut depths = Vec::with_capacity(opts.depth + 1);
    let mut any_flag = false;
    for level in 0..=opts.depth {
        let (w_mean, w_se) = mean_se(sums.iter().map(|s| s.w_alpha[level]), n);
        let (increment_mean, increment_se) = mean_se(sums.iter().map(|s| s.toll[level]), n);
        let w_flag = (w_mean - 1.0).abs() > 4.0 * w_se;
        let drift_flag = increment_mean.abs() > 4.0 * increment_se;
        any_flag |= w_flag || drift_flag;
        depths.push(DepthStats {
            depth: level,
            w_mean,
            w_se,
            increment_mean,
            increment_se,
            w_flag,
            drift_flag,
        });
    }
    Ok(MartingaleReport {
        model: model.spec_string(),
        alpha: profile.alpha,
        batch: opts.batch,
        depths,
        any_flag,
    })
}

fn mean_se(values: impl Iterator<Item = f64>, n: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for x in values {
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Per-depth `E|W*_n|` and `E W*_n²` over a fresh batch; the assumption
/// report's `L^p` heuristic watches these for growth.
pub(crate) fn toll_moment_trajectory(
    model: &BasicSequenceModel,
    depth: usize,
    batch: usize,
    seed: u64,
) -> Vec<(usize, f64, f64)> {
    let root = SeedNode::new(seed, "fixpoints/tolls");
    let per: Vec<Vec<(f64, f64)>> = (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i as u64).rng();
            let mut toll = vec![0.0; depth + 1];
            stream_walk(model, &mut rng, depth, &mut |level, l, c| {
                toll[level] += l * c;
            });
            let mut acc = 0.0;
            toll.iter()
                .map(|&inc| {
                    acc += inc;
                    (acc.abs(), acc * acc)
                })
                .collect()
        })
        .collect();
    (0..=depth)
        .map(|n| {
            let m1 = per.iter().map(|v| v[n].0).sum::<f64>() / batch.max(1) as f64;
            let m2 = per.iter().map(|v| v[n].1).sum::<f64>() / batch.max(1) as f64;
            (n, m1, m2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_model, ModelParams};
    use crate::spectral::{find_alpha, profile_and_report, FindAlphaOptions};

    fn profile(model: &BasicSequenceModel) -> SpectralProfile {
        find_alpha(model, FindAlphaOptions::default()).unwrap()
    }

    fn ec2() -> f64 {
        // ∫₀¹ (1 + 2u ln u + 2(1-u) ln(1-u))² du
        7.0 / 3.0 - 2.0 * std::f64::consts::PI.powi(2) / 9.0
    }

    #[test]
    fn conservative_models_keep_unit_mass_at_every_depth() {
        let model = BasicSequenceModel::quicksort();
        let p = profile(&model);
        let r = martingale_report(
            &p,
            &SampleOptions {
                depth: 8,
                batch: 40,
                seed: 7,
            },
        )
        .unwrap();
        for d in &r.depths {
            assert!((d.w_mean - 1.0).abs() < 1e-9, "depth {}: {}", d.depth, d.w_mean);
            assert!(d.w_se < 1e-9);
        }
        assert!(!r.any_flag);
    }

    #[test]
    fn additive_martingale_has_unit_mean() {
        let model = BasicSequenceModel::iid_uniform_pair();
        let p = profile(&model);
        let batch = sample_w(
            &p,
            &SampleOptions {
                depth: 10,
                batch: 4_000,
                seed: 11,
            },
        )
        .unwrap();
        let dev = (batch.mean() - 1.0).abs();
        assert!(dev <= 4.0 * batch.se(), "mean {}, se {}", batch.mean(), batch.se());
    }

    #[test]
    fn additive_martingale_under_the_square_root_exponent() {
        let model = BasicSequenceModel::powered_uniform_pair(2.0).unwrap();
        let p = profile(&model);
        assert!((p.alpha - 0.5).abs() < 1e-9);
        let batch = sample_w(
            &p,
            &SampleOptions {
                depth: 10,
                batch: 4_000,
                seed: 3,
            },
        )
        .unwrap();
        assert!((batch.mean() - 1.0).abs() <= 4.0 * batch.se());
    }

    #[test]
    fn toll_increment_second_moments_decay_geometrically() {
        // E (ΔW*_n)² = (2/3)^n ∫g²; the exponent grows with depth, which
        // also pins down that it is not a constant (2/3)²
        let model = BasicSequenceModel::quicksort();
        let p = profile(&model);
        let sums = batch_sums(
            &model,
            p.alpha,
            &SampleOptions {
                depth: 3,
                batch: 30_000,
                seed: 5,
            },
            "test/incr",
        )
        .unwrap();
        let n = sums.len() as f64;
        for level in [0usize, 1, 3] {
            let (m2, se) = mean_se(sums.iter().map(|s| s.toll[level] * s.toll[level]), n);
            let target = (2.0f64 / 3.0).powi(level as i32) * ec2();
            assert!(
                (m2 - target).abs() <= 4.0 * se,
                "level {level}: m2 = {m2}, target = {target}, se = {se}"
            );
            let constant_reading = (2.0f64 / 3.0).powi(2) * ec2();
            assert!(
                (m2 - constant_reading).abs() > 8.0 * se,
                "level {level} cannot distinguish the constant reading"
            );
        }
    }

    #[test]
    fn toll_sum_variance_matches_the_geometric_series() {
        let model = BasicSequenceModel::quicksort();
        let (p, rep) = profile_and_report(&model, FindAlphaOptions::default()).unwrap();
        let batch = sample_wstar(
            &p,
            &rep,
            &SampleOptions {
                depth: 6,
                batch: 20_000,
                seed: 2,
            },
        )
        .unwrap();
        assert!(batch.mean().abs() <= 4.0 * batch.se());
        let target: f64 = (0..=6).map(|k| (2.0f64 / 3.0).powi(k)).sum::<f64>() * ec2();
        let (m2, se2) = mean_se(batch.values.iter().map(|x| x * x), batch.len() as f64);
        assert!((m2 - target).abs() <= 4.0 * se2, "m2 = {m2}, target = {target}");
    }

    #[test]
    fn moment_trajectory_matches_the_series() {
        let traj = toll_moment_trajectory(&BasicSequenceModel::quicksort(), 6, 10_000, 8);
        let (n, m1, m2) = traj[6];
        assert_eq!(n, 6);
        let target: f64 = (0..=6).map(|k| (2.0f64 / 3.0).powi(k)).sum::<f64>() * ec2();
        assert!((m2 - target).abs() < 0.025, "m2 = {m2}, target = {target}");
        assert!(m1 <= m2.sqrt() + 1e-12); // Jensen
    }

    #[test]
    fn streaming_and_materialized_engines_agree_in_law() {
        let model = BasicSequenceModel::quicksort();
        let (p, rep) = profile_and_report(&model, FindAlphaOptions::default()).unwrap();
        let depth = 3;
        let n_trees = 2_000usize;
        let mut tree_vals = Vec::with_capacity(n_trees);
        for seed in 0..n_trees {
            let tree =
                crate::wbp::grow_tree(&model, depth, seed as u64, crate::wbp::GrowthLimits::default())
                    .unwrap();
            tree_vals.push(tree.toll_sum_through(depth).unwrap());
        }
        let walker = sample_wstar(
            &p,
            &rep,
            &SampleOptions {
                depth,
                batch: n_trees,
                seed: 99,
            },
        )
        .unwrap();
        let n = n_trees as f64;
        let (m_a, se_a) = mean_se(tree_vals.iter().copied(), n);
        let (m_b, se_b) = (walker.mean(), walker.se());
        assert!(
            (m_a - m_b).abs() <= 4.0 * (se_a * se_a + se_b * se_b).sqrt(),
            "means {m_a} vs {m_b}"
        );
        let (q_a, qse_a) = mean_se(tree_vals.iter().map(|x| x * x), n);
        let (q_b, qse_b) = mean_se(walker.values.iter().map(|x| x * x), n);
        assert!(
            (q_a - q_b).abs() <= 4.0 * (qse_a * qse_a + qse_b * qse_b).sqrt(),
            "second moments {q_a} vs {q_b}"
        );
    }

    #[test]
    fn w_sampling_refuses_the_boundary_drift() {
        let m0 = (2.0 * std::f64::consts::LN_2).sqrt();
        let model = BasicSequenceModel::gaussian_steps_pair(m0).unwrap();
        let p = profile(&model);
        match sample_w(
            &p,
            &SampleOptions {
                depth: 4,
                batch: 8,
                seed: 0,
            },
        ) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("drift"), "{msg}"),
            other => panic!("expected a precondition refusal, got {other:?}"),
        }
    }

    #[test]
    fn wstar_sampling_refuses_drifting_tolls() {
        let model = builtin_model(
            "quicksort",
            &ModelParams {
                c_shift: Some(0.1),
                ..Default::default()
            },
        )
        .unwrap();
        let (p, rep) = profile_and_report(&model, FindAlphaOptions::default()).unwrap();
        // small options so a gate regression fails fast instead of sampling
        let opts = SampleOptions {
            depth: 3,
            batch: 4,
            seed: 0,
        };
        assert!(matches!(
            sample_wstar(&p, &rep, &opts),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            sample_coupled(&p, &rep, &opts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn report_flags_injected_toll_drift() {
        let model = builtin_model(
            "quicksort",
            &ModelParams {
                c_shift: Some(0.1),
                ..Default::default()
            },
        )
        .unwrap();
        let p = profile(&model);
        let opts = SampleOptions {
            depth: 5,
            batch: 3_000,
            seed: 1,
        };
        let r = martingale_report(&p, &opts).unwrap();
        assert!(r.any_flag);
        assert!(r.depths.iter().all(|d| d.drift_flag));
        let clean = profile(&BasicSequenceModel::quicksort());
        let rc = martingale_report(&clean, &opts).unwrap();
        assert!(!rc.any_flag);
    }

    #[test]
    fn batches_are_reproducible_and_seed_sensitive() {
        let model = BasicSequenceModel::quicksort();
        let (p, rep) = profile_and_report(&model, FindAlphaOptions::default()).unwrap();
        let o = SampleOptions {
            depth: 5,
            batch: 64,
            seed: 42,
        };
        let a = sample_coupled(&p, &rep, &o).unwrap();
        let b = sample_coupled(&p, &rep, &o).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.wstar, b.wstar);
        let c = sample_coupled(&p, &rep, &SampleOptions { seed: 43, ..o }).unwrap();
        assert_ne!(a.wstar, c.wstar);
    }

    #[test]
    fn rejects_empty_batches_and_absurd_depths() {
        let p = profile(&BasicSequenceModel::quicksort());
        assert!(matches!(
            sample_w(
                &p,
                &SampleOptions {
                    depth: 2,
                    batch: 0,
                    seed: 0
                }
            ),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            sample_w(
                &p,
                &SampleOptions {
                    depth: MAX_WALK_DEPTH + 1,
                    batch: 1,
                    seed: 0
                }
            ),
            Err(Error::InvalidArgument(_))
        ));
    }
}
