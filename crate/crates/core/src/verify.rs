//! Distribution checks. Two-sample permutation tests (energy distance and
//! an ECF grid statistic), a fixed-point test that compares a candidate
//! sample against one application of a model's step, characteristic
//! function references, the generation-by-generation disintegration trace,
//! and the leaf plug-in mean identity.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fixpoints::{stream_walk, AlphaPow, CoupledBatch, MAX_WALK_DEPTH};
use crate::models::BasicSequenceModel;
use crate::rng::SeedNode;
use crate::stable::{solution_cf, solution_sample, stable_psi, SolutionSpec, StableParams};
use crate::{Error, Result};

/// Compensated accumulator. The disintegration trace adds up to `2^n` log-CF
/// terms per generation and the exactness checks care about every bit.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Energy,
    EcfGrid,
}

#[derive(Clone, Debug)]
pub struct TestOptions {
    pub level: f64,
    pub n_perm: usize,
    pub statistic: StatKind,
    /// Grid for the ECF statistic; ignored by the energy statistic.
    pub t_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            level: 0.01,
            n_perm: 499,
            statistic: StatKind::Energy,
            t_grid: default_t_grid(),
            seed: 0,
        }
    }
}

pub fn default_t_grid() -> Vec<f64> {
    vec![-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0]
}

/// The energy distance needs a first absolute moment to behave; solutions
/// with a live stable factor at index one or below have none, so the
/// bounded ECF statistic keeps its power there.
pub fn statistic_for(spec: &SolutionSpec) -> StatKind {
    if spec.sigma() > 0.0 && spec.alpha <= 1.0 {
        StatKind::EcfGrid
    } else {
        StatKind::Energy
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TestOutcome {
    pub statistic_kind: StatKind,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub level: f64,
    pub n_perm: usize,
    pub n_first: usize,
    pub n_second: usize,
}

/// `Σ_{i<j} (z_(j) - z_(i))` of a sorted slice, which equals the sum of all
/// pairwise absolute gaps.
fn sorted_pairwise(sorted: &[f64]) -> f64 {
    let len = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(j, &v)| v * (2.0 * j as f64 - len + 1.0))
        .sum()
}

/// Pooled machinery for the energy statistic. Sorting happens once; each
/// relabeling costs one linear scan because a group member that is the
/// `r`-th smallest of its group contributes `z (2r - g + 1)` to the group's
/// pairwise gap sum.
struct PooledEnergy {
    sorted_vals: Vec<f64>,
    sorted_orig: Vec<u32>,
    total_pairwise: f64,
    n: usize,
    m: usize,
}

impl PooledEnergy {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let m = ys.len();
        let val = |i: u32| {
            let i = i as usize;
            if i < n {
                xs[i]
            } else {
                ys[i - n]
            }
        };
        let mut sorted_orig: Vec<u32> = (0..(n + m) as u32).collect();
        sorted_orig.sort_unstable_by(|&a, &b| val(a).total_cmp(&val(b)));
        let sorted_vals: Vec<f64> = sorted_orig.iter().map(|&i| val(i)).collect();
        let total_pairwise = sorted_pairwise(&sorted_vals);
        PooledEnergy {
            sorted_vals,
            sorted_orig,
            total_pairwise,
            n,
            m,
        }
    }

    /// `mask[i]` assigns pool slot `i` (first sample stacked before the
    /// second) to the first group. Exactly `n` slots must be set.
    fn statistic(&self, mask: &[bool]) -> f64 {
        let nf = self.n as f64;
        let mf = self.m as f64;
        let mut pa = 0.0;
        let mut pb = 0.0;
        let mut ra = 0.0f64;
        let mut rb = 0.0f64;
        for (slot, &v) in self.sorted_vals.iter().enumerate() {
            if mask[self.sorted_orig[slot] as usize] {
                pa += v * (2.0 * ra - nf + 1.0);
                ra += 1.0;
            } else {
                pb += v * (2.0 * rb - mf + 1.0);
                rb += 1.0;
            }
        }
        let cross = self.total_pairwise - pa - pb;
        2.0 * cross / (nf * mf) - 2.0 * pa / (nf * nf) - 2.0 * pb / (mf * mf)
    }
}

/// Pooled machinery for the ECF statistic; the trig matrix is computed once.
struct PooledEcf {
    cos: Vec<f64>,
    sin: Vec<f64>,
    tot_cos: Vec<f64>,
    tot_sin: Vec<f64>,
    n_pool: usize,
    n: usize,
    m: usize,
}

impl PooledEcf {
    fn new(xs: &[f64], ys: &[f64], grid: &[f64]) -> Self {
        let n = xs.len();
        let m = ys.len();
        let n_pool = n + m;
        let mut cos = Vec::with_capacity(grid.len() * n_pool);
        let mut sin = Vec::with_capacity(grid.len() * n_pool);
        let mut tot_cos = Vec::with_capacity(grid.len());
        let mut tot_sin = Vec::with_capacity(grid.len());
        for &t in grid {
            let mut tc = 0.0;
            let mut ts = 0.0;
            for &z in xs.iter().chain(ys.iter()) {
                let (s, c) = (t * z).sin_cos();
                cos.push(c);
                sin.push(s);
                tc += c;
                ts += s;
            }
            tot_cos.push(tc);
            tot_sin.push(ts);
        }
        PooledEcf {
            cos,
            sin,
            tot_cos,
            tot_sin,
            n_pool,
            n,
            m,
        }
    }

    fn statistic(&self, mask: &[bool]) -> f64 {
        let nf = self.n as f64;
        let mf = self.m as f64;
        let mut sup = 0.0f64;
        for k in 0..self.tot_cos.len() {
            let row = k * self.n_pool;
            let mut ca = 0.0;
            let mut sa = 0.0;
            for (i, &is_first) in mask.iter().enumerate() {
                if is_first {
                    ca += self.cos[row + i];
                    sa += self.sin[row + i];
                }
            }
            let d_re = ca / nf - (self.tot_cos[k] - ca) / mf;
            let d_im = sa / nf - (self.tot_sin[k] - sa) / mf;
            sup = sup.max(d_re.hypot(d_im));
        }
        sup
    }
}

enum PermEngine {
    Energy(PooledEnergy),
    Ecf(PooledEcf),
}

impl PermEngine {
    fn statistic(&self, mask: &[bool]) -> f64 {
        match self {
            PermEngine::Energy(e) => e.statistic(mask),
            PermEngine::Ecf(e) => e.statistic(mask),
        }
    }
}

/// Two-sample energy statistic `2 E|X-Y| - E|X-X'| - E|Y-Y'|` with plug-in
/// means over all pairs.
pub fn energy_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let pooled = PooledEnergy::new(xs, ys);
    let mut mask = vec![false; xs.len() + ys.len()];
    mask[..xs.len()].fill(true);
    pooled.statistic(&mask)
}

/// `sup_t |ECF_x(t) - ECF_y(t)|` over the grid.
pub fn ecf_statistic(xs: &[f64], ys: &[f64], grid: &[f64]) -> f64 {
    let pooled = PooledEcf::new(xs, ys, grid);
    let mut mask = vec![false; xs.len() + ys.len()];
    mask[..xs.len()].fill(true);
    pooled.statistic(&mask)
}

/// Permutation test of `law(xs) = law(ys)`. The p-value counts relabelings
/// whose statistic reaches the observed one, with the identity included, so
/// it is never zero and the test is exact for exchangeable inputs.
pub fn two_sample_test(xs: &[f64], ys: &[f64], opts: &TestOptions) -> Result<TestOutcome> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::InvalidArgument(
            "both samples need at least two points".into(),
        ));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "samples must be finite to compare".into(),
        ));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level {} is not in (0, 1)",
            opts.level
        )));
    }
    if opts.n_perm < 19 || ((opts.n_perm + 1) as f64) * opts.level < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "{} permutations cannot resolve level {}",
            opts.n_perm, opts.level
        )));
    }
    if opts.statistic == StatKind::EcfGrid && opts.t_grid.is_empty() {
        return Err(Error::InvalidArgument("the ECF grid is empty".into()));
    }

    let engine = match opts.statistic {
        StatKind::Energy => PermEngine::Energy(PooledEnergy::new(xs, ys)),
        StatKind::EcfGrid => PermEngine::Ecf(PooledEcf::new(xs, ys, &opts.t_grid)),
    };
    let n = xs.len();
    let n_pool = n + ys.len();
    let mut mask = vec![false; n_pool];
    mask[..n].fill(true);
    let observed = engine.statistic(&mask);

    let mut rng = SeedNode::new(opts.seed, "verify/perm").rng();
    let mut perm: Vec<u32> = (0..n_pool as u32).collect();
    let mut at_least = 0usize;
    for _ in 0..opts.n_perm {
        for i in 0..n {
            let j = rng.random_range(i..n_pool);
            perm.swap(i, j);
        }
        mask.fill(false);
        for &i in &perm[..n] {
            mask[i as usize] = true;
        }
        if engine.statistic(&mask) >= observed {
            at_least += 1;
        }
    }
    let p_value = (1.0 + at_least as f64) / (opts.n_perm as f64 + 1.0);
    Ok(TestOutcome {
        statistic_kind: opts.statistic,
        statistic: observed,
        p_value,
        reject: p_value <= opts.level,
        level: opts.level,
        n_perm: opts.n_perm,
        n_first: n,
        n_second: ys.len(),
    })
}

/// One application of the model's step to a sample: each output draws a
/// fresh `(C, T)` and resamples its inputs from `xs` with replacement.
pub fn apply_transform(
    model: &BasicSequenceModel,
    xs: &[f64],
    n_out: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("the input sample is empty".into()));
    }
    if n_out == 0 {
        return Err(Error::InvalidArgument(
            "asked for an empty transformed sample".into(),
        ));
    }
    let mut rng = SeedNode::new(seed, "verify/transform").rng();
    let mut out = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        let r = model.draw_with(&mut rng);
        let mut x = r.c;
        for &(_, t) in r.children() {
            x += t * xs[rng.random_range(0..xs.len())];
        }
        out.push(x);
    }
    Ok(out)
}

/// Tests whether `xs` is a fixed point of the model's step.
///
/// The sample is split three ways: one part is kept as the comparison group
/// and the rest feeds the step, with every transformed draw consuming its
/// own atoms. Under the null both groups are then independent samples of
/// the same law and the permutation test is exact; resampling shared atoms
/// would correlate the transformed side and inflate its size.
pub fn fixed_point_test(
    model: &BasicSequenceModel,
    xs: &[f64],
    opts: &TestOptions,
) -> Result<TestOutcome> {
    if xs.len() < 500 {
        return Err(Error::Precondition(format!(
            "the fixed-point test needs at least 500 candidate draws, got {}",
            xs.len()
        )));
    }
    let root = SeedNode::new(opts.seed, "verify/fixpoint");
    let mut idx: Vec<u32> = (0..xs.len() as u32).collect();
    idx.shuffle(&mut root.rng());

    let group = xs.len() / (1 + model.max_fanout());
    let candidate: Vec<f64> = idx[..group].iter().map(|&i| xs[i as usize]).collect();

    let mut step_rng = root.child(1).rng();
    let mut transformed = Vec::with_capacity(group);
    let mut cursor = group;
    while transformed.len() < group {
        let r = model.draw_with(&mut step_rng);
        if cursor + r.fanout() > xs.len() {
            break;
        }
        let mut x = r.c;
        for &(_, t) in r.children() {
            x += t * xs[idx[cursor] as usize];
            cursor += 1;
        }
        transformed.push(x);
    }
    two_sample_test(&candidate, &transformed, opts)
}

/// p-value of a seeded half-versus-half comparison of one sample. Under
/// any iid law this exercises the exact permutation null, so repeated
/// calls calibrate the machinery itself.
pub fn split_half_pvalue(xs: &[f64], opts: &TestOptions) -> Result<f64> {
    if xs.len() < 4 {
        return Err(Error::InvalidArgument(
            "need at least four points to split".into(),
        ));
    }
    let mut vals = xs.to_vec();
    vals.shuffle(&mut SeedNode::new(opts.seed, "verify/split").rng());
    let half = vals.len() / 2;
    Ok(two_sample_test(&vals[..half], &vals[half..], opts)?.p_value)
}

/// Everywhere the CF falls below this the log table would be noise.
const CF_TABLE_FLOOR: f64 = 0.05;

/// `ln φ` tabulated on a uniform grid from an empirical CF, linear between
/// knots and linearly continued past the last one. Hermitian in `t`.
#[derive(Clone, Debug)]
pub struct CfTable {
    step: f64,
    psi: Vec<Complex64>,
}

impl CfTable {
    pub fn from_samples(xs: &[f64], s_max: f64, n_grid: usize) -> Result<CfTable> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("no samples for the CF table".into()));
        }
        if !s_max.is_finite() || s_max <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "CF table needs a positive range, got {s_max}"
            )));
        }
        if n_grid < 2 {
            return Err(Error::InvalidArgument(
                "CF table needs at least two grid steps".into(),
            ));
        }
        let step = s_max / n_grid as f64;
        let inv = 1.0 / xs.len() as f64;
        let mut psi = Vec::with_capacity(n_grid + 1);
        psi.push(Complex64::ZERO);
        let mut prev_im = 0.0;
        for k in 1..=n_grid {
            let s = step * k as f64;
            let mut re = Kahan::default();
            let mut im = Kahan::default();
            for &x in xs {
                let (sn, cs) = (s * x).sin_cos();
                re.add(cs);
                im.add(sn);
            }
            let phi = Complex64::new(re.sum * inv, im.sum * inv);
            if phi.norm() < CF_TABLE_FLOOR {
                return Err(Error::InvalidArgument(format!(
                    "the empirical CF drops below {CF_TABLE_FLOOR} near s = {s:.3}; \
                     shrink the range"
                )));
            }
            let mut lp = phi.ln();
            // keep the log branch continuous along the grid
            while lp.im - prev_im > PI {
                lp.im -= 2.0 * PI;
            }
            while lp.im - prev_im < -PI {
                lp.im += 2.0 * PI;
            }
            prev_im = lp.im;
            psi.push(lp);
        }
        Ok(CfTable { step, psi })
    }

    /// Table of the solution law described by `spec` over a coupled pool.
    pub fn from_solution(
        spec: &SolutionSpec,
        pool: &CoupledBatch,
        s_max: f64,
        n_grid: usize,
        seed: u64,
    ) -> Result<CfTable> {
        let xs = solution_sample(spec, pool, seed)?;
        CfTable::from_samples(&xs, s_max, n_grid)
    }

    pub fn s_max(&self) -> f64 {
        self.step * (self.psi.len() - 1) as f64
    }

    pub fn log_cf(&self, t: f64) -> Complex64 {
        if t == 0.0 {
            return Complex64::ZERO;
        }
        let pos = t.abs() / self.step;
        let k = (pos as usize).min(self.psi.len() - 2);
        let frac = pos - k as f64;
        let v = self.psi[k] + (self.psi[k + 1] - self.psi[k]) * frac;
        if t < 0.0 {
            v.conj()
        } else {
            v
        }
    }
}

/// A characteristic function the disintegration trace can evaluate at
/// arbitrary rescaled arguments: either a closed stable form or a table.
#[derive(Clone, Debug)]
pub enum CfModel {
    Stable(StableParams),
    Table(CfTable),
}

impl CfModel {
    pub fn log_cf(&self, t: f64) -> Complex64 {
        match self {
            CfModel::Stable(p) => stable_psi(p, t),
            CfModel::Table(tab) => tab.log_cf(t),
        }
    }

    pub fn cf(&self, t: f64) -> Complex64 {
        self.log_cf(t).exp()
    }
}

#[derive(Clone, Debug)]
pub struct DisintegrationOptions {
    pub max_depth: usize,
    pub ts: Vec<f64>,
    pub batch: usize,
    /// Include the `exp(it W*_{n-1})` prefactor, for steps with a toll.
    pub with_toll: bool,
    pub seed: u64,
}

impl Default for DisintegrationOptions {
    fn default() -> Self {
        DisintegrationOptions {
            max_depth: 10,
            ts: default_t_grid(),
            batch: 200,
            with_toll: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CfTraceEntry {
    pub depth: usize,
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub ref_re: f64,
    pub ref_im: f64,
}

impl CfTraceEntry {
    pub fn deviation(&self) -> f64 {
        (self.re - self.ref_re).hypot(self.im - self.ref_im)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CfTrace {
    pub model: String,
    pub batch: usize,
    pub entries: Vec<CfTraceEntry>,
}

impl CfTrace {
    pub fn sup_deviation(&self) -> f64 {
        self.entries
            .iter()
            .map(CfTraceEntry::deviation)
            .fold(0.0, f64::max)
    }

    pub fn sup_deviation_at(&self, depth: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.depth == depth)
            .map(CfTraceEntry::deviation)
            .fold(0.0, f64::max)
    }
}

/// Tracks `Φ_n(t) = exp(it W*_{n-1}) Π_{|v|=n} φ(L(v) t)` generation by
/// generation against the fixed `φ` it should equal at every `n` when `φ`
/// is the CF of a fixed point. Batch means come with standard errors; for
/// a conservative model with a symmetric scale-only `φ` the per-tree value
/// is already exact and the deviation is pure floating point noise.
pub fn disintegration_track(
    model: &BasicSequenceModel,
    cf: &CfModel,
    opts: &DisintegrationOptions,
) -> Result<CfTrace> {
    if opts.batch == 0 {
        return Err(Error::InvalidArgument("empty disintegration batch".into()));
    }
    if opts.ts.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation grid".into()));
    }
    if opts.max_depth > MAX_WALK_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth {} exceeds the walk cap {MAX_WALK_DEPTH}",
            opts.max_depth
        )));
    }
    let root = SeedNode::new(opts.seed, "verify/disintegrate");
    let n_t = opts.ts.len();
    let levels = opts.max_depth + 1;

    let per_tree: Vec<Vec<Complex64>> = (0..opts.batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i as u64).rng();
            let mut re = vec![Kahan::default(); levels * n_t];
            let mut im = vec![Kahan::default(); levels * n_t];
            let mut toll = vec![0.0f64; levels];
            stream_walk(model, &mut rng, opts.max_depth, &mut |level, l, c| {
                toll[level] += l * c;
                let row = level * n_t;
                for (j, &t) in opts.ts.iter().enumerate() {
                    let p = cf.log_cf(l * t);
                    re[row + j].add(p.re);
                    im[row + j].add(p.im);
                }
            });
            let mut phi = Vec::with_capacity(levels * n_t);
            let mut wstar_prev = 0.0;
            for (level, &toll_level) in toll.iter().enumerate() {
                for (j, &t) in opts.ts.iter().enumerate() {
                    let idx = level * n_t + j;
                    let mut expo = Complex64::new(re[idx].sum, im[idx].sum);
                    if opts.with_toll {
                        expo.im += t * wstar_prev;
                    }
                    phi.push(expo.exp());
                }
                wstar_prev += toll_level;
            }
            phi
        })
        .collect();

    let nb = opts.batch as f64;
    let mut entries = Vec::with_capacity(levels * n_t);
    for level in 0..levels {
        for (j, &t) in opts.ts.iter().enumerate() {
            let idx = level * n_t + j;
            let mean = per_tree.iter().map(|p| p[idx]).sum::<Complex64>() / nb;
            let (mut vr, mut vi) = (0.0, 0.0);
            for p in &per_tree {
                vr += (p[idx].re - mean.re).powi(2);
                vi += (p[idx].im - mean.im).powi(2);
            }
            let denom = nb * (nb - 1.0).max(1.0);
            let reference = cf.cf(t);
            entries.push(CfTraceEntry {
                depth: level,
                t,
                re: mean.re,
                im: mean.im,
                se_re: (vr / denom).sqrt(),
                se_im: (vi / denom).sqrt(),
                ref_re: reference.re,
                ref_im: reference.im,
            });
        }
    }
    Ok(CfTrace {
        model: model.spec_string(),
        batch: opts.batch,
        entries,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanIdentityEntry {
    pub t: f64,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub lhs_se_re: f64,
    pub lhs_se_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub rhs_se_re: f64,
    pub rhs_se_im: f64,
    pub within_band: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanIdentityReport {
    pub model: String,
    pub depth: usize,
    pub n_trees: usize,
    pub band_sigmas: f64,
    pub entries: Vec<MeanIdentityEntry>,
    pub all_within: bool,
}

const MEAN_IDENTITY_BAND: f64 = 4.0;

/// Rao-Blackwellized check of `E Φ_n = φ` for the solution law.
///
/// For each tree the leaves at depth `n` get independent pool entries
/// plugged in, and the stable factor is integrated out analytically:
/// `Φ̂ = exp(itA + B ψ₀(t))` with `A = W*_{n-1} + Σ L_v (w*_v + μ w_v)` and
/// `B = Σ L_v^α w_v`. The right side is the CF of solution draws over the
/// same pool, so the pool's own sampling error enters both sides at the
/// same scale and the reported standard errors cover it.
pub fn mean_identity_check(
    model: &BasicSequenceModel,
    spec: &SolutionSpec,
    pool: &CoupledBatch,
    depth: usize,
    ts: &[f64],
    n_trees: usize,
    seed: u64,
) -> Result<MeanIdentityReport> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("the coupled pool is empty".into()));
    }
    if pool.model != model.spec_string() {
        return Err(Error::InvalidArgument(format!(
            "pool was sampled from {} but the step is {}",
            pool.model,
            model.spec_string()
        )));
    }
    if (spec.alpha - pool.alpha).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "solution index {} does not match the pool's {}",
            spec.alpha, pool.alpha
        )));
    }
    if spec.with_toll && !model.supports_c() {
        return Err(Error::InvalidArgument(
            "the candidate includes a toll part but the model's step has none".into(),
        ));
    }
    if !spec.with_toll && model.supports_c() {
        return Err(Error::InvalidArgument(
            "the model's step carries a toll; a homogeneous candidate cannot match it".into(),
        ));
    }
    if n_trees < 2 {
        return Err(Error::InvalidArgument("need at least two trees".into()));
    }
    if ts.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation grid".into()));
    }
    if depth == 0 || depth > MAX_WALK_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} is outside 1..={MAX_WALK_DEPTH}"
        )));
    }

    let mu = spec.mu_shift();
    let with_toll = spec.with_toll;
    let pow = AlphaPow::of(spec.alpha);
    let psi0: Vec<Complex64> = ts.iter().map(|&t| spec.log_cf_y(t)).collect();
    let root = SeedNode::new(seed, "verify/meanid");

    let per_tree: Vec<Vec<Complex64>> = (0..n_trees)
        .into_par_iter()
        .map(|i| {
            let node = root.child(i as u64);
            let mut walk_rng = node.child(0).rng();
            let mut pick_rng = node.child(1).rng();
            let mut a = 0.0f64;
            let mut b = 0.0f64;
            stream_walk(model, &mut walk_rng, depth, &mut |level, l, c| {
                if level < depth {
                    if with_toll {
                        a += l * c;
                    }
                } else {
                    let j = pick_rng.random_range(0..pool.len());
                    let plug = if with_toll { pool.wstar[j] } else { 0.0 };
                    a += l * (plug + mu * pool.w[j]);
                    b += pow.apply(l) * pool.w[j];
                }
            });
            ts.iter()
                .zip(&psi0)
                .map(|(&t, &p)| Complex64::new(b * p.re, t * a + b * p.im).exp())
                .collect()
        })
        .collect();

    let rhs = solution_cf(spec, pool, ts, seed)?;
    let nt = n_trees as f64;
    let mut entries = Vec::with_capacity(ts.len());
    let mut all_within = true;
    for (j, &t) in ts.iter().enumerate() {
        let mean = per_tree.iter().map(|p| p[j]).sum::<Complex64>() / nt;
        let (mut vr, mut vi) = (0.0, 0.0);
        for p in &per_tree {
            vr += (p[j].re - mean.re).powi(2);
            vi += (p[j].im - mean.im).powi(2);
        }
        let denom = nt * (nt - 1.0);
        let (se_re, se_im) = ((vr / denom).sqrt(), (vi / denom).sqrt());
        let r = &rhs[j];
        let band_re = MEAN_IDENTITY_BAND * se_re.hypot(r.se_re) + 1e-12;
        let band_im = MEAN_IDENTITY_BAND * se_im.hypot(r.se_im) + 1e-12;
        let within = (mean.re - r.re).abs() <= band_re && (mean.im - r.im).abs() <= band_im;
        all_within &= within;
        entries.push(MeanIdentityEntry {
            t,
            lhs_re: mean.re,
            lhs_im: mean.im,
            lhs_se_re: se_re,
            lhs_se_im: se_im,
            rhs_re: r.re,
            rhs_im: r.im,
            rhs_se_re: r.se_re,
            rhs_se_im: r.se_im,
            within_band: within,
        });
    }
    Ok(MeanIdentityReport {
        model: model.spec_string(),
        depth,
        n_trees,
        band_sigmas: MEAN_IDENTITY_BAND,
        entries,
        all_within,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::fixpoints::{sample_coupled, SampleOptions};
    use crate::models::{builtin_model, ModelParams};
    use crate::spectral::{profile_and_report, FindAlphaOptions};
    use crate::stable::{sample_stable, Regime};

    fn gaussian_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeedNode::new(seed, "test/gauss").rng();
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn naive_energy(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = ys.len() as f64;
        let mut cross = 0.0;
        for &x in xs {
            for &y in ys {
                cross += (x - y).abs();
            }
        }
        let mut within_x = 0.0;
        for &a in xs {
            for &b in xs {
                within_x += (a - b).abs();
            }
        }
        let mut within_y = 0.0;
        for &a in ys {
            for &b in ys {
                within_y += (a - b).abs();
            }
        }
        2.0 * cross / (n * m) - within_x / (n * n) - within_y / (m * m)
    }

    #[test]
    fn pairwise_formula_matches_the_quadratic_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..200 {
            let n = 2 + (case * 7) % 29;
            let m = 2 + (case * 11) % 23;
            let draw = |rng: &mut ChaCha8Rng| {
                let u: f64 = rng.random_range(-0.499..0.499);
                (PI * u).tan()
            };
            let xs: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let ys: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
            let fast = energy_statistic(&xs, &ys);
            let slow = naive_energy(&xs, &ys);
            assert!(
                (fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()),
                "case {case}: fast {fast} vs naive {slow}"
            );
        }
    }

    #[test]
    fn energy_test_separates_a_shift() {
        let xs = gaussian_sample(600, 1);
        let ys: Vec<f64> = gaussian_sample(600, 2).iter().map(|v| v + 1.0).collect();
        let outcome = two_sample_test(&xs, &ys, &TestOptions::default()).unwrap();
        assert!(outcome.reject, "p = {}", outcome.p_value);
        assert_eq!(outcome.p_value, 1.0 / 500.0);

        let same = two_sample_test(&xs, &gaussian_sample(600, 3), &TestOptions::default()).unwrap();
        assert!(!same.reject, "null p = {}", same.p_value);
    }

    #[test]
    fn permutation_null_is_calibrated() {
        let opts = TestOptions {
            level: 0.05,
            n_perm: 99,
            ..TestOptions::default()
        };
        let mut rejects = 0;
        let mut p_min = f64::INFINITY;
        for s in 0..60 {
            let xs = gaussian_sample(400, 100 + s);
            let p = split_half_pvalue(&xs, &TestOptions { seed: s, ..opts.clone() }).unwrap();
            p_min = p_min.min(p);
            if p <= opts.level {
                rejects += 1;
            }
        }
        // 60 independent nulls at level 0.05: nine rejections is far past
        // any plausible fluctuation, and p can never be exactly zero
        assert!(rejects <= 9, "{rejects} null rejections");
        assert!(p_min >= 1.0 / 100.0);
    }

    #[test]
    fn ecf_statistic_sees_shape_not_labels() {
        let xs = gaussian_sample(300, 7);
        assert!(ecf_statistic(&xs, &xs, &default_t_grid()) < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|v| v + 1.0).collect();
        assert!(ecf_statistic(&xs, &ys, &default_t_grid()) > 0.05);
    }

    #[test]
    fn ecf_test_separates_cauchy_scales() {
        let xs = sample_stable(&StableParams::cauchy(0.0, 1.0).unwrap(), 1500, 5).unwrap();
        let ys = sample_stable(&StableParams::cauchy(0.0, 1.6).unwrap(), 1500, 6).unwrap();
        let opts = TestOptions {
            statistic: StatKind::EcfGrid,
            ..TestOptions::default()
        };
        let outcome = two_sample_test(&xs, &ys, &opts).unwrap();
        assert!(outcome.reject, "p = {}", outcome.p_value);
    }

    #[test]
    fn transform_step_matches_the_model_arithmetic() {
        let half = builtin_model("deterministic-half-pair", &ModelParams::default()).unwrap();
        let out = apply_transform(&half, &[2.0], 50, 9).unwrap();
        assert!(out.iter().all(|&v| v == 2.0));

        let qs = builtin_model("quicksort", &ModelParams::default()).unwrap();
        let tolls = apply_transform(&qs, &[0.0], 200, 9).unwrap();
        let lo = 1.0 - 2.0 * std::f64::consts::LN_2;
        assert!(tolls.iter().all(|&v| v > lo - 1e-12 && v <= 1.0));
        assert!(tolls.iter().any(|&v| (v - tolls[0]).abs() > 1e-3));
    }

    #[test]
    fn fixed_point_test_accepts_an_exact_family() {
        let model = builtin_model("uniform-split-pair", &ModelParams::default()).unwrap();
        let xs = sample_stable(&StableParams::cauchy(0.0, 0.9).unwrap(), 4000, 11).unwrap();
        let opts = TestOptions {
            statistic: StatKind::EcfGrid,
            seed: 11,
            ..TestOptions::default()
        };
        let outcome = fixed_point_test(&model, &xs, &opts).unwrap();
        assert!(!outcome.reject, "p = {}", outcome.p_value);
        assert_eq!(outcome.n_first, 4000 / 3);
    }

    #[test]
    fn fixed_point_test_rejects_an_impostor() {
        // a standard normal against the splitting step: the transformed side
        // shrinks to variance 2/3 plus the toll's 0.14, a small gap that
        // needs a few thousand draws per group to stand out
        let model = builtin_model("quicksort", &ModelParams::default()).unwrap();
        let xs = gaussian_sample(12_000, 13);
        let outcome = fixed_point_test(&model, &xs, &TestOptions::default()).unwrap();
        assert!(outcome.reject, "p = {}", outcome.p_value);
    }

    #[test]
    fn fixed_point_test_needs_a_real_sample() {
        let model = builtin_model("quicksort", &ModelParams::default()).unwrap();
        let err = fixed_point_test(&model, &vec![0.0; 499], &TestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("500"), "{err}");
    }

    #[test]
    fn bad_arguments_are_refused() {
        let xs = vec![0.0, 1.0, 2.0];
        assert!(two_sample_test(&xs, &[0.5], &TestOptions::default()).is_err());
        assert!(two_sample_test(&xs, &[0.5, f64::NAN, 1.5], &TestOptions::default()).is_err());
        let bad_level = TestOptions {
            level: 0.0,
            ..TestOptions::default()
        };
        assert!(two_sample_test(&xs, &xs, &bad_level).is_err());
        let coarse = TestOptions {
            n_perm: 50,
            level: 0.01,
            ..TestOptions::default()
        };
        assert!(two_sample_test(&xs, &xs, &coarse).is_err());
    }

    #[test]
    fn statistic_rule_prefers_the_bounded_statistic_for_heavy_tails() {
        let heavy = SolutionSpec::new(
            1.0,
            Regime::AlphaOne {
                mu: 0.0,
                sigma: 0.7,
            },
            true,
        )
        .unwrap();
        assert_eq!(statistic_for(&heavy), StatKind::EcfGrid);

        let integrable = SolutionSpec::new(
            1.5,
            Regime::General {
                sigma: 1.0,
                beta: 0.0,
            },
            false,
        )
        .unwrap();
        assert_eq!(statistic_for(&integrable), StatKind::Energy);

        let toll_only = SolutionSpec::new(
            0.8,
            Regime::General {
                sigma: 0.0,
                beta: 0.0,
            },
            true,
        )
        .unwrap();
        assert_eq!(statistic_for(&toll_only), StatKind::Energy);
    }

    #[test]
    fn cf_table_tracks_a_known_law() {
        // the drift pushes arg φ past ±π inside the range, so this also
        // exercises the branch unwrapping
        let params = StableParams::cauchy(2.0, 1.0).unwrap();
        let xs = sample_stable(&params, 50_000, 21).unwrap();
        let table = CfTable::from_samples(&xs, 2.0, 200).unwrap();
        assert!((table.s_max() - 2.0).abs() < 1e-12);
        for &t in &[0.3, 1.0, 1.9] {
            let have = table.log_cf(t);
            let want = stable_psi(&params, t);
            assert!(
                (have.re - want.re).abs() < 0.1 && (have.im - want.im).abs() < 0.1,
                "t = {t}: {have} vs {want}"
            );
            let mirrored = table.log_cf(-t);
            assert_eq!(mirrored.re, have.re);
            assert_eq!(mirrored.im, -have.im);
        }
    }

    #[test]
    fn cf_table_refuses_a_vanishing_tail() {
        let xs = sample_stable(&StableParams::cauchy(0.0, 4.0).unwrap(), 20_000, 22).unwrap();
        let err = CfTable::from_samples(&xs, 2.0, 64).unwrap_err();
        assert!(err.to_string().contains("shrink"), "{err}");
    }

    #[test]
    fn conservative_cauchy_disintegration_is_exact() {
        let model = builtin_model("uniform-split-pair", &ModelParams::default()).unwrap();
        let cf = CfModel::Stable(StableParams::cauchy(0.0, 0.8).unwrap());
        let opts = DisintegrationOptions {
            max_depth: 6,
            batch: 40,
            seed: 17,
            ..DisintegrationOptions::default()
        };
        let trace = disintegration_track(&model, &cf, &opts).unwrap();
        assert_eq!(trace.entries.len(), 7 * 8);
        assert!(
            trace.sup_deviation() < 1e-12,
            "sup = {:.3e}",
            trace.sup_deviation()
        );
    }

    fn quicksort_pool() -> &'static (
        crate::spectral::SpectralProfile,
        crate::spectral::AssumptionReport,
        CoupledBatch,
    ) {
        static POOL: OnceLock<(
            crate::spectral::SpectralProfile,
            crate::spectral::AssumptionReport,
            CoupledBatch,
        )> = OnceLock::new();
        POOL.get_or_init(|| {
            let model = BasicSequenceModel::quicksort();
            let (profile, report) = profile_and_report(&model, FindAlphaOptions::default()).unwrap();
            let pool = sample_coupled(
                &profile,
                &report,
                &SampleOptions {
                    depth: 12,
                    batch: 2_000,
                    seed: 1,
                },
            )
            .unwrap();
            (profile, report, pool)
        })
    }

    #[test]
    fn mean_identity_holds_for_the_splitting_family() {
        let (profile, _, pool) = quicksort_pool();
        let spec = SolutionSpec::new(
            1.0,
            Regime::AlphaOne {
                mu: 0.3,
                sigma: 0.7,
            },
            true,
        )
        .unwrap();
        let report = mean_identity_check(
            profile.model(),
            &spec,
            pool,
            6,
            &[0.5, 1.0, 2.0],
            4_000,
            3,
        )
        .unwrap();
        assert!(
            report.all_within,
            "entries: {:?}",
            report
                .entries
                .iter()
                .map(|e| (e.t, e.lhs_re - e.rhs_re, e.lhs_im - e.rhs_im))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn mean_identity_flags_a_tampered_pool() {
        let (profile, _, pool) = quicksort_pool();
        let mut tampered = pool.clone();
        for w in &mut tampered.wstar {
            *w *= 1.5;
        }
        let spec = SolutionSpec::new(
            1.0,
            Regime::AlphaOne {
                mu: 0.0,
                sigma: 0.5,
            },
            true,
        )
        .unwrap();
        let report = mean_identity_check(
            profile.model(),
            &spec,
            &tampered,
            6,
            &[0.5, 1.0, 2.0],
            4_000,
            5,
        )
        .unwrap();
        assert!(!report.all_within);
    }

    #[test]
    fn mean_identity_checks_its_inputs() {
        let (profile, _, pool) = quicksort_pool();
        // a homogeneous candidate cannot satisfy a step with a toll
        let hom = SolutionSpec::new(
            1.0,
            Regime::AlphaOne {
                mu: 0.0,
                sigma: 0.7,
            },
            false,
        )
        .unwrap();
        let err = mean_identity_check(profile.model(), &hom, pool, 6, &[1.0], 100, 0).unwrap_err();
        assert!(err.to_string().contains("toll"), "{err}");

        let spec = SolutionSpec::new(
            1.0,
            Regime::AlphaOne {
                mu: 0.0,
                sigma: 0.7,
            },
            true,
        )
        .unwrap();
        let mut foreign = pool.clone();
        foreign.model = "somewhere-else".into();
        let err =
            mean_identity_check(profile.model(), &spec, &foreign, 6, &[1.0], 100, 0).unwrap_err();
        assert!(err.to_string().contains("sampled from"), "{err}");
    }
}
