//! Strictly stable laws and the solution families built from them.
//!
//! Parametrization: the log-characteristic function of a stable law with
//! index `α`, skew `β`, shift `μ` and scale `σ` is
//!
//! ```text
//! ψ(t) = iμt - σ^α |t|^α (1 - iβ sgn(t) tan(πα/2))        α ≠ 1
//! ψ(t) = iμt - σ |t| (1 + iβ sgn(t) (2/π) ln|t|)          α = 1
//! ```
//!
//! so `α = 2` is Gaussian with variance `2σ²` and `α = 1, β = 0` is Cauchy.
//! This parametrization is discontinuous in `α` at 1 when `β ≠ 0`, which is
//! why [`StableParams::new`] snaps indices within bisection slack of 1 or 2
//! onto them exactly.
//!
//! Sampling uses the Chambers-Mallows-Stuck construction; the `α = 1`
//! sampler covers the symmetric case only, which is all the solution
//! families need (any skew at `α = 1` is carried by the `μW` term, not by
//! the stable factor).
//!
//! A fixed point of the smoothing transform decomposes over the tree limits
//! from [`crate::fixpoints`]: a toll part `W*`, a shift `μW` in the `α = 1`
//! regime, and a stable factor mixed by `W^{1/α}`. [`SolutionSpec`] pins
//! down one member of the family and validates the degeneracy rules;
//! [`solution_sample`] turns a coupled pool into draws of that member.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use serde::Serialize;

use crate::fixpoints::CoupledBatch;
use crate::rng::SeedNode;
use crate::{Error, Result};

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};

/// Index snap width: located exponents carry root-finding slack around the
/// nominal 1 or 2, and the parametrization is discontinuous at 1.
const ALPHA_SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "stable index must lie in (0, 2], got {alpha}"
            )));
        }
        if !(beta.is_finite() && (-1.0..=1.0).contains(&beta)) {
            return Err(Error::InvalidParameter(format!(
                "stable skew must lie in [-1, 1], got {beta}"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("stable shift must be finite, got {mu}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stable scale must be nonnegative, got {sigma}"
            )));
        }
        let alpha = if (alpha - 1.0).abs() < ALPHA_SNAP {
            1.0
        } else if (2.0 - alpha).abs() < ALPHA_SNAP {
            2.0
        } else {
            alpha
        };
        if alpha == 2.0 && beta != 0.0 {
            return Err(Error::InvalidParameter(
                "the Gaussian endpoint α = 2 has no skew; set β = 0".into(),
            ));
        }
        Ok(StableParams { alpha, beta, mu, sigma })
    }

    pub fn cauchy(mu: f64, sigma: f64) -> Result<Self> {
        StableParams::new(1.0, 0.0, mu, sigma)
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        StableParams::new(2.0, 0.0, mu, sigma)
    }
}

/// Log-characteristic function `ψ(t)`; `ψ(0) = 0` exactly.
pub fn stable_psi(p: &StableParams, t: f64) -> Complex64 {
    if t == 0.0 {
        return Complex64::ZERO;
    }
    let drift = Complex64::new(0.0, p.mu * t);
    let at = t.abs();
    if p.alpha == 2.0 {
        return drift - Complex64::new(p.sigma * p.sigma * t * t, 0.0);
    }
    let scale = p.sigma.powf(p.alpha) * at.powf(p.alpha);
    if p.alpha == 1.0 {
        let skew = p.beta * t.signum() * FRAC_2_PI * at.ln();
        drift - scale * Complex64::new(1.0, skew)
    } else {
        let skew = p.beta * t.signum() * (FRAC_PI_2 * p.alpha).tan();
        drift - scale * Complex64::new(1.0, -skew)
    }
}

/// Characteristic function `exp(ψ(t))`.
pub fn stable_cf(p: &StableParams, t: f64) -> Complex64 {
    stable_psi(p, t).exp()
}

enum DrawKind {
    Point,
    Gaussian,
    CauchySym,
    /// Chambers-Mallows-Stuck for `α ∉ {1, 2}` with precomputed constants.
    Cms {
        b: f64,
        s: f64,
        inv_alpha: f64,
        expo: f64,
    },
}

/// Draw-by-draw sampler; construction validates that the parameter corner is
/// actually covered.
pub struct StableSampler {
    params: StableParams,
    kind: DrawKind,
}

impl StableSampler {
    pub fn new(params: StableParams) -> Result<Self> {
        let kind = if params.sigma == 0.0 {
            DrawKind::Point
        } else if params.alpha == 2.0 {
            DrawKind::Gaussian
        } else if params.alpha == 1.0 {
            if params.beta != 0.0 {
                return Err(Error::Precondition(
                    "sampling at α = 1 covers the symmetric case only; skew there shifts \
                     logarithmically and is not needed by any solution family"
                        .into(),
                ));
            }
            DrawKind::CauchySym
        } else {
            let ta = (FRAC_PI_2 * params.alpha).tan();
            DrawKind::Cms {
                b: (params.beta * ta).atan() / params.alpha,
                s: (1.0 + params.beta * params.beta * ta * ta).powf(0.5 / params.alpha),
                inv_alpha: 1.0 / params.alpha,
                expo: (1.0 - params.alpha) / params.alpha,
            }
        };
        Ok(StableSampler { params, kind })
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = &self.params;
        match self.kind {
            DrawKind::Point => p.mu,
            DrawKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                p.mu + p.sigma * std::f64::consts::SQRT_2 * z
            }
            DrawKind::CauchySym => {
                let u: f64 = rng.sample(Open01);
                p.mu + p.sigma * (PI * (u - 0.5)).tan()
            }
            DrawKind::Cms { b, s, inv_alpha, expo } => {
                let u: f64 = rng.sample(Open01);
                let v = PI * (u - 0.5);
                let w: f64 = rng.sample(Exp1);
                let av_b = p.alpha * (v + b);
                // cos(v - αv - αb) stays strictly positive on the valid
                // parameter range, so the fractional power is safe
                let x = s * av_b.sin() / v.cos().powf(inv_alpha)
                    * ((v - av_b).cos() / w).powf(expo);
                p.mu + p.sigma * x
            }
        }
    }
}

/// Batch convenience over [`StableSampler`].
pub fn sample_stable(params: &StableParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = StableSampler::new(*params)?;
    let mut rng = SeedNode::new(seed, "stable/draws").rng();
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// Which corner of the fixed-point family a solution lives in. The shape of
/// the family changes at `α = 1` (a `μW` term appears) and at `α = 2` (the
/// stable factor is Gaussian and skew disappears).
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `α ∉ {1, 2}`: stable factor with scale and skew.
    General { sigma: f64, beta: f64 },
    /// `α = 1`: shift `μW` plus a symmetric Cauchy factor.
    AlphaOne { mu: f64, sigma: f64 },
    /// `α = 2`: Gaussian factor.
    AlphaTwo { sigma: f64 },
}

/// One member of the solution family: `X = W*·[toll] + μW·[α = 1] + W^{1/α} Y`
/// with `Y` stable. Construction enforces the parameter ranges the family
/// admits, in particular that a homogeneous solution is not the zero law.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolutionSpec {
    pub alpha: f64,
    pub regime: Regime,
    /// Whether the special solution `W*` participates (the equation has a
    /// toll term).
    pub with_toll: bool,
}

impl SolutionSpec {
    pub fn new(alpha: f64, regime: Regime, with_toll: bool) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "solution index must lie in (0, 2], got {alpha}"
            )));
        }
        let alpha_one = (alpha - 1.0).abs() < ALPHA_SNAP;
        let alpha_two = (2.0 - alpha).abs() < ALPHA_SNAP;
        match regime {
            Regime::General { sigma, beta } => {
                if alpha_one || alpha_two {
                    return Err(Error::InvalidParameter(
                        "the general regime excludes α = 1 and α = 2; use the matching corner"
                            .into(),
                    ));
                }
                if !(sigma.is_finite() && sigma >= 0.0) || !(-1.0..=1.0).contains(&beta) {
                    return Err(Error::InvalidParameter(format!(
                        "need σ ≥ 0 and β ∈ [-1, 1], got σ = {sigma}, β = {beta}"
                    )));
                }
                if !with_toll && sigma == 0.0 {
                    return Err(Error::InvalidParameter(
                        "a homogeneous solution with σ = 0 is the zero law; the family needs σ > 0"
                            .into(),
                    ));
                }
            }
            Regime::AlphaOne { mu, sigma } => {
                if !alpha_one {
                    return Err(Error::InvalidParameter(format!(
                        "the α = 1 corner was requested at α = {alpha}"
                    )));
                }
                if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "need finite μ and σ ≥ 0, got μ = {mu}, σ = {sigma}"
                    )));
                }
                if !with_toll && mu == 0.0 && sigma == 0.0 {
                    return Err(Error::InvalidParameter(
                        "a homogeneous solution with (μ, σ) = (0, 0) is the zero law".into(),
                    ));
                }
            }
            Regime::AlphaTwo { sigma } => {
                if !alpha_two {
                    return Err(Error::InvalidParameter(format!(
                        "the α = 2 corner was requested at α = {alpha}"
                    )));
                }
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::InvalidParameter(format!("need σ ≥ 0, got σ = {sigma}")));
                }
                if !with_toll && sigma == 0.0 {
                    return Err(Error::InvalidParameter(
                        "a homogeneous solution with σ = 0 is the zero law; the family needs σ > 0"
                            .into(),
                    ));
                }
            }
        }
        let alpha = if alpha_one {
            1.0
        } else if alpha_two {
            2.0
        } else {
            alpha
        };
        Ok(SolutionSpec { alpha, regime, with_toll })
    }

    /// The stable factor `Y` with the `μW` shift stripped out.
    pub fn stable_part(&self) -> StableParams {
        let (beta, sigma) = match self.regime {
            Regime::General { sigma, beta } => (beta, sigma),
            Regime::AlphaOne { sigma, .. } => (0.0, sigma),
            Regime::AlphaTwo { sigma } => (0.0, sigma),
        };
        StableParams {
            alpha: self.alpha,
            beta,
            mu: 0.0,
            sigma,
        }
    }

    /// `ψ` of the stable factor; the disintegration checks feed it tree
    /// weights.
    pub fn log_cf_y(&self, t: f64) -> Complex64 {
        stable_psi(&self.stable_part(), t)
    }

    /// The `μW` shift; zero outside the `α = 1` regime.
    pub fn mu_shift(&self) -> f64 {
        match self.regime {
            Regime::AlphaOne { mu, .. } => mu,
            _ => 0.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.stable_part().sigma
    }
}

fn check_pool(spec: &SolutionSpec, pool: &CoupledBatch) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("the coupled pool is empty".into()));
    }
    if (spec.alpha - pool.alpha).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "solution index {} does not match the pool's exponent {}",
            spec.alpha, pool.alpha
        )));
    }
    Ok(())
}

/// Draws the solution once per pool entry: `x = w* + μw + w^{1/α} y`.
pub fn solution_sample(spec: &SolutionSpec, pool: &CoupledBatch, seed: u64) -> Result<Vec<f64>> {
    check_pool(spec, pool)?;
    let sampler = StableSampler::new(spec.stable_part())?;
    let mu = spec.mu_shift();
    let inv_alpha = 1.0 / spec.alpha;
    let mut rng = SeedNode::new(seed, "stable/solution").rng();
    let mut out = Vec::with_capacity(pool.len());
    for i in 0..pool.len() {
        let w = pool.w[i];
        let mut x = sampler.draw(&mut rng) * if spec.alpha == 1.0 { w } else { w.powf(inv_alpha) };
        if spec.with_toll {
            x += pool.wstar[i];
        }
        x += mu * w;
        out.push(x);
    }
    Ok(out)
}

/// Monte Carlo characteristic function of a solution at one `t`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CfEstimate {
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub n: usize,
}

impl CfEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    /// Estimates `E exp(itX)` from draws.
    pub fn from_samples(t: f64, xs: &[f64]) -> CfEstimate {
        let n = xs.len().max(1) as f64;
        let (mut cs, mut cs2, mut ss, mut ss2) = (0.0, 0.0, 0.0, 0.0);
        for &x in xs {
            let (s, c) = (t * x).sin_cos();
            cs += c;
            cs2 += c * c;
            ss += s;
            ss2 += s * s;
        }
        let re = cs / n;
        let im = ss / n;
        let var_re = (cs2 / n - re * re).max(0.0);
        let var_im = (ss2 / n - im * im).max(0.0);
        CfEstimate {
            t,
            re,
            im,
            se_re: (var_re / n).sqrt(),
            se_im: (var_im / n).sqrt(),
            n: xs.len(),
        }
    }
}

/// Empirical characteristic function of a sampled solution on a `t` grid.
pub fn solution_cf(
    spec: &SolutionSpec,
    pool: &CoupledBatch,
    ts: &[f64],
    seed: u64,
) -> Result<Vec<CfEstimate>> {
    let xs = solution_sample(spec, pool, seed)?;
    Ok(ts.iter().map(|&t| CfEstimate::from_samples(t, &xs)).collect())
}
