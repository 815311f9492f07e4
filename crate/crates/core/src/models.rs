//! Built-in weight families.
//!
//! A model describes the law of one branching step: a random vector
//! `(C, T_1, ..., T_N)` with a scalar toll `C` and nonnegative child weights
//! `T_j`. All built-in families are two-child families; zero weights are
//! dropped from realizations but keep their original child index so that
//! sub-seed derivation stays stable under thinning.
//!
//! Families and their spectral functions `m(θ) = E Σ_j T_j^θ`:
//!
//! | name | step law | m(θ) |
//! |------|----------|------|
//! | `quicksort` | `T = (U, 1-U)`, `C = g(U)` | `2/(1+θ)` |
//! | `uniform-split-pair` | `T = (U, 1-U)`, `C = 0` | `2/(1+θ)` |
//! | `iid-uniform-pair` | `T = (U_1, U_2)` i.i.d., `C = 0` | `2/(1+θ)` |
//! | `powered-uniform-pair` | `T = (U_1^p, U_2^p)`, `C = 0` | `2/(pθ+1)` |
//! | `gaussian-steps-pair` | `T_j = exp(-X_j)`, `X_j ~ N(m0, 1)` | `2 exp(-m0 θ + θ²/2)` |
//! | `deterministic-half-pair` | `T = (1/2, 1/2)`, `C = 0` | `2^(1-θ)` |
//!
//! with `U, U_j` i.i.d. uniform on (0,1) and
//! `g(u) = 2u ln u + 2(1-u) ln(1-u) + 1` (the Quicksort toll, mean zero).
//!
//! Two optional parameters apply to every family: `c_shift` adds a constant to
//! the toll, and `keep_prob` thins each child independently (so `keep_prob < 1`
//! gives a family with `P(N = 0) > 0`, useful for exercising extinction paths).
//! Thinning scales the spectral function by `keep_prob`.

use arrayvec::ArrayVec;
use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::SeedNode;
use crate::{Error, Result, TriState};

/// Hard cap on children per step across all built-in families.
pub const MAX_FANOUT: usize = 4;

/// One drawn branching step. Children carry their original 1-based index;
/// zero-weight (thinned) children are absent.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub c: f64,
    t: ArrayVec<(u32, f64), MAX_FANOUT>,
}

impl Realization {
    /// `(index, weight)` pairs with strictly positive weights.
    #[inline]
    pub fn children(&self) -> &[(u32, f64)] {
        &self.t
    }

    #[inline]
    pub fn fanout(&self) -> usize {
        self.t.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.t.iter().map(|&(_, w)| w).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Family {
    Quicksort,
    UniformSplitPair,
    IidUniformPair,
    PoweredUniformPair { p: f64 },
    GaussianStepsPair { m0: f64 },
    DeterministicHalfPair,
}

/// Optional parameters accepted by [`builtin_model`]. Families reject
/// parameters they do not use.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelParams {
    /// Exponent of `powered-uniform-pair` (required there, `p > 0`).
    pub p: Option<f64>,
    /// Mean step of `gaussian-steps-pair` (required there).
    pub m0: Option<f64>,
    /// Constant added to the toll of every step.
    pub c_shift: Option<f64>,
    /// Independent survival probability per child, in (0, 1].
    pub keep_prob: Option<f64>,
}

/// A branching-step law together with its known analytic facts.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicSequenceModel {
    family: Family,
    c_shift: f64,
    keep_prob: f64,
}

/// Looks up a built-in family by name and validates its parameters.
pub fn builtin_model(name: &str, params: &ModelParams) -> Result<BasicSequenceModel> {
    let family = match name {
        "quicksort" => Family::Quicksort,
        "uniform-split-pair" => Family::UniformSplitPair,
        "iid-uniform-pair" => Family::IidUniformPair,
        "powered-uniform-pair" => {
            let p = params.p.ok_or_else(|| {
                Error::InvalidParameter("powered-uniform-pair requires parameter `p`".into())
            })?;
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "powered-uniform-pair requires finite p > 0, got {p}"
                )));
            }
            Family::PoweredUniformPair { p }
        }
        "gaussian-steps-pair" => {
            let m0 = params.m0.ok_or_else(|| {
                Error::InvalidParameter("gaussian-steps-pair requires parameter `m0`".into())
            })?;
            if !m0.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "gaussian-steps-pair requires finite m0, got {m0}"
                )));
            }
            Family::GaussianStepsPair { m0 }
        }
        "deterministic-half-pair" => Family::DeterministicHalfPair,
        other => return Err(Error::UnknownModel(other.into())),
    };

    if params.p.is_some() && !matches!(family, Family::PoweredUniformPair { .. }) {
        return Err(Error::InvalidParameter(format!(
            "model `{name}` does not accept parameter `p`"
        )));
    }
    if params.m0.is_some() && !matches!(family, Family::GaussianStepsPair { .. }) {
        return Err(Error::InvalidParameter(format!(
            "model `{name}` does not accept parameter `m0`"
        )));
    }

    let c_shift = params.c_shift.unwrap_or(0.0);
    if !c_shift.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "c_shift must be finite, got {c_shift}"
        )));
    }
    let keep_prob = params.keep_prob.unwrap_or(1.0);
    if !(keep_prob.is_finite() && 0.0 < keep_prob && keep_prob <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep_prob must lie in (0, 1], got {keep_prob}"
        )));
    }

    Ok(BasicSequenceModel {
        family,
        c_shift,
        keep_prob,
    })
}

impl BasicSequenceModel {
    pub fn quicksort() -> Self {
        BasicSequenceModel {
            family: Family::Quicksort,
            c_shift: 0.0,
            keep_prob: 1.0,
        }
    }

    pub fn uniform_split_pair() -> Self {
        BasicSequenceModel {
            family: Family::UniformSplitPair,
            c_shift: 0.0,
            keep_prob: 1.0,
        }
    }

    pub fn iid_uniform_pair() -> Self {
        BasicSequenceModel {
            family: Family::IidUniformPair,
            c_shift: 0.0,
            keep_prob: 1.0,
        }
    }

    pub fn powered_uniform_pair(p: f64) -> Result<Self> {
        builtin_model(
            "powered-uniform-pair",
            &ModelParams {
                p: Some(p),
                ..ModelParams::default()
            },
        )
    }

    pub fn gaussian_steps_pair(m0: f64) -> Result<Self> {
        builtin_model(
            "gaussian-steps-pair",
            &ModelParams {
                m0: Some(m0),
                ..ModelParams::default()
            },
        )
    }

    pub fn deterministic_half_pair() -> Self {
        BasicSequenceModel {
            family: Family::DeterministicHalfPair,
            c_shift: 0.0,
            keep_prob: 1.0,
        }
    }

    /// Family name as accepted by [`builtin_model`].
    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Quicksort => "quicksort",
            Family::UniformSplitPair => "uniform-split-pair",
            Family::IidUniformPair => "iid-uniform-pair",
            Family::PoweredUniformPair { .. } => "powered-uniform-pair",
            Family::GaussianStepsPair { .. } => "gaussian-steps-pair",
            Family::DeterministicHalfPair => "deterministic-half-pair",
        }
    }

    /// Human-readable name including parameters, e.g.
    /// `powered-uniform-pair(p=2)`.
    pub fn spec_string(&self) -> String {
        let mut args = Vec::new();
        match self.family {
            Family::PoweredUniformPair { p } => args.push(format!("p={p}")),
            Family::GaussianStepsPair { m0 } => args.push(format!("m0={m0}")),
            _ => {}
        }
        if self.c_shift != 0.0 {
            args.push(format!("c_shift={}", self.c_shift));
        }
        if self.keep_prob != 1.0 {
            args.push(format!("keep_prob={}", self.keep_prob));
        }
        if args.is_empty() {
            self.name().to_string()
        } else {
            format!("{}({})", self.name(), args.join(", "))
        }
    }

    /// Whether `Σ_j T_j = 1` holds almost surely.
    pub fn is_conservative(&self) -> bool {
        self.keep_prob == 1.0
            && matches!(
                self.family,
                Family::Quicksort | Family::UniformSplitPair | Family::DeterministicHalfPair
            )
    }

    /// Whether all weights are almost surely confined to `{0} ∪ r^Z` for some
    /// `r ≥ 1` (the arithmetic case excluded by the non-lattice assumption).
    pub fn is_lattice(&self) -> TriState {
        match self.family {
            // weights are powers of 1/2
            Family::DeterministicHalfPair => TriState::True,
            // continuous weight laws
            _ => TriState::False,
        }
    }

    /// Whether the family carries a nonzero toll.
    pub fn supports_c(&self) -> bool {
        matches!(self.family, Family::Quicksort) || self.c_shift != 0.0
    }

    /// `m(0) = E N`, the mean offspring number.
    pub fn mean_offspring(&self) -> f64 {
        2.0 * self.keep_prob
    }

    /// Largest offspring count a single draw can produce. Every built-in
    /// family splits into at most two pieces; thinning only removes.
    pub fn max_fanout(&self) -> usize {
        2
    }

    /// Closed-form `m(θ) = E Σ_j T_j^θ` where known, for `θ ≥ 0`.
    /// All built-in families have one; thinning scales it by `keep_prob`.
    pub fn closed_form_m(&self, theta: f64) -> Option<f64> {
        let base = match self.family {
            Family::Quicksort | Family::UniformSplitPair | Family::IidUniformPair => {
                2.0 / (1.0 + theta)
            }
            Family::PoweredUniformPair { p } => 2.0 / (p * theta + 1.0),
            Family::GaussianStepsPair { m0 } => 2.0 * (-m0 * theta + theta * theta / 2.0).exp(),
            Family::DeterministicHalfPair => (1.0 - theta).exp2(),
        };
        Some(self.keep_prob * base)
    }

    /// Derivative of the closed-form `m`, where known.
    /// `m'(θ) = E Σ_j T_j^θ ln T_j`, which at `θ = α` is the drift that the
    /// martingale-limit samplers gate on.
    pub fn closed_form_m_prime(&self, theta: f64) -> Option<f64> {
        let base = match self.family {
            Family::Quicksort | Family::UniformSplitPair | Family::IidUniformPair => {
                let d = 1.0 + theta;
                -2.0 / (d * d)
            }
            Family::PoweredUniformPair { p } => {
                let d = p * theta + 1.0;
                -2.0 * p / (d * d)
            }
            Family::GaussianStepsPair { m0 } => {
                2.0 * (-m0 * theta + theta * theta / 2.0).exp() * (theta - m0)
            }
            Family::DeterministicHalfPair => -std::f64::consts::LN_2 * (1.0 - theta).exp2(),
        };
        Some(self.keep_prob * base)
    }

    /// Whether all weights satisfy `T_j ≤ 1` almost surely. When true,
    /// moment conditions of the form `E Σ T_j^α (log⁻ T_j)^k < ∞` and
    /// `E (Σ T_j^α) log⁺(Σ T_j^α) < ∞` hold automatically for bounded fanout.
    pub fn weights_bounded_by_one(&self) -> bool {
        !matches!(self.family, Family::GaussianStepsPair { .. })
    }

    /// Whether `E Σ T_j^θ (log T_j)^2 < ∞` for every `θ > 0` is known
    /// analytically. Gaussian steps give log-normal weights, whose tilted log
    /// moments are all finite; bounded weights are immediate.
    pub fn tilted_log_moments_finite(&self) -> TriState {
        TriState::True
    }

    /// Whether `E |C|^β < ∞` for all `β > 0` is known analytically. Every
    /// built-in toll is bounded (`|g| ≤ 1` plus the constant shift).
    pub fn toll_bounded(&self) -> bool {
        true
    }

    /// One branching step from a dedicated seed.
    pub fn draw(&self, seed: u64) -> Realization {
        self.draw_with(&mut SeedNode::new(seed, "models/draw").rng())
    }

    /// One branching step from a caller-managed stream. This is the hot path
    /// of every sampler; the draw order per step (weights, then toll inputs,
    /// then thinning) is part of the reproducibility contract.
    #[inline]
    pub fn draw_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Realization {
        let mut t: ArrayVec<(u32, f64), MAX_FANOUT> = ArrayVec::new();
        let mut c = self.c_shift;
        match self.family {
            Family::Quicksort => {
                let u: f64 = rng.sample(Open01);
                c += quicksort_toll(u);
                t.push((1, u));
                t.push((2, 1.0 - u));
            }
            Family::UniformSplitPair => {
                let u: f64 = rng.sample(Open01);
                t.push((1, u));
                t.push((2, 1.0 - u));
            }
            Family::IidUniformPair => {
                t.push((1, rng.sample(Open01)));
                t.push((2, rng.sample(Open01)));
            }
            Family::PoweredUniformPair { p } => {
                let u1: f64 = rng.sample(Open01);
                let u2: f64 = rng.sample(Open01);
                t.push((1, u1.powf(p)));
                t.push((2, u2.powf(p)));
            }
            Family::GaussianStepsPair { m0 } => {
                let x1: f64 = m0 + rng.sample::<f64, _>(StandardNormal);
                let x2: f64 = m0 + rng.sample::<f64, _>(StandardNormal);
                t.push((1, (-x1).exp()));
                t.push((2, (-x2).exp()));
            }
            Family::DeterministicHalfPair => {
                t.push((1, 0.5));
                t.push((2, 0.5));
            }
        }
        if self.keep_prob < 1.0 {
            // one survival draw per child, in index order
            t.retain(|_| rng.random::<f64>() < self.keep_prob);
        }
        Realization { c, t }
    }
}

/// The Quicksort toll `g(u) = 2u ln u + 2(1-u) ln(1-u) + 1`; `∫₀¹ g = 0`.
#[inline]
pub(crate) fn quicksort_toll(u: f64) -> f64 {
    1.0 + 2.0 * u * u.ln() + 2.0 * (1.0 - u) * (-u).ln_1p()
}
