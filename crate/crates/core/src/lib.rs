//! Simulation and verification toolkit for fixed points of smoothing transforms.
//!
//! A smoothing transform takes a probability distribution `P`, draws a random
//! vector `(C, T_1, T_2, ...)` with nonnegative weights `T_j`, draws independent
//! `X_j ~ P`, and maps `P` to the law of `C + Σ_j T_j X_j`. Fixed points of this
//! map show up as limit laws of divide-and-conquer recurrences (Quicksort costs
//! being the classic example), in branching random walks, and in interacting
//! particle systems. This crate simulates the weighted branching process behind
//! the transform and tests putative fixed points against it:
//!
//! * [`models`]: built-in weight families `(C, T)` with closed-form spectral
//!   functions where available.
//! * [`wbp`]: materialized weighted trees, generation and first-exit lines,
//!   embedded record sets.
//! * [`spectral`]: the spectral function `m(θ) = E Σ_j T_j^θ`, its root `α`
//!   (the characteristic exponent), and checkable standing assumptions.
//! * [`fixpoints`]: Monte Carlo batches of the additive martingale limit `W`
//!   and the toll sum `W*`.
//! * [`stable`]: strictly stable building blocks and samplers for the known
//!   fixed-point families (mixtures of stable laws scaled by `W`).
//! * [`verify`]: distributional tests that a candidate law is actually fixed,
//!   characteristic-function disintegration along the tree, and mean
//!   identities.
//! * [`quicksort`]: the end-to-end Quicksort comparison-count pipeline.
//! * [`suite`]: the recorded acceptance checks run by `cargo test` and the CLI.
//!
//! Everything randomized takes an explicit `u64` seed and is bit-reproducible
//! for a fixed seed, independent of worker count; see [`rng`].

pub mod error;
pub mod fixpoints;
pub mod models;
pub mod quicksort;
pub mod rng;
pub mod spectral;
pub mod stable;
pub mod suite;
pub mod verify;
pub mod wbp;

pub use error::{Error, Result};

/// Answer to a question that a check may be unable to settle numerically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    True,
    False,
    Unknown,
}

impl TriState {
    pub fn is_true(self) -> bool {
        self == TriState::True
    }

    /// True or unproven, i.e. "not known to fail".
    pub fn admissible(self) -> bool {
        self != TriState::False
    }

    /// Conjunction: false dominates, unknown taints.
    pub fn and(self, other: TriState) -> TriState {
        use TriState::*;
        match (self, other) {
            (False, _) | (_, False) => False,
            (Unknown, _) | (_, Unknown) => Unknown,
            (True, True) => True,
        }
    }
}

impl From<bool> for TriState {
    fn from(b: bool) -> Self {
        if b {
            TriState::True
        } else {
            TriState::False
        }
    }
}
