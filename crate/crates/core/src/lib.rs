//! Differential-privacy analysis of additive noise mechanisms `A(x) = x + θ`,
//! with a Monte-Carlo privacy-loss oracle and a simulator for noisy average
//! consensus.
//!
//! The crate is organised around four pieces:
//!
//! - [`density`]: one-dimensional noise densities (parametric families and
//!   piecewise closed-form expressions), with evaluation, quadrature, zero-set
//!   extraction and seeded sampling.
//! - [`analyzer`]: decides whether the additive mechanism is ε-DP or (ε,δ)-DP
//!   for a given adjacency radius σ and reports the bounds.
//! - [`oracle`]: an independent histogram estimate of the privacy loss, used to
//!   cross-check analyzer verdicts.
//! - [`consensus`]: the privacy-preserving consensus iteration
//!   `x⁺(k) = x(k) + θ(k)`, `x(k+1) = W x⁺(k)` and the convergence/privacy
//!   experiments built on it.

pub mod analyzer;
pub mod consensus;
pub mod density;
pub mod oracle;
pub mod quadrature;
pub mod rng;

pub use analyzer::{AdjacencyParam, Analyzer, AnalyzerConfig, PrivacyVerdict, VerdictKind};
pub use density::{DensitySpec, EvalGrid};

pub use oracle::{compare, estimate_profile, OracleConfig, PrivacyProfile};
