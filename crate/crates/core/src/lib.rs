//! Exact computation and seeded simulation for additive functionals
//! `S_n = g(W_1) + … + g(W_n)` of reversible jump-or-stay Markov chains whose
//! variance grows like `n ℓ(n)` with `ℓ` slowly varying.
//!
//! * [`chain`]: the chain family, its built-in instances and their checks.
//! * [`algebra`]: exact autocovariances, `σ_n²`, `κ`, `V̄_n g`, spectral measure.
//! * [`simulate`]: stepwise and regenerative path simulation.
//! * [`martingale`]: the martingale approximation along simulated paths.
//! * [`limits`]: holding-time law, `H(y)`, `γ_m`, normal and stable references.
//! * [`diagnostics`]: KS statistics, scale summaries, slow-variation tables.
//! * [`experiments`]: the canned experiments and acceptance criteria behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod chain;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod limits;
pub mod martingale;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod sums;

pub use algebra::{Analyzer, Kappa, MomentCache, PChainFunction, SpectralMeasure, VarianceTable};
pub use chain::{build_chain, BuiltinChain, ChainSpec, Interval, Measure};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use simulate::{Mode, PathResult, RegenBlock};
