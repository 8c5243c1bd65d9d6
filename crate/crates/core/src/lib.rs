//! One-factor affine Vasicek term-structure estimation and long-maturity
//! yield extrapolation.
//!
//! The model is fitted to a two-maturity panel of continuously compounded
//! zero rates, either by a constrained Gibbs sampler ([`gibbs`]) or by
//! conditional maximum likelihood ([`mle`]). Posterior draws are mapped
//! through the closed-form affine relations in [`affine`] to produce
//! extrapolated yield fans out to 100 years ([`summary`]), which can be
//! compared against the Nelson–Siegel and Smith–Wilson curves in
//! [`baselines`].

// `!(x > 0.0)` is used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod baselines;
pub mod curves;
pub mod diagnostics;
mod error;
pub mod gibbs;
pub mod linalg;
pub mod mle;
pub mod simulate;
pub mod summary;

pub use affine::{DecompositionKind, DerivedParams, Extra, VarParams};
pub use curves::{CurveSnapshot, MaturityPair, PairView, ZeroCurvePanel};
pub use error::{Error, Result};
pub use linalg::Cov2;
