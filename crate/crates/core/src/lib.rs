//! State-dependent-delay Goodwin operon model.
//!
//! The crate covers the model right-hand side ([`model`]), threshold delays
//! ([`threshold`]), steady states ([`equilibria`]), the characteristic
//! equation ([`spectrum`]), simulation ([`simulate`]) and one-parameter
//! continuation with fold/Hopf detection ([`continuation`]). The `operon`
//! binary wraps these for batch use ([`cli`]).

// `!(x > y)` is used on purpose so NaN takes the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod continuation;
pub mod equilibria;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod simulate;
pub mod spectrum;
pub mod threshold;

pub use error::{OperonError, Result};
pub use model::{OperonKind, OperonParameters, StateVector, Validation};
