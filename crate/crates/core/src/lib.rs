//! Integer-weight decision scorecards built by select-regress-and-round,
//! plus offline evaluation of decision policies: response-surface
//! counterfactual estimates, sensitivity to an unobserved binary covariate,
//! and the AUC cost of additive score noise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod glm;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod policy;
pub mod selection;
pub mod srr;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
