//! Fairness-aware domain-incremental training of small classifiers.
//!
//! The crate is organised bottom-up: a reverse-mode [`autodiff`] tape, an MLP
//! [`model`] with a classification head and a projection head, the training
//! [`losses`], cross-domain mixup in [`augment`], a reservoir [`replay`] buffer,
//! the staged [`trainer`], group-fairness [`metrics`], synthetic and CSV
//! [`data`], and the experiment harness in [`cli`].

// negated comparisons double as NaN rejection
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod replay;
pub mod trainer;

pub use error::{Error, Result};
