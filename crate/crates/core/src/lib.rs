//! Reduced-rank multivariate regression `Y = XA + σE` with the rank chosen by
//! penalties built from expected Ky-Fan norms of Gaussian matrices.
//!
//! * [`kyfan`]: tables of `S(r) = E‖G_{q×n}‖_(2,r)` by Monte Carlo or the
//!   Marchenko–Pastur approximation, plus the analytic envelope.
//! * [`reduced_rank`]: the projector onto `range(X)` and the whole path of
//!   rank-constrained least-squares fits from one SVD.
//! * [`selection`]: known- and unknown-variance rank selection, RSC/RSCI,
//!   cross-validated tuning and selection over arbitrary estimator families.
//! * [`simulation`]: synthetic designs and replicated experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod kyfan;
pub mod linalg;
pub mod reduced_rank;
pub mod rng;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
pub use nalgebra::DMatrix;
