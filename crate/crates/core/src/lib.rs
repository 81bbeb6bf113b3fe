// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Mean field interacting particle systems on finite and Gaussian state
//! spaces, with non-asymptotic concentration certificates and a replicated
//! Monte Carlo harness that checks them.

pub mod bounds;
pub mod convex;
pub mod engine;
pub mod error;
pub mod measure;
pub mod models;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
