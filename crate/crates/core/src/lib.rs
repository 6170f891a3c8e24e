//! Derivative-dependent PDC synthesis and verification for Takagi-Sugeno fuzzy models.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dpoly;
pub mod expr;
pub mod io;
pub mod lmi;
pub mod model;
pub mod par;
pub mod certificate;
pub mod synth_global;
pub mod synth_local;
pub mod sim;
pub mod contour;
pub mod svg;
pub mod experiments;
pub mod cli;
