// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod error;
pub mod eval;
pub mod model;
pub mod monitor;
pub mod ort;
pub mod predict;
pub mod preprocess;
pub mod rng;
pub mod simgen;
pub mod stats;
