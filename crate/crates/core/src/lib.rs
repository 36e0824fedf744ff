//! Desk-scale workbench for training and evaluating driving policies with
//! reinforcement learning in a 2D simulator.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod env;
pub mod evalkit;
pub mod geometry;
pub mod learner;
pub mod par;
pub mod policy;
pub mod saliency;
pub mod sensor;
pub mod vehicle;
pub mod world;
