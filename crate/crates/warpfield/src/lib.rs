//! Reconstruction of non-rigid 3D scene transformations from sparse
//! correspondences.
//!
//! The pipeline: filter raw 2D matches into 3D anchor pairs
//! ([`correspond`]), optimize an embedded deformation graph against them
//! ([`defgraph`], [`optim`]), and evaluate the resulting forward/backward
//! scene flow to warp meshes, point sets, and ray samples ([`flow`]).
//! [`evalsynth`] provides geometric metrics and synthetic scenes with known
//! ground truth.

// Negated comparisons like `!(x > 0.0)` are NaN-rejecting validations here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Mat3/Quat use short `add`/`sub` method names without operator traits.
#![allow(clippy::should_implement_trait)]

pub mod geometry;
pub mod parallel;

pub mod defgraph;
pub mod flow;

pub mod correspond;
pub mod optim;

pub mod evalsynth;

pub mod config;
pub mod io;
