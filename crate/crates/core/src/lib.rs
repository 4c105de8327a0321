//! Chart data extraction with a single multi-branch detector.
//!
//! The crate covers the whole loop: a deterministic synthetic bar/pie chart
//! generator with exhaustive ground truth ([`corpus`]), detection geometry
//! ([`geometry`]), a small reverse-mode differentiation engine ([`autodiff`]),
//! the detector and its text-recognition, object-matching and pie-angle
//! branches ([`detect`], [`branches`]), two-stage multi-task training
//! ([`train`]), extraction heuristics ([`infer`]) and scoring ([`eval`]).

pub mod autodiff;
pub mod branches;
pub mod config;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod infer;
pub mod model;
pub mod par;
pub mod train;

pub use error::{Error, Result};
