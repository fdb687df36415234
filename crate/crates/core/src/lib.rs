//! Grouped convolutional networks for multivariate time-series regression.
//!
//! Input series are grouped either explicitly, by normalized-cut spectral
//! clustering of their correlation graph, or implicitly, through a trainable
//! soft-membership layer. Everything runs on a small fp64 gradient tape.

pub mod layers;
pub mod model;
pub mod tensor;
pub mod trainer;
pub mod spectral;
pub mod tsdata;
