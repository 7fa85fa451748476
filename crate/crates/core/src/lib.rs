//! Attribute annotation of web structured data from the raw characters of
//! attribute values.
//!
//! A value is embedded character by character and read by two branches: a
//! convolution with max-over-time pooling and an LSTM. Each branch ends in a
//! rectified dropout hidden layer, a pooling operator merges the two branch
//! vectors and a softmax layer predicts the attribute label. All forward and
//! backward passes are written by hand on top of [`numerics`].

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod numerics;
pub mod par;
pub mod training;

pub use error::{Error, Result};
