//! Small feed-forward networks for memory-budgeted NLP.
//!
//! The crate trains and serves shallow networks (embedding layer, one ReLU
//! hidden layer, softmax) for four tasks: language identification, POS
//! tagging, word segmentation and translation preordering. Every model can be
//! measured exactly, both in serialized bytes and in per-inference FLOPs.
//!
//! Module map:
//! - [`features`]: hashed character n-grams, lexicons and feature templates.
//! - [`network`]: the embedding network, forward pass and gradients.
//! - [`training`]: minibatch SGD with momentum, staircase decay, early stopping.
//! - [`quantize`]: 8-bit row-wise embedding quantization.
//! - [`bloom`]: the approximate word-to-cluster store.
//! - [`transition`]: segmentation and preordering transition systems.
//! - [`cost`]: model size and FLOPs accounting.
//! - [`pipelines`]: the four task assemblies.
//! - [`cli`]: the `sffn` command-line front end.

pub mod bloom;
pub mod cli;
pub mod config;
pub mod cost;
pub mod error;
pub mod features;
pub mod hashing;
pub mod io;
pub mod metrics;
pub mod model_file;
pub mod network;
pub mod pipelines;
pub mod quantize;
pub mod training;
pub mod transition;

pub use error::{Error, Result};
