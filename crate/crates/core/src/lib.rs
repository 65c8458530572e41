//! Embedding models for Zeek connection logs.
//!
//! The pipeline reads conn logs, serializes each connection as a line of
//! `name: value` text, trains a WordPiece vocabulary and a small transformer
//! encoder with a masked-language-model objective over sliding windows of the
//! stream, and extracts dense embeddings for connections, addresses and ports.
//! Embeddings are clustered with K-means and compared to expert labels with
//! the Adjusted Rand Index.

pub mod cluster;
pub mod embedding;
pub mod error;
pub mod model;
pub mod reduction;
pub mod rng;
pub mod synth;
pub mod tokenizer;
pub mod trainer;
pub mod zeek;

pub use error::{Error, Result};
