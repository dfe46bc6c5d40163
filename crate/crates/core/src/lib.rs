//! Energy-based utterance embeddings for abstractive community detection in
//! meeting transcripts, and the overlapping-clustering and evaluation stack
//! around them.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! everything else that touches the OS live in the `acd` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod clustering;
pub mod corpus;
pub mod encoder;
pub mod energy;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod nn;
pub mod sampling;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
