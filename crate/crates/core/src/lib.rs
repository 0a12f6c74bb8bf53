//! Single-pass online clustering without a preset cluster count.
//!
//! A restricted Boltzmann machine whose hidden layer grows and shrinks
//! under a bias/variance controller encodes each arriving sample once;
//! an online Kohonen head clusters the latent codes, adding clusters for
//! outlying samples and retiring stale ones. Each sample is seen exactly
//! once, so the model fits streams that cannot be stored or revisited.
//!
//! The crate is organized along the processing path: [`rbm`] and
//! [`evolve`] form the self-sizing encoder, [`knet`] the cluster head,
//! [`pipeline`] ties them together per sample, and [`data_io`],
//! [`metrics`], and [`baseline`] supply datasets, evaluation, and a
//! fixed-k reference.

pub mod baseline;
pub mod data_io;
pub mod error;
pub mod evolve;
pub mod knet;
pub mod metrics;
pub mod pipeline;
pub mod rbm;
pub mod stats;

pub use error::{Error, Result};
