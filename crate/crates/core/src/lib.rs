//! Heterogeneous graph embeddings learned by encoding metapath instances
//! and attending over them.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: typed heterogeneous graphs, schemas and metapaths;
//! - [`metapath`]: metapath instance enumeration and metapath-based graphs;
//! - [`tensor`]: dense tensors with a reverse-mode gradient tape;
//! - [`model`]: the network (content transformation, instance encoders,
//!   intra- and inter-metapath attention, output projection);
//! - [`train`]: semi-supervised and unsupervised objectives and the
//!   optimization loop;
//! - [`eval`]: linear probes, clustering, link prediction, ablations and
//!   synthetic graph generators;
//! - [`io`]: dataset ingestion, run configuration and the run pipeline.

pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod metapath;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
