//! Dataset files, metapath text, run configuration and the run pipeline.

pub mod config;
pub mod dataset;
pub mod run;
pub mod text;
pub mod toy;

pub use config::{DatasetSpec, RunConfig, TaskSpec};
pub use dataset::{load_dataset, write_dataset, Dataset};
pub use text::{format_metapath, parse_metapath};
pub use toy::toy_graph;
