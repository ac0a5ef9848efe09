//! Streaming construction of temporal, text-attributed domain graphs from
//! web-archive crawls, with credibility labels and regression baselines.

pub mod archive;
pub mod artifact;
pub mod degree;
pub mod embedding;
pub mod extsort;
pub mod fixtures;
pub mod graph;
pub mod host;
pub mod labels;
pub mod regression;
pub mod rng;
pub mod stats;
pub mod temporal;
pub mod text;
