//! Retargeting chart specifications to new datasets.

pub mod advisor;
pub mod dataflow;
pub mod depgraph;
pub mod harness;
pub mod linter;
pub mod mapper;
pub mod profiler;
pub mod rewriter;
pub mod spec;
