//! Companion crate of `scc-loc-core`: binary formats, configuration,
//! synthetic scenarios, the pipeline runner and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod config;
pub mod dataset;
pub mod formats;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod world;
