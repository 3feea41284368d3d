//! Backbone-agnostic cross-modal geo-localization core.
//!
//! The crate is `no_std` (with `alloc`) and purely computational: every
//! stage takes decoded inputs and returns values. File formats, synthetic
//! scenarios and the command line live in the companion `scc-loc` crate.

#![no_std]
// negated float comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cdraps;
pub mod csatsf;
pub mod geo;
pub mod image;
pub mod metrics;
pub mod retrieval;
pub mod sgva;
