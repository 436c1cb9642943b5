//! Discrete-event simulator for TSN traffic carried over an industrial 5G
//! radio segment.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod traffic;
pub mod tsn;
