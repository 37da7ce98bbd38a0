//! Steering a robot swarm through a dictionary of configurations with noisy
//! binary inputs.
//!
//! The core pieces are the configuration [`dictionary`], the posterior
//! matching [`codec`], the noisy input [`channel`], the coverage-control
//! [`swarm`], trial [`metrics`] and the batch [`harness`]. [`neuro`] holds the
//! CSP/LDA input classifier and [`session`] the interactive session state
//! machine and its wire protocol.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod codec;
pub mod dictionary;
pub mod harness;
pub mod metrics;
pub mod neuro;
pub mod rng;
pub mod session;
pub mod swarm;
