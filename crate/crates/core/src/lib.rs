//! Weighted sampled split learning.
//!
//! A model is cut into a client half and a server half. Clients send
//! detached cut-layer activations to the server, the server returns the
//! cut-layer gradient, and client halves are fused by importance-weighted
//! averaging after every round. Clients are picked each round by weighted
//! sampling without replacement over importance scores.
//!
//! Modules, bottom-up:
//!
//! * [`nn`]: dense layers, activations, losses, exact backprop, SGD.
//! * [`split`]: client/server nodes, the split batch protocol, averaging.
//! * [`selection`]: importance scores and per-round client sampling.
//! * [`data`]: CSV loading, scaling, stratified splits, synthetic blobs,
//!   batching, partition digests.
//! * [`transport`]: binary frame codec, in-process and TCP endpoints.
//! * [`experiment`]: config, the training loops, metrics CSV.
//! * [`cli`]: the `wssl` command line.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod selection;
pub mod split;
pub mod transport;

pub use error::{Error, Result};
