//! Asynchronous federated optimization.
//!
//! The server mixes every pushed model into the global model with a weight
//! that decays with the update's staleness; workers train on a proximal
//! surrogate anchored at the model they pulled. Synchronous FedAvg and serial
//! SGD baselines share the same objectives, shards and metrics so runs can be
//! compared on a "gradients applied" axis.
//!
//! The crate is `no_std` (with `alloc`). File formats, networking and the CLI
//! live in the companion `fedasync` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
mod error;
pub mod experiment;
pub mod metrics;
pub mod numerics;
pub mod data;
pub mod server;
pub mod simulator;
pub mod transport;
pub mod worker;

pub use error::{Error, Result};
pub use numerics::ParamVector;
