//! Deterministic discrete-time simulator and protocol library for
//! mobility-driven collaborative learning.
//!
//! Mobile devices ("mules") carry model snapshots between fixed devices
//! embedded in physical spaces. While a mule shares a space with a
//! fixed device, the pair runs repeated training cycles — share,
//! aggregate behind an adaptive model-freshness filter, train, share
//! back — so knowledge flows between devices that are never present at
//! the same time. The crate bundles the protocol itself, the world
//! and mobility models used to evaluate it, data partitioners, two
//! small reference learners, the standard comparison baselines, and a
//! deterministic simulation engine.
//!
//! Module map:
//!
//! - [`worldsim`] — areas, spaces, random-walk and trace mobility,
//!   co-location detection
//! - [`partition`] — synthetic datasets; IID, Dirichlet, and shards
//!   splits; train/test holdout
//! - [`learner`] — logistic / MLP learners, SGD, weighted aggregation,
//!   checkpoints
//! - [`protocol`] — freshness threshold, the two in-house cycles,
//!   transactional multi-step transfers
//! - [`baselines`] — FedAvg, gossip, opportunistic exchange, local-only
//! - [`engine`] — the tick loop, rounds, evaluation, metrics CSV
//! - [`config`] / [`cli`] — experiment configs, seed sweeps, and the
//!   `mule-sim` binary's commands
//!
//! Every run is a pure function of its config and seed: mobility,
//! learning, data arrival, and evaluation draw from independent RNG
//! streams, and rerunning a config reproduces its metrics byte for
//! byte. The `examples/` directory holds one runnable walkthrough per
//! major capability; start with `world_tour`.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod learner;
pub mod partition;
pub mod protocol;
pub mod rng;
pub mod worldsim;

pub use error::{Error, Result};
