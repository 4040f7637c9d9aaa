//! Accelerated randomized gossip for average consensus.
//!
//! Nodes of a connected network each hold a value and want the network-wide
//! mean. Pairwise gossip is randomized Kaczmarz on the normalized incidence
//! system `A x = 0`; accelerating Kaczmarz gives gossip protocols in which
//! every node updates each round while only the activated pair communicates.
//!
//! - [`topology`]: cycle, grid and random geometric graphs; the incidence system.
//! - [`spectral`]: λ⁺min of `AᵀA`, `W = AᵀA/m`, `L`; the constant `ν`; rates.
//! - [`kaczmarz`]: matrix-form randomized and accelerated Kaczmarz.
//! - [`gossip`]: node-register protocols behind the [`gossip::GossipMethod`] trait.
//! - [`harness`]: multi-trial experiments, bound checks, CSV/SVG output.
//! - [`config`]: the `key=value` experiment file.

pub mod config;
pub mod error;
pub mod gossip;
pub mod harness;
pub mod kaczmarz;
pub mod rng;
pub mod spectral;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
