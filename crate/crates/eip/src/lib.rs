//! Ephemeral self-certified IP identifiers with receiver-generated puzzles.
//!
//! Hosts mint short-lived 128-bit identifiers bound to a public key through a
//! keyed MAC over a self-signed certificate. A receiver verifies the binding
//! without any infrastructure, then (optionally) makes the sender solve a
//! brute-force puzzle before whitelisting the flow. Because the puzzle answer
//! travels to the *claimed* source, spoofed traffic earns the spoofer nothing
//! and reflection amplification collapses to the puzzle channel, which is
//! itself rate-shaped per source prefix.
//!
//! Module map:
//! - [`crypto`]: hash/MAC/signature primitives and LSB truncation
//! - [`identity`]: certificates, identifier derivation, verification, whitelist
//! - [`puzzle`]: challenge issue/solve/verify with stateless re-derivation
//! - [`wire`]: packet encoding and the nominal size constants
//! - [`shaper`]: per-prefix token buckets limiting challenge transmission
//! - [`endpoint`]: client session state machine and server pipeline
//! - [`model`]: closed-form victim-bandwidth predictions
//! - [`sim`]: deterministic discrete-event reflection simulator
//!
//! The `examples/` directory walks through each capability; `src/bin/eip.rs`
//! exposes the same operations as a command line tool.

pub mod cli;
pub mod crypto;
pub mod endpoint;
pub mod identity;
pub mod model;
pub mod puzzle;
pub mod shaper;
pub mod sim;
pub mod wire;

mod error;

pub use error::{Error, Result};
