//! Polynormer: a graph transformer whose gated layers compose into
//! polynomials of the node features, with attention linear in graph size,
//! plus symbolic and numeric oracles for the resulting expressivity.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`diffmath`] | `f64` matrix kernels, CSR products, reverse-mode tape |
//! | [`graphstore`] | graphs, datasets, PGRF I/O, generators, spectral probe |
//! | [`attention`] | local (sparse) and global (kernelized) attention layers |
//! | [`model`] | full local-to-global model, variants, WL probe, checkpoints |
//! | [`polyoracle`] | symbolic polynomial expansion of the base model |
//! | [`training`] | losses, metrics, Adam, training loop |
//! | [`verify`] | property suites used by the `verify` command |
//! | [`bench`] | scaling benchmark with allocation tracking |

pub mod attention;
pub mod bench;
pub mod diffmath;
pub mod error;
pub mod graphstore;
pub mod model;
pub mod polyoracle;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
