//! Temporal link prediction on transaction graphs.
//!
//! Everything downstream of the graph store is deterministic given a seed:
//! synthetic data generation, split construction, subgraph extraction, and
//! model training all draw from counter-based random streams, so results
//! reproduce bit-for-bit across runs and thread counts.

pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod graph;
pub mod heuristics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod subgraph;
pub mod splits;
pub mod synthgen;

pub use error::{Error, Result};
pub use graph::{GraphView, TemporalGraph, TransactionEvent, Window};
