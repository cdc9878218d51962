//! Link-level simulator for integrated communication and over-the-air
//! computation with nested-lattice dirty-paper coding.
//!
//! Each single-antenna user knows its own computing symbol `s_k` and
//! pre-cancels it from its data symbol with a coarse-lattice modulo. The
//! multi-antenna receiver recovers the data per slot with LMMSE plus modulo
//! and fine-grid quantization, then recovers the computing vector by an
//! exhaustive ML search and evaluates the sum `Σ s_k`. A superposition
//! scheme (`x = d + s`) serves as the benchmark.

pub mod baseline;
pub mod channel;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod metrics;
pub mod receiver;
pub mod sim;
pub mod transmitter;

pub use error::{Error, Result};
pub use lattice::{ComplexSample, Constellation, ConstellationKind, LatticeConfig};
pub use metrics::{MetricsRecord, Scheme};
pub use sim::SimConfig;
