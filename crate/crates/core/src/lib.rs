//! Simulation of a query-based learner that recycles its qRAM-prepared input
//! superposition while asking an unreliable oracle.
//!
//! - [`statevec`]: dense statevector engine.
//! - [`dataset`]: concepts, class partition, qRAM initialization.
//! - [`oracle`]: the oracle with reliability `L`.
//! - [`postproc`]: answer measurement, recovery unitary, ancilla measurement.
//! - [`protocol`]: the recycling loop and Monte Carlo harness.
//! - [`analysis`]: the bound `R ≤ 1 − L` and adversarial checks of it.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod oracle;
pub mod postproc;
pub mod protocol;
pub mod statevec;

pub use error::{Error, Result};
