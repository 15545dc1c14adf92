//! Work fluctuations of bipartite quantum batteries under local random
//! unitaries, Schmidt-number witnesses built from them, and the two-point
//! and coincidence measurement protocols that estimate them.

pub mod battery;
pub mod bloch;
pub mod coincidence;
pub mod config;
pub mod error;
pub mod haar;
pub mod linalg;
pub mod oracle;
pub mod runner;
pub mod spectral;
pub mod state;
pub mod stats;
pub mod tpm;
pub mod witness;

pub use error::{Error, Result};
