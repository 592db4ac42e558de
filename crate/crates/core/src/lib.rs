//! Numerical toolkit for device-independent certification of distillable
//! GHZ entanglement with the MABK game.
//!
//! Module map:
//! - [`qmath`]: dense linear algebra, entropies, fidelity, conditional max-entropy
//! - [`ghz`]: GHZ basis, GHZ-diagonal states, CNOT reduction, Bell twirl, sources
//! - [`mabk`]: MABK operators, coefficient tables, game statistics
//! - [`jordan`]: Jordan block decomposition and the block-projection instrument
//! - [`tradeoff`]: max-tradeoff functions and their tangent linearization
//! - [`certify`]: completeness bound, η / η_opt, certified rates
//! - [`protocol`]: Monte Carlo round engine and abort statistics

pub mod certify;
pub mod error;
pub mod ghz;
pub mod jordan;
pub mod mabk;
pub mod protocol;
pub mod qmath;
pub mod tradeoff;

pub use error::{Error, Result};
