//! Physical-layer tag authentication for non-coherent massive SIMO links.
//!
//! Message symbols use the geometric non-negative PAM design; a one-bit tag
//! per symbol is embedded as extra power scaled to the symbol's level. The
//! receiver needs only `‖y‖²/N`, so every decision is a threshold test on
//! received energy.

pub mod constellation;
pub mod embedding;
pub mod error;
pub mod numerics;
pub mod optimize;
pub mod simulate;

pub use error::{PlaError, Result};
