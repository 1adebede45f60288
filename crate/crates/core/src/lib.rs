//! Robust active queue management for the TCP fluid model.
//!
//! The crate builds Lyapunov-Krasovskii LMI conditions for the linearized
//! TCP/queue dynamics, synthesizes memoryless state-feedback drop-probability
//! laws (delay-independent and delay-dependent, nominal and polytopic),
//! checks every verdict against a spectral stability oracle, and simulates
//! the nonlinear delayed fluid model under the resulting controllers.

pub mod error;
pub mod model;
pub mod sdp;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use nalgebra;
