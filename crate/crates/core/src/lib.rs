//! Volt/VAr optimisation for radial distribution feeders.
//!
//! The numeric layers (`distflow`, `acpf`, `envelope`) are generic over the
//! scalar type; the mixed-integer layers work in `f64`.

pub mod acpf;
pub mod devices;
pub mod distflow;
pub mod envelope;
pub mod error;
pub mod feeder;
pub mod fixtures;
pub mod matrix;
pub mod mip;
pub mod scalar;
pub mod verify;
pub mod vpo;

pub use error::{Error, Result};
pub use feeder::{Feeder, LoadProfile};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
