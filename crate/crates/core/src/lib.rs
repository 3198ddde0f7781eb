//! Channel analysis for a head-mounted 8-panel mmWave receiver: geometric
//! CIR synthesis, delay-domain eigen-denoising, per-subcarrier eigen-gains
//! and the gain/volatility/service metrics built on them.

pub mod denoise;
pub mod eigengain;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;
pub mod tensor;

pub use error::{CellIndex, Error, Result};
pub use tensor::{CirSnapshot, ComplexTensor3, CtfSnapshot, Dims3, MeasurementKey, Scenario};
