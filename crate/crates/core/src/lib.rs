//! Frequency-response laboratory for interconnections with high shares of
//! converter-interfaced generation.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below are what the command-line front end uses.

pub mod calibration;
pub mod engine;
pub mod grid;
pub mod metrics;
pub mod num;
pub mod protection;
pub mod scenario;

pub use num::Scalar;

pub type GridModelF64 = grid::GridModel<f64>;
pub type GridModelF32 = grid::GridModel<f32>;
pub type ContingencyF64 = engine::Contingency<f64>;
pub type SimConfigF64 = engine::SimConfig<f64>;
pub type SimulationResultF64 = engine::SimulationResult<f64>;
pub type ProtectionSchemeF64 = protection::ProtectionScheme<f64>;
pub type FrequencyTraceF64 = metrics::FrequencyTrace<f64>;
pub type MetricsReportF64 = metrics::MetricsReport<f64>;
