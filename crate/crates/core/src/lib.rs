//! Deterministic simulator of a gaze-guided robotic ultrasound scanning loop.
//!
//! A synthetic phantom (curved skin over a bifurcating vessel tree) is imaged
//! by a simulated linear probe. Each tick renders a speckled B-mode frame,
//! computes a scan-line confidence map, turns operator gaze into an attention
//! heatmap, stabilizes that attention over a history window, segments the
//! attended vessel and steps the probe controller.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the simulation loop.

pub mod attention;
pub mod control;
pub mod error;
pub mod grid;
pub mod imaging;
pub mod intention;
pub mod phantom;
pub mod runtime;
pub mod scalar;
pub mod segmentation;

pub use error::{Error, Result, ValidationIssue};
pub use grid::{Grid, Mask};
pub use scalar::Scalar;

pub type Frame = imaging::BModeFrame<f64>;
pub type Frame32 = imaging::BModeFrame<f32>;
pub type Confidence = imaging::ConfidenceMap<f64>;
pub type Confidence32 = imaging::ConfidenceMap<f32>;
pub type Heatmap = attention::AttentionHeatmap<f64>;
pub type Heatmap32 = attention::AttentionHeatmap<f32>;
pub type History = intention::HistoryBuffer<f64>;
pub type History32 = intention::HistoryBuffer<f32>;
