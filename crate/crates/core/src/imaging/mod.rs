//! Synthetic B-mode rendering and scan-line confidence maps.

mod confidence;
pub mod export;
mod geometry;
mod render;

pub use confidence::{confidence_map, ConfidenceMap};
pub use geometry::ImageGeometry;
pub use render::{render_bmode, BModeFrame, ContactModel, RenderParams};
