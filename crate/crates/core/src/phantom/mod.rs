//! Synthetic arm phantom: a curved skin surface over a bifurcating vessel tree.
//!
//! The phantom is immutable once built and is shared read-only by the
//! simulation loop.

mod section;
mod surface;
mod vessel;

use serde::{Deserialize, Serialize};

pub use section::{
    cross_section, rasterize_labels, rasterize_lumen, section_in_plane, CrossSection, ImagingPlane,
    LabelMask, Lumen,
};
pub use surface::{surface_height, Extent, SurfaceKind, SurfaceProfile};
pub use vessel::{
    BranchId, Junction, Point3, VesselBranch, VesselLayout, VesselTree, JUNCTION_TOLERANCE_MM,
};

use crate::error::Result;

/// A fully built phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomModel {
    pub surface: SurfaceProfile,
    pub vessels: VesselTree,
}

impl PhantomModel {
    pub fn build(surface: SurfaceProfile, layout: &VesselLayout) -> Result<Self> {
        surface.validate()?;
        let vessels = layout.build(&surface)?;
        Ok(Self { surface, vessels })
    }
}
