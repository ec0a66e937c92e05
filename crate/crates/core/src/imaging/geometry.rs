use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel layout of the imaging plane {I}.
///
/// Column `c` is centered at lateral `origin.0 + (c - (width - 1) / 2) * pitch`
/// and row `r` at depth `origin.1 + (r + 0.5) * pitch`, both in probe-frame mm.
/// With the default origin the image top-center sits on the transducer face center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width_px: usize,
    pub depth_px: usize,
    /// mm per pixel, identical laterally and axially.
    pub pixel_pitch: f64,
    #[serde(default)]
    pub origin: (f64, f64),
}

impl Default for ImageGeometry {
    fn default() -> Self {
        Self {
            width_px: 256,
            depth_px: 256,
            pixel_pitch: 0.15,
            origin: (0.0, 0.0),
        }
    }
}

impl ImageGeometry {
    pub fn new(width_px: usize, depth_px: usize, pixel_pitch: f64) -> Result<Self> {
        let g = Self {
            width_px,
            depth_px,
            pixel_pitch,
            origin: (0.0, 0.0),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.depth_px == 0 {
            return Err(Error::Domain("image geometry needs positive pixel counts".into()));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(Error::Domain(format!(
                "pixel pitch must be positive, got {}",
                self.pixel_pitch
            )));
        }
        Ok(())
    }

    /// Column coordinate of the image centerline, `(width - 1) / 2`.
    #[inline]
    pub fn center_column(&self) -> f64 {
        (self.width_px as f64 - 1.0) / 2.0
    }

    #[inline]
    pub fn width_mm(&self) -> f64 {
        self.width_px as f64 * self.pixel_pitch
    }

    #[inline]
    pub fn depth_mm(&self) -> f64 {
        self.depth_px as f64 * self.pixel_pitch
    }

    #[inline]
    pub fn column_to_lateral(&self, col: f64) -> f64 {
        self.origin.0 + (col - self.center_column()) * self.pixel_pitch
    }

    #[inline]
    pub fn row_to_depth(&self, row: f64) -> f64 {
        self.origin.1 + (row + 0.5) * self.pixel_pitch
    }

    #[inline]
    pub fn lateral_to_column(&self, lateral_mm: f64) -> f64 {
        (lateral_mm - self.origin.0) / self.pixel_pitch + self.center_column()
    }

    #[inline]
    pub fn depth_to_row(&self, depth_mm: f64) -> f64 {
        (depth_mm - self.origin.1) / self.pixel_pitch - 0.5
    }

    /// Lateral extent of the field of view in mm, `(min, max)`.
    pub fn lateral_bounds(&self) -> (f64, f64) {
        let half = self.width_mm() / 2.0;
        (self.origin.0 - half, self.origin.0 + half)
    }

    pub fn depth_bounds(&self) -> (f64, f64) {
        (self.origin.1, self.origin.1 + self.depth_mm())
    }
}
