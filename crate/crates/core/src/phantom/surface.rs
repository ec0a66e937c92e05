use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular scan area in world mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceKind {
    Flat,
    /// Cylinder with its axis along world y at `z = 0`; height is measured from the axis.
    Cylinder { radius_mm: f64 },
    /// Catmull-Rom patch through `nx * ny` control heights spread uniformly over
    /// the extent, row-major with x varying fastest.
    SplineHeightfield {
        nx: usize,
        ny: usize,
        heights_mm: Vec<f64>,
    },
}

/// Skin surface of the phantom, `z = h(x, y)` in world mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceProfile {
    #[serde(flatten)]
    pub kind: SurfaceKind,
    pub extent: Extent,
}

impl SurfaceProfile {
    pub fn flat(extent: Extent) -> Self {
        Self {
            kind: SurfaceKind::Flat,
            extent,
        }
    }

    /// Cylinder spanning its full width, `x in [-r, r]`.
    pub fn cylinder(radius_mm: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            kind: SurfaceKind::Cylinder { radius_mm },
            extent: Extent {
                x_min: -radius_mm,
                x_max: radius_mm,
                y_min,
                y_max,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.extent;
        if !(e.x_min < e.x_max && e.y_min < e.y_max) {
            return Err(Error::Domain("surface extent is empty".into()));
        }
        match &self.kind {
            SurfaceKind::Flat => {}
            SurfaceKind::Cylinder { radius_mm } => {
                if !(*radius_mm > 0.0 && radius_mm.is_finite()) {
                    return Err(Error::Domain("cylinder radius must be positive".into()));
                }
                if e.x_min < -radius_mm || e.x_max > *radius_mm {
                    return Err(Error::Domain(
                        "cylinder extent must lie within [-radius, radius]".into(),
                    ));
                }
            }
            SurfaceKind::SplineHeightfield { nx, ny, heights_mm } => {
                if *nx < 2 || *ny < 2 || heights_mm.len() != nx * ny {
                    return Err(Error::Domain(format!(
                        "heightfield needs nx, ny >= 2 and nx*ny heights (got {}x{} and {})",
                        nx,
                        ny,
                        heights_mm.len()
                    )));
                }
                if heights_mm.iter().any(|h| !h.is_finite()) {
                    return Err(Error::Domain("heightfield contains non-finite heights".into()));
                }
            }
        }
        Ok(())
    }

    /// Surface height at `(x, y)`; errors outside the extent.
    pub fn height(&self, x: f64, y: f64) -> Result<f64> {
        surface_height(x, y, self)
    }
}

pub fn surface_height(x: f64, y: f64, profile: &SurfaceProfile) -> Result<f64> {
    if !profile.extent.contains(x, y) {
        return Err(Error::Domain(format!(
            "({x:.3}, {y:.3}) mm lies outside the surface extent"
        )));
    }
    Ok(match &profile.kind {
        SurfaceKind::Flat => 0.0,
        SurfaceKind::Cylinder { radius_mm } => (radius_mm * radius_mm - x * x).max(0.0).sqrt(),
        SurfaceKind::SplineHeightfield { nx, ny, heights_mm } => {
            let e = &profile.extent;
            let u = (x - e.x_min) / (e.x_max - e.x_min) * (*nx as f64 - 1.0);
            let v = (y - e.y_min) / (e.y_max - e.y_min) * (*ny as f64 - 1.0);
            bicubic(heights_mm, *nx, *ny, u, v)
        }
    })
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p[1])
        + (-p[0] + p[2]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t2
        + (-p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3]) * t3)
}

fn bicubic(h: &[f64], nx: usize, ny: usize, u: f64, v: f64) -> f64 {
    let i = (u.floor() as isize).clamp(0, nx as isize - 2);
    let j = (v.floor() as isize).clamp(0, ny as isize - 2);
    let (tu, tv) = (u - i as f64, v - j as f64);
    let at = |a: isize, b: isize| {
        let a = a.clamp(0, nx as isize - 1) as usize;
        let b = b.clamp(0, ny as isize - 1) as usize;
        h[b * nx + a]
    };
    let mut rows = [0.0; 4];
    for (k, row) in rows.iter_mut().enumerate() {
        let b = j - 1 + k as isize;
        *row = catmull_rom([at(i - 1, b), at(i, b), at(i + 1, b), at(i + 2, b)], tu);
    }
    catmull_rom(rows, tv)
}
