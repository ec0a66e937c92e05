use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::ImageGeometry;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::phantom::{rasterize_lumen, CrossSection};
use crate::scalar::Scalar;

/// A synthetic B-mode frame. Intensities lie in `[0, 1]`; `x` is the lateral
/// column and `y` the depth row.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeFrame<T> {
    pub intensity: Grid<T>,
    pub geometry: ImageGeometry,
    pub seed: u64,
}

impl<T: Scalar> BModeFrame<T> {
    pub fn new(intensity: Grid<T>, geometry: ImageGeometry) -> Result<Self> {
        if intensity.shape() != (geometry.width_px, geometry.depth_px) {
            return Err(Error::ShapeMismatch {
                left: intensity.shape(),
                right: (geometry.width_px, geometry.depth_px),
            });
        }
        Ok(Self {
            intensity,
            geometry,
            seed: 0,
        })
    }
}

/// Per-column coupling between transducer face and skin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    /// Gap in mm for every image column; `f64::INFINITY` when the column sees no surface.
    pub gaps_mm: Vec<f64>,
    /// Columns with a larger gap are acoustically decoupled.
    pub g_max_mm: f64,
}

impl ContactModel {
    pub fn fully_coupled(width: usize, g_max_mm: f64) -> Self {
        Self {
            gaps_mm: vec![0.0; width],
            g_max_mm,
        }
    }

    #[inline]
    pub fn is_coupled(&self, col: usize) -> bool {
        self.gaps_mm[col] <= self.g_max_mm
    }

    pub fn coupled_columns(&self) -> usize {
        (0..self.gaps_mm.len()).filter(|&c| self.is_coupled(c)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    /// Mean tissue echo at the face.
    pub echo_level: f64,
    /// Amplitude attenuation, 1/mm: intensity scales with `exp(-attenuation * depth)`.
    pub attenuation_per_mm: f64,
    /// Lumen intensity relative to the surrounding tissue.
    pub lumen_factor: f64,
    /// Shape of the unit-mean gamma speckle; `None` renders noiseless frames.
    pub speckle_shape: Option<f64>,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            echo_level: 0.45,
            attenuation_per_mm: 0.03,
            lumen_factor: 0.05,
            speckle_shape: Some(4.0),
        }
    }
}

impl RenderParams {
    pub fn noiseless() -> Self {
        Self {
            speckle_shape: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.echo_level > 0.0
            && self.echo_level <= 1.0
            && self.attenuation_per_mm >= 0.0
            && (0.0..=0.15).contains(&self.lumen_factor)
            && self.speckle_shape.is_none_or(|k| k > 0.0 && k.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid render parameters {self:?}")))
        }
    }
}

/// Renders speckle times depth attenuation, with dark lumens and black
/// (zero-intensity) shadow columns wherever the probe is decoupled.
///
/// Speckle is drawn for every pixel in row-major order from a ChaCha8 stream
/// seeded with `seed`, so the noise field does not depend on the scene.
pub fn render_bmode<T: Scalar>(
    cs: &CrossSection,
    contact: &ContactModel,
    geom: &ImageGeometry,
    seed: u64,
    params: &RenderParams,
) -> Result<BModeFrame<T>> {
    geom.validate()?;
    params.validate()?;
    if contact.gaps_mm.len() != geom.width_px {
        return Err(Error::Domain(format!(
            "contact model has {} columns, image has {}",
            contact.gaps_mm.len(),
            geom.width_px
        )));
    }
    let mut lumens = Mask::empty(geom.width_px, geom.depth_px);
    for l in &cs.lumens {
        lumens.or_assign(&rasterize_lumen(l, geom));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = params
        .speckle_shape
        .map(|k| Gamma::new(k, 1.0 / k).expect("validated shape"));
    let coupled: Vec<bool> = (0..geom.width_px).map(|c| contact.is_coupled(c)).collect();
    let mut data = Vec::with_capacity(geom.width_px * geom.depth_px);
    for row in 0..geom.depth_px {
        let depth = (row as f64 + 0.5) * geom.pixel_pitch;
        let base = params.echo_level * (-params.attenuation_per_mm * depth).exp();
        for (col, &is_coupled) in coupled.iter().enumerate() {
            let speckle = match &gamma {
                Some(g) => g.sample(&mut rng),
                None => 1.0,
            };
            let v = if !is_coupled {
                0.0
            } else if lumens.get(col, row) {
                base * params.lumen_factor * speckle
            } else {
                base * speckle
            };
            data.push(T::lit(v.clamp(0.0, 1.0)));
        }
    }
    Ok(BModeFrame {
        intensity: Grid::from_vec(geom.width_px, geom.depth_px, data)?,
        geometry: *geom,
        seed,
    })
}
