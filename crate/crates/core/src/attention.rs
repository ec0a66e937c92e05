//! Attention heatmaps: pseudo heatmaps sampled around a label, raw heatmaps
//! from gaze samples, and the all-zero "segment everything" map.
//!
//! All non-zero heatmaps are built the same way: point hits on an impulse
//! image, a `K x K` all-ones box filter, then division by the maximum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{box_sum_u32, Grid, Mask};
use crate::imaging::ImageGeometry;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapKind {
    Pseudo,
    RawGaze,
    Stabilized,
    Zero,
}

/// One gaze-tracker sample in image pixels. Off-image positions are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    /// Pixel hit by the sample, if valid and inside the image.
    pub fn pixel(&self, geom: &ImageGeometry) -> Option<(usize, usize)> {
        if !self.valid || !self.x.is_finite() || !self.y.is_finite() {
            return None;
        }
        let (x, y) = (self.x.round(), self.y.round());
        if x < 0.0 || y < 0.0 || x >= geom.width_px as f64 || y >= geom.depth_px as f64 {
            return None;
        }
        Some((x as usize, y as usize))
    }
}

/// Parameters of the heatmap generators.
///
/// Covariances are diagonal and stored as variances in px². The defaults put
/// standard deviations of 15 px (centroid jitter) and 25 px (point spread).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapParams {
    pub centroid_cov: [f64; 2],
    pub sample_cov: [f64; 2],
    pub n_points: usize,
    /// Side of the all-ones kernel. For even sizes the anchor sits at `(K/2, K/2)`,
    /// so a hit at `p` covers `[p - K/2, p + K - 1 - K/2]` on each axis.
    pub kernel: usize,
    /// Probability that the pseudo generator returns the zero map instead.
    pub zero_fraction: f64,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self {
            centroid_cov: [15.0 * 15.0; 2],
            sample_cov: [25.0 * 25.0; 2],
            n_points: 200,
            kernel: 30,
            zero_fraction: 0.1,
        }
    }
}

impl HeatmapParams {
    pub fn validate(&self) -> Result<()> {
        let covs = self.centroid_cov.iter().chain(&self.sample_cov);
        if covs.clone().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Domain("heatmap covariances must be >= 0".into()));
        }
        if self.n_points == 0 || self.kernel == 0 {
            return Err(Error::Domain("heatmap needs N >= 1 and kernel >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.zero_fraction) {
            return Err(Error::Domain("zero fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Window offsets `(lo, hi)` such that `out(x) = sum in(x + lo ..= x + hi)`.
    fn window(&self) -> (isize, isize) {
        let k = self.kernel as isize;
        let anchor = k / 2;
        (-(k - 1 - anchor), anchor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHeatmap<T> {
    pub values: Grid<T>,
    pub kind: HeatmapKind,
    pub geometry: ImageGeometry,
}

impl<T: Scalar> AttentionHeatmap<T> {
    pub fn zero(geom: &ImageGeometry) -> Self {
        Self {
            values: Grid::filled(geom.width_px, geom.depth_px, T::zero()),
            kind: HeatmapKind::Zero,
            geometry: *geom,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind == HeatmapKind::Zero
    }

    /// Sum of all values.
    pub fn mass(&self) -> T {
        self.values
            .as_slice()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v)
    }

    /// Sum of the values under `mask`.
    pub fn mass_in(&self, mask: &Mask) -> T {
        self.values
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .filter(|(_, &m)| m)
            .fold(T::zero(), |acc, (&v, _)| acc + v)
    }

    /// First maximum in row-major order as `(x, y)`.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, T::neg_infinity());
        for (i, &v) in self.values.as_slice().iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 % self.values.width(), best.0 / self.values.width())
    }

    pub fn max_value(&self) -> T {
        self.values
            .as_slice()
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v))
    }
}

pub fn zero_heatmap<T: Scalar>(geom: &ImageGeometry) -> AttentionHeatmap<T> {
    AttentionHeatmap::zero(geom)
}

/// Box-filters an impulse-count image with the `K x K` ones kernel and
/// max-normalizes. An all-zero impulse image yields the zero heatmap.
pub fn diffuse<T: Scalar>(
    impulses: &Grid<u32>,
    params: &HeatmapParams,
    geom: &ImageGeometry,
    kind: HeatmapKind,
) -> AttentionHeatmap<T> {
    let (lo, hi) = params.window();
    let density = box_sum_u32(impulses, lo, hi);
    let max = density.as_slice().iter().copied().max().unwrap_or(0);
    if max == 0 {
        return AttentionHeatmap::zero(geom);
    }
    let scale = T::from_u32(max).expect("u32 representable");
    AttentionHeatmap {
        values: density.map(|c| T::from_u32(c).expect("u32 representable") / scale),
        kind,
        geometry: *geom,
    }
}

/// Pseudo attention heatmap around the centroid of `label`.
///
/// A heatmap center is drawn from `N(label centroid, centroid_cov)`, then
/// `n_points` points from `N(center, sample_cov)`; each point sets its pixel
/// to one (off-image points are clamped to the border). With probability
/// `zero_fraction` the zero heatmap is returned instead.
pub fn generate_pseudo_heatmap<T: Scalar>(
    label: &Mask,
    params: &HeatmapParams,
    geom: &ImageGeometry,
    seed: u64,
) -> Result<AttentionHeatmap<T>> {
    params.validate()?;
    if label.shape() != (geom.width_px, geom.depth_px) {
        return Err(Error::ShapeMismatch {
            left: label.shape(),
            right: (geom.width_px, geom.depth_px),
        });
    }
    let (cx, cy) = label
        .centroid()
        .ok_or_else(|| Error::Domain("pseudo heatmap needs a non-empty label".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if params.zero_fraction > 0.0 && rng.random::<f64>() < params.zero_fraction {
        return Ok(AttentionHeatmap::zero(geom));
    }
    Ok(heatmap_around(
        (cx, cy),
        params.centroid_cov,
        params,
        geom,
        &mut rng,
        HeatmapKind::Pseudo,
    ))
}

/// Samples a heatmap around `center` without the zero-map draw. Used for the
/// stabilized output, which is centered on the chosen vessel.
pub(crate) fn heatmap_around<T: Scalar>(
    center: (f64, f64),
    centroid_cov: [f64; 2],
    params: &HeatmapParams,
    geom: &ImageGeometry,
    rng: &mut ChaCha8Rng,
    kind: HeatmapKind,
) -> AttentionHeatmap<T> {
    let normal = |mean: f64, var: f64| Normal::new(mean, var.sqrt()).expect("finite std");
    let mx = normal(center.0, centroid_cov[0]).sample(rng);
    let my = normal(center.1, centroid_cov[1]).sample(rng);
    let (px, py) = (normal(mx, params.sample_cov[0]), normal(my, params.sample_cov[1]));
    let mut impulses = Grid::filled(geom.width_px, geom.depth_px, 0u32);
    for _ in 0..params.n_points {
        let x = px.sample(rng).round().clamp(0.0, geom.width_px as f64 - 1.0) as usize;
        let y = py.sample(rng).round().clamp(0.0, geom.depth_px as f64 - 1.0) as usize;
        impulses.set(x, y, 1);
    }
    diffuse(&impulses, params, geom, kind)
}

/// Raw gaze heatmap: valid in-image samples add one hit each.
pub fn gaze_to_heatmap<T: Scalar>(
    window: &[GazeSample],
    params: &HeatmapParams,
    geom: &ImageGeometry,
) -> AttentionHeatmap<T> {
    let mut impulses = Grid::filled(geom.width_px, geom.depth_px, 0u32);
    for s in window {
        if let Some((x, y)) = s.pixel(geom) {
            impulses.set(x, y, impulses.get(x, y) + 1);
        }
    }
    diffuse(&impulses, params, geom, HeatmapKind::RawGaze)
}
