use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::imaging::{confidence_map, BModeFrame, ConfidenceMap, ImageGeometry};
use crate::scalar::Scalar;

/// One detected lumen candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: Mask,
    /// Pixel centroid `(x, y)`.
    pub centroid: (f64, f64),
    pub area: usize,
    /// Track id assigned by [`super::CandidateTracker`], if any.
    pub track: Option<u32>,
}

impl Candidate {
    pub fn from_mask(mask: Mask) -> Option<Self> {
        let centroid = mask.centroid()?;
        let area = mask.count();
        Some(Self {
            mask,
            centroid,
            area,
            track: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    /// Pixels below this confidence never become candidates.
    pub confidence_gate: f64,
    /// Half-width of the speckle-averaging box filter, px.
    pub blur_radius: usize,
    /// Percentile (0..1) of gated blurred intensities used as the row tissue level.
    pub reference_percentile: f64,
    /// A pixel is dark when below `threshold_ratio` times the row tissue level.
    pub threshold_ratio: f64,
    /// Radius of the square structuring element for opening and closing, px.
    pub morph_radius: usize,
    /// Candidate area bounds expressed as equivalent lumen radii, mm.
    pub min_radius_mm: f64,
    pub max_radius_mm: f64,
    pub max_eccentricity: f64,
    /// Dilation of candidate masks before attention pooling, px.
    pub attention_dilation: usize,
    /// Selection scores below this floor fall back to all-candidates mode.
    pub score_floor: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            confidence_gate: 0.2,
            blur_radius: 2,
            reference_percentile: 0.75,
            threshold_ratio: 0.5,
            morph_radius: 2,
            min_radius_mm: 1.0,
            max_radius_mm: 5.0,
            max_eccentricity: 0.9,
            attention_dilation: 8,
            score_floor: 1.0,
        }
    }
}

impl SegmentationParams {
    /// Area bounds in px² for the given pixel pitch.
    pub fn area_bounds(&self, geom: &ImageGeometry) -> (usize, usize) {
        let px = |r_mm: f64| std::f64::consts::PI * (r_mm / geom.pixel_pitch).powi(2);
        (px(self.min_radius_mm).floor() as usize, px(self.max_radius_mm).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.confidence_gate)
            && (0.0..=1.0).contains(&self.reference_percentile)
            && self.threshold_ratio > 0.0
            && self.min_radius_mm > 0.0
            && self.max_radius_mm > self.min_radius_mm
            && (0.0..=1.0).contains(&self.max_eccentricity)
            && self.score_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid segmentation parameters {self:?}")))
        }
    }
}

pub fn detect_candidates<T: Scalar>(
    frame: &BModeFrame<T>,
    params: &SegmentationParams,
) -> Vec<Candidate> {
    let cmap = confidence_map(frame);
    detect_candidates_with_confidence(frame, &cmap, params)
}

/// Classical lumen detector: confidence gate, speckle-averaging box filter,
/// per-row adaptive dark threshold, opening and closing, 4-connected
/// components, then area and eccentricity filtering.
pub fn detect_candidates_with_confidence<T: Scalar>(
    frame: &BModeFrame<T>,
    cmap: &ConfidenceMap<T>,
    params: &SegmentationParams,
) -> Vec<Candidate> {
    let img = &frame.intensity;
    let (w, d) = img.shape();
    let gate_level = T::lit(params.confidence_gate);
    let gate = Mask::from_fn(w, d, |x, y| cmap.values.get(x, y) >= gate_level);
    let blurred = gated_box_mean(img, &gate, params.blur_radius);

    let mut dark = Mask::empty(w, d);
    let mut row_vals: Vec<f64> = Vec::with_capacity(w);
    for y in 0..d {
        row_vals.clear();
        row_vals.extend((0..w).filter(|&x| gate.get(x, y)).map(|x| blurred[y * w + x]));
        if row_vals.len() < 16 {
            continue;
        }
        let k = ((row_vals.len() - 1) as f64 * params.reference_percentile).round() as usize;
        let (_, &mut level, _) = row_vals.select_nth_unstable_by(k, f64::total_cmp);
        let threshold = params.threshold_ratio * level;
        for x in 0..w {
            if gate.get(x, y) && blurred[y * w + x] < threshold {
                dark.set(x, y, true);
            }
        }
    }
    let cleaned = dark
        .open(params.morph_radius)
        .close(params.morph_radius);
    let (a_min, a_max) = params.area_bounds(&frame.geometry);
    label_components(&cleaned)
        .into_iter()
        .filter(|m| {
            let area = m.count();
            area >= a_min && area <= a_max && eccentricity(m) <= params.max_eccentricity
        })
        .filter_map(Candidate::from_mask)
        .collect()
}

/// Mean over the `(2r+1)²` box restricted to gated pixels, as f64.
fn gated_box_mean<T: Scalar>(img: &Grid<T>, gate: &Mask, r: usize) -> Vec<f64> {
    let (w, d) = img.shape();
    let stride = w + 1;
    let mut sum = vec![0.0f64; stride * (d + 1)];
    let mut cnt = vec![0u32; stride * (d + 1)];
    for y in 0..d {
        let (mut rs, mut rc) = (0.0, 0u32);
        for x in 0..w {
            if gate.get(x, y) {
                rs += img.get(x, y).to_f64_lossy();
                rc += 1;
            }
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
            cnt[(y + 1) * stride + x + 1] = cnt[y * stride + x + 1] + rc;
        }
    }
    let mut out = vec![0.0; w * d];
    for y in 0..d {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(d);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let s = sum[y1 * stride + x1] - sum[y0 * stride + x1] - sum[y1 * stride + x0] + sum[y0 * stride + x0];
            let c = cnt[y1 * stride + x1] + cnt[y0 * stride + x0] - cnt[y0 * stride + x1] - cnt[y1 * stride + x0];
            out[y * w + x] = if c > 0 { s / c as f64 } else { 0.0 };
        }
    }
    out
}

/// 4-connected components in row-major discovery order.
pub fn label_components(mask: &Mask) -> Vec<Mask> {
    let (w, d) = mask.shape();
    let mut seen = vec![false; w * d];
    let mut out = vec![];
    let mut stack = vec![];
    for start in 0..w * d {
        if seen[start] || !mask.as_slice()[start] {
            continue;
        }
        let mut comp = Mask::empty(w, d);
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.as_mut_slice()[i] = true;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && mask.as_slice()[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < d {
                visit(i + w);
            }
        }
        out.push(comp);
    }
    out
}

/// Eccentricity of the moment-equivalent ellipse, in `[0, 1]`.
pub fn eccentricity(mask: &Mask) -> f64 {
    let Some((cx, cy)) = mask.centroid() else {
        return 0.0;
    };
    let (mut sxx, mut syy, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..mask.depth() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
                n += 1.0;
            }
        }
    }
    // Pixel extent adds 1/12 variance per axis.
    let (a, b, c) = (sxx / n + 1.0 / 12.0, syy / n + 1.0 / 12.0, sxy / n);
    let mean = (a + b) / 2.0;
    let diff = (((a - b) / 2.0).powi(2) + c * c).sqrt();
    let (l1, l2) = (mean + diff, mean - diff);
    if l1 <= 0.0 {
        return 0.0;
    }
    (1.0 - l2 / l1).max(0.0).sqrt()
}
