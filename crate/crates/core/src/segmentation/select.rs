use serde::{Deserialize, Serialize};

use super::detect::{detect_candidates_with_confidence, Candidate, SegmentationParams};
use crate::attention::{AttentionHeatmap, HeatmapKind};
use crate::error::{Error, Result};
use crate::imaging::{confidence_map, BModeFrame};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub candidates: Vec<Candidate>,
    pub selected: Option<usize>,
    /// Kind of attention that actually drove the result; `Zero` whenever the
    /// all-candidates fallback was used.
    pub attention_used: HeatmapKind,
}

impl SegmentationResult {
    pub fn selected_candidate(&self) -> Option<&Candidate> {
        self.selected.map(|i| &self.candidates[i])
    }
}

/// Per-candidate attention score: attention mass over the dilated mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub index: usize,
    pub score: f64,
}

/// Detects candidates and gates them with `attention`.
pub fn segment<T: Scalar>(
    frame: &BModeFrame<T>,
    attention: &AttentionHeatmap<T>,
    params: &SegmentationParams,
) -> Result<SegmentationResult> {
    check_geometry(frame, attention)?;
    let cmap = confidence_map(frame);
    let candidates = detect_candidates_with_confidence(frame, &cmap, params);
    select_target(candidates, attention, params)
}

fn check_geometry<T: Scalar>(frame: &BModeFrame<T>, attention: &AttentionHeatmap<T>) -> Result<()> {
    if frame.intensity.shape() != attention.values.shape()
        || frame.geometry.pixel_pitch != attention.geometry.pixel_pitch
    {
        return Err(Error::Domain(format!(
            "frame {:?} and attention {:?} do not share geometry",
            frame.intensity.shape(),
            attention.values.shape()
        )));
    }
    Ok(())
}

pub fn score_candidates<T: Scalar>(
    candidates: &[Candidate],
    attention: &AttentionHeatmap<T>,
    params: &SegmentationParams,
) -> Vec<CandidateScore> {
    candidates
        .iter()
        .enumerate()
        .map(|(index, c)| CandidateScore {
            index,
            score: attention
                .mass_in(&c.mask.dilate(params.attention_dilation))
                .to_f64_lossy(),
        })
        .collect()
}

/// Chooses the candidate with the largest dilated attention mass. Ties go to
/// the centroid nearest the attention peak. A zero heatmap, or a best score
/// under the floor, returns every candidate with none selected.
pub fn select_target<T: Scalar>(
    candidates: Vec<Candidate>,
    attention: &AttentionHeatmap<T>,
    params: &SegmentationParams,
) -> Result<SegmentationResult> {
    if let Some(c) = candidates.first() {
        attention.values.ensure_same_shape(&c.mask)?;
    }
    let fallback = |candidates| SegmentationResult {
        candidates,
        selected: None,
        attention_used: HeatmapKind::Zero,
    };
    if attention.is_zero() || candidates.is_empty() {
        return Ok(fallback(candidates));
    }
    let (px, py) = attention.argmax();
    let peak_dist = |c: &Candidate| (c.centroid.0 - px as f64).hypot(c.centroid.1 - py as f64);
    let scores = score_candidates(&candidates, attention, params);
    let best = scores
        .iter()
        .max_by(|a, b| {
            a.score.total_cmp(&b.score).then_with(|| {
                peak_dist(&candidates[b.index]).total_cmp(&peak_dist(&candidates[a.index]))
            })
        })
        .copied()
        .expect("non-empty candidates");
    if best.score < params.score_floor {
        return Ok(fallback(candidates));
    }
    Ok(SegmentationResult {
        candidates,
        selected: Some(best.index),
        attention_used: attention.kind,
    })
}
