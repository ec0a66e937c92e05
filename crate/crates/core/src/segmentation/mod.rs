//! Attention-gated vessel segmentation.
//!
//! Candidates come from a classical hypoechoic-blob detector; the attention
//! heatmap then picks the vessel of interest, or every candidate is returned
//! when no attention is available.

mod detect;
mod dice;
mod select;
mod tracker;

pub use detect::{
    detect_candidates, detect_candidates_with_confidence, eccentricity, label_components,
    Candidate, SegmentationParams,
};
pub use dice::dice;
pub use select::{score_candidates, segment, select_target, CandidateScore, SegmentationResult};
pub use tracker::CandidateTracker;
