//! Gaze stabilization: fuses a window of raw gaze heatmaps with the tracked
//! segmentation candidates to decide which vessel the operator means.
//!
//! Evidence for candidate `i` over the window is
//!
//! ```text
//! e_i = gaze_weight * (gaze mass inside i's dilated masks / window gaze mass)
//!     + target_weight * (fraction of window ticks where i was the emitted target)
//! ```
//!
//! A challenger replaces the current target only after its evidence has
//! exceeded the target's for `switch_dwell` consecutive ticks; the switch takes
//! effect on that tick. Short glances never accumulate that much.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{heatmap_around, AttentionHeatmap, HeatmapKind, HeatmapParams};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::imaging::ImageGeometry;
use crate::scalar::Scalar;
use crate::segmentation::Candidate;

pub type TrackId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentionParams {
    /// History length T in ticks.
    pub window: usize,
    /// Consecutive ticks of superior evidence needed to switch (D).
    pub switch_dwell: usize,
    pub gaze_weight: f64,
    pub target_weight: f64,
    /// Candidate mask dilation before gaze pooling, px.
    pub dilation: usize,
    /// Generator for the emitted heatmap; its centroid covariance is ignored
    /// (the output is always centered on the chosen candidate).
    pub emit: HeatmapParams,
}

impl Default for IntentionParams {
    fn default() -> Self {
        Self {
            window: 64,
            switch_dwell: 32,
            gaze_weight: 0.7,
            target_weight: 0.3,
            dilation: 8,
            emit: HeatmapParams {
                centroid_cov: [0.0; 2],
                zero_fraction: 0.0,
                ..HeatmapParams::default()
            },
        }
    }
}

impl IntentionParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.switch_dwell == 0 || self.switch_dwell > self.window {
            return Err(Error::Domain(
                "intention needs 0 < switch_dwell <= window".into(),
            ));
        }
        let weights_ok = self.gaze_weight >= 0.0
            && self.target_weight >= 0.0
            && self.gaze_weight + self.target_weight <= 1.0 + 1e-12;
        if !weights_ok {
            return Err(Error::Domain(
                "evidence weights must be >= 0 and sum to at most 1".into(),
            ));
        }
        self.emit.validate()
    }
}

/// A candidate as remembered by the history: dilated mask plus centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedMask {
    pub id: TrackId,
    pub centroid: (f64, f64),
    pub dilated: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry<T> {
    pub tick: u64,
    pub gaze: Arc<AttentionHeatmap<T>>,
    pub candidates: Vec<TrackedMask>,
    gaze_total: f64,
    gaze_mass: Vec<(TrackId, f64)>,
}

impl<T> HistoryEntry<T> {
    fn mass_of(&self, id: TrackId) -> f64 {
        self.gaze_mass
            .iter()
            .find(|(i, _)| *i == id)
            .map_or(0.0, |(_, m)| *m)
    }
}

/// Ring buffer of the last `capacity` (gaze heatmap, candidates) pairs.
#[derive(Debug, Clone)]
pub struct HistoryBuffer<T> {
    capacity: usize,
    dilation: usize,
    entries: VecDeque<HistoryEntry<T>>,
}

impl<T: Scalar> HistoryBuffer<T> {
    pub fn new(capacity: usize, dilation: usize) -> Self {
        Self {
            capacity,
            dilation,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn for_params(params: &IntentionParams) -> Self {
        Self::new(params.window, params.dilation)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn entries(&self) -> impl Iterator<Item = &HistoryEntry<T>> {
        self.entries.iter()
    }

    pub fn latest(&self) -> Option<&HistoryEntry<T>> {
        self.entries.back()
    }

    /// Appends one tick. Candidates without a track id are ignored; ticks must
    /// not go backwards.
    pub fn push(
        &mut self,
        tick: u64,
        gaze: Arc<AttentionHeatmap<T>>,
        candidates: &[Candidate],
    ) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if tick < last.tick {
                return Err(Error::Domain(format!(
                    "history tick {tick} precedes {}",
                    last.tick
                )));
            }
        }
        let candidates: Vec<TrackedMask> = candidates
            .iter()
            .filter_map(|c| {
                c.track.map(|id| TrackedMask {
                    id,
                    centroid: c.centroid,
                    dilated: c.mask.dilate(self.dilation),
                })
            })
            .collect();
        let gaze_total = gaze.mass().to_f64_lossy();
        let gaze_mass = candidates
            .iter()
            .map(|c| (c.id, gaze.mass_in(&c.dilated).to_f64_lossy()))
            .collect();
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(HistoryEntry {
            tick,
            gaze,
            candidates,
            gaze_total,
            gaze_mass,
        });
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntentState {
    pub current_target: Option<TrackId>,
    /// Evidence per candidate of the latest tick, sorted by id. Sums to at most 1.
    pub evidence: Vec<(TrackId, f64)>,
    /// Consecutive ticks the challenger has out-scored the target.
    pub dwell: usize,
    pub challenger: Option<TrackId>,
    /// Targets emitted on previous ticks, oldest first, at most `window` long.
    pub emitted: VecDeque<Option<TrackId>>,
}

impl IntentState {
    pub fn evidence_of(&self, id: TrackId) -> f64 {
        self.evidence
            .iter()
            .find(|(i, _)| *i == id)
            .map_or(0.0, |(_, e)| *e)
    }
}

pub fn reset(_state: &IntentState) -> IntentState {
    IntentState::default()
}

/// One stabilizer step. `history` must already contain the current tick.
///
/// Returns the next state and the stabilized heatmap, which is a diffused
/// heatmap centered on the target's centroid, or the zero heatmap when the
/// window holds no gaze at all or the target is not visible this tick.
pub fn update<T: Scalar>(
    history: &HistoryBuffer<T>,
    state: &IntentState,
    params: &IntentionParams,
    seed: u64,
) -> Result<(IntentState, AttentionHeatmap<T>)> {
    let latest = history
        .latest()
        .ok_or_else(|| Error::Domain("intention update needs a non-empty history".into()))?;
    let geom: ImageGeometry = latest.gaze.geometry;
    let window_len = history.len() as f64;

    let mut ids: Vec<TrackId> = latest.candidates.iter().map(|c| c.id).collect();
    if let Some(t) = state.current_target {
        if !ids.contains(&t) {
            ids.push(t);
        }
    }
    ids.sort_unstable();

    let denom: f64 = history
        .entries()
        .map(|e| e.gaze_total.max(e.gaze_mass.iter().map(|(_, m)| m).sum()))
        .sum();
    let skip = state.emitted.len().saturating_sub(history.len());
    let evidence: Vec<(TrackId, f64)> = ids
        .iter()
        .map(|&id| {
            let gaze = if denom > 0.0 {
                history.entries().map(|e| e.mass_of(id)).sum::<f64>() / denom
            } else {
                0.0
            };
            let held = state
                .emitted
                .iter()
                .skip(skip)
                .filter(|t| **t == Some(id))
                .count() as f64
                / window_len;
            (id, params.gaze_weight * gaze + params.target_weight * held)
        })
        .collect();

    let mut next = IntentState {
        current_target: state.current_target,
        evidence,
        dwell: 0,
        challenger: None,
        emitted: state.emitted.clone(),
    };

    let no_gaze = denom <= 0.0;
    if !no_gaze {
        match state.current_target {
            None => {
                next.current_target = best_of(&next.evidence, None).filter(|(_, e)| *e > 0.0).map(|(id, _)| id);
            }
            Some(cur) => {
                let e_cur = next.evidence_of(cur);
                if let Some((j, e_j)) = best_of(&next.evidence, Some(cur)) {
                    if e_j > e_cur {
                        next.dwell = if state.challenger == Some(j) { state.dwell + 1 } else { 1 };
                        next.challenger = Some(j);
                        if next.dwell >= params.switch_dwell {
                            next.current_target = Some(j);
                            next.dwell = 0;
                            next.challenger = None;
                        }
                    }
                }
            }
        }
    }

    let shown = next
        .current_target
        .filter(|_| !no_gaze)
        .and_then(|t| latest.candidates.iter().find(|c| c.id == t));
    let heatmap = match shown {
        Some(c) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            heatmap_around(
                c.centroid,
                [0.0, 0.0],
                &params.emit,
                &geom,
                &mut rng,
                HeatmapKind::Stabilized,
            )
        }
        None => AttentionHeatmap::zero(&geom),
    };
    next.emitted.push_back(shown.map(|c| c.id));
    while next.emitted.len() > params.window {
        next.emitted.pop_front();
    }
    Ok((next, heatmap))
}

/// Highest evidence, lowest id on ties, optionally excluding one id.
fn best_of(evidence: &[(TrackId, f64)], exclude: Option<TrackId>) -> Option<(TrackId, f64)> {
    evidence
        .iter()
        .filter(|(id, _)| Some(*id) != exclude)
        .fold(None, |best: Option<(TrackId, f64)>, &(id, e)| match best {
            Some((_, be)) if be >= e => best,
            _ => Some((id, e)),
        })
}
