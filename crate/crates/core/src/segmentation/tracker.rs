use serde::{Deserialize, Serialize};

use super::detect::Candidate;

/// Keeps candidate ids stable across ticks by centroid continuity.
///
/// Each tick, track/candidate pairs closer than `gate_px` are matched greedily
/// in order of increasing distance. Unmatched candidates open new tracks;
/// tracks unseen for more than `max_missed` ticks are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTracker {
    pub gate_px: f64,
    pub max_missed: u64,
    next_id: u32,
    tracks: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Track {
    id: u32,
    centroid: (f64, f64),
    last_seen: u64,
}

impl Default for CandidateTracker {
    fn default() -> Self {
        Self::new(40.0, 15)
    }
}

impl CandidateTracker {
    pub fn new(gate_px: f64, max_missed: u64) -> Self {
        Self {
            gate_px,
            max_missed,
            next_id: 0,
            tracks: vec![],
        }
    }

    pub fn reset(&mut self) {
        self.next_id = 0;
        self.tracks.clear();
    }

    pub fn assign(&mut self, tick: u64, candidates: &mut [Candidate]) {
        let mut pairs = vec![];
        for (ti, t) in self.tracks.iter().enumerate() {
            for (ci, c) in candidates.iter().enumerate() {
                let d = (t.centroid.0 - c.centroid.0).hypot(t.centroid.1 - c.centroid.1);
                if d < self.gate_px {
                    pairs.push((d, ti, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; self.tracks.len()];
        for c in candidates.iter_mut() {
            c.track = None;
        }
        for (_, ti, ci) in pairs {
            if track_used[ti] || candidates[ci].track.is_some() {
                continue;
            }
            track_used[ti] = true;
            candidates[ci].track = Some(self.tracks[ti].id);
            self.tracks[ti].centroid = candidates[ci].centroid;
            self.tracks[ti].last_seen = tick;
        }
        for c in candidates.iter_mut().filter(|c| c.track.is_none()) {
            let id = self.next_id;
            self.next_id += 1;
            c.track = Some(id);
            self.tracks.push(Track {
                id,
                centroid: c.centroid,
                last_seen: tick,
            });
        }
        let max_missed = self.max_missed;
        self.tracks.retain(|t| tick.saturating_sub(t.last_seen) <= max_missed);
    }
}
