use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use crate::phantom::BranchId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Population statistics; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub ticks: usize,
    /// `|d_c|` over ticks with a valid confidence centroid, mm.
    pub abs_d_c: Option<MeanStd>,
    pub dice_by_branch: BTreeMap<BranchId, MeanStd>,
    /// Ticks from a change of the operator's intended branch until the
    /// segmented branch follows.
    pub switch_latencies: Vec<u64>,
    pub tick_duration: Option<DurationStats>,
}

pub fn metrics(record: &RunRecord) -> MetricsSummary {
    let tel: Vec<_> = record.telemetry().collect();
    let d_c: Vec<f64> = tel.iter().filter_map(|t| t.d_c.map(f64::abs)).collect();

    let mut dice: BTreeMap<BranchId, Vec<f64>> = BTreeMap::new();
    for t in &tel {
        if let (Some(b), Some(d)) = (t.branch, t.dice) {
            dice.entry(b).or_default().push(d);
        }
    }

    let mut switch_latencies = vec![];
    for i in 1..tel.len() {
        let (prev, cur) = (tel[i - 1].gaze_branch, tel[i].gaze_branch);
        if let (Some(p), Some(goal)) = (prev, cur) {
            if p != goal {
                if let Some(k) = tel[i..].iter().position(|t| t.branch == Some(goal)) {
                    switch_latencies.push(k as u64);
                }
            }
        }
    }

    let micros: Vec<f64> = record
        .ticks
        .iter()
        .map(|t| t.tick_micros as f64 / 1000.0)
        .collect();
    let tick_duration = MeanStd::of(&micros).map(|ms| {
        let mut sorted = micros.clone();
        sorted.sort_by(f64::total_cmp);
        let idx = ((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1;
        DurationStats {
            mean_ms: ms.mean,
            std_ms: ms.std,
            p95_ms: sorted[idx],
            max_ms: *sorted.last().expect("non-empty"),
        }
    });

    MetricsSummary {
        ticks: tel.len(),
        abs_d_c: MeanStd::of(&d_c),
        dice_by_branch: dice
            .into_iter()
            .filter_map(|(b, v)| MeanStd::of(&v).map(|m| (b, m)))
            .collect(),
        switch_latencies,
        tick_duration,
    }
}
