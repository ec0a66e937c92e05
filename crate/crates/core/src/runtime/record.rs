use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, SCHEMA_VERSION};
use crate::attention::{GazeSample, HeatmapKind};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::phantom::BranchId;

/// Run-length encoded mask: alternating runs of unset and set pixels in
/// row-major order, starting with unset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub depth: usize,
    pub runs: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &Mask) -> Self {
        let mut runs = vec![];
        let mut current = false;
        let mut len = 0u32;
        for &v in mask.as_slice() {
            if v != current {
                runs.push(len);
                current = v;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        Self {
            width: mask.width(),
            depth: mask.depth(),
            runs,
        }
    }

    pub fn decode(&self) -> Result<Mask> {
        let mut data = Vec::with_capacity(self.width * self.depth);
        for (i, &n) in self.runs.iter().enumerate() {
            data.extend(std::iter::repeat_n(i % 2 == 1, n as usize));
        }
        Mask::from_vec(self.width, self.depth, data)
            .map_err(|_| Error::Corrupt("mask runs do not cover the image".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub scenario_hash: String,
    pub tick_rate_hz: f64,
    pub seed: u64,
    pub correction: bool,
}

impl RecordHeader {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.clone(),
            scenario_hash: scenario.hash(),
            tick_rate_hz: scenario.tick_rate_hz,
            seed: scenario.seed,
            correction: scenario.control.correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub track: Option<u32>,
    pub centroid: (f64, f64),
    pub area: usize,
    /// Ground-truth branch with the largest overlap.
    pub branch: Option<BranchId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub candidates: Vec<CandidateSummary>,
    pub selected: Option<usize>,
    pub attention_used: HeatmapKind,
    pub selected_mask: Option<RleMask>,
}

/// Per-tick controller and evaluation values. The pose is the one the frame
/// was imaged from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub force: f64,
    pub x_c: Option<f64>,
    pub d_c: Option<f64>,
    pub theta_c: Option<f64>,
    /// Track id of the selected candidate.
    pub target: Option<u32>,
    /// Track id the intention stage is holding.
    pub intent: Option<u32>,
    pub evidence: Vec<(u32, f64)>,
    /// Ground-truth branch of the selected candidate.
    pub branch: Option<BranchId>,
    pub dice: Option<f64>,
    /// Branch a synthetic operator was told to look at, when known.
    pub gaze_branch: Option<BranchId>,
    pub correction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub frame_digest: String,
    pub gaze_digest: String,
    pub attention_digest: String,
    pub gaze: Vec<GazeSample>,
    pub segmentation: SegmentationSummary,
    pub telemetry: Telemetry,
    /// Wall-clock pipeline time; not part of the deterministic payload.
    pub tick_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RecordHeader),
    Tick(Box<TickRecord>),
    Footer { ticks: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RecordHeader,
    pub ticks: Vec<TickRecord>,
}

impl RunRecord {
    pub fn new(header: RecordHeader) -> Self {
        Self {
            header,
            ticks: vec![],
        }
    }

    pub fn telemetry(&self) -> impl Iterator<Item = &Telemetry> {
        self.ticks.iter().map(|t| &t.telemetry)
    }

    /// Everything except wall-clock fields.
    pub fn same_payload(&self, other: &RunRecord) -> bool {
        self.header == other.header
            && self.ticks.len() == other.ticks.len()
            && self.ticks.iter().zip(&other.ticks).all(|(a, b)| {
                TickRecord {
                    tick_micros: 0,
                    ..a.clone()
                } == TickRecord {
                    tick_micros: 0,
                    ..b.clone()
                }
            })
    }

    /// JSON lines: header, one line per tick, footer with the tick count.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        write_line(&mut out, &Line::Header(self.header.clone()))?;
        for t in &self.ticks {
            write_line(&mut out, &Line::Tick(Box::new(t.clone())))?;
        }
        write_line(
            &mut out,
            &Line::Footer {
                ticks: self.ticks.len() as u64,
            },
        )?;
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Corrupt("empty record".into()))??;
        let raw: serde_json::Value = serde_json::from_str(&first)
            .map_err(|e| Error::Corrupt(format!("header: {e}")))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Corrupt("header lacks schema_version".into()))?;
        if version != SCHEMA_VERSION as u64 {
            return Err(Error::Version {
                found: version as u32,
                expected: SCHEMA_VERSION,
            });
        }
        let header = match serde_json::from_value(raw) {
            Ok(Line::Header(h)) => h,
            Ok(_) => return Err(Error::Corrupt("first line is not a header".into())),
            Err(e) => return Err(Error::Corrupt(format!("header: {e}"))),
        };
        let mut record = RunRecord::new(header);
        for (n, line) in lines.enumerate() {
            let line = line?;
            match serde_json::from_str::<Line>(&line) {
                Ok(Line::Tick(t)) => record.ticks.push(*t),
                Ok(Line::Footer { ticks }) => {
                    if ticks != record.ticks.len() as u64 {
                        return Err(Error::Corrupt(format!(
                            "footer announces {ticks} ticks, found {}",
                            record.ticks.len()
                        )));
                    }
                    return Ok(record);
                }
                Ok(Line::Header(_)) => {
                    return Err(Error::Corrupt(format!("second header at line {}", n + 2)))
                }
                Err(e) => return Err(Error::Corrupt(format!("line {}: {e}", n + 2))),
            }
        }
        Err(Error::Corrupt("record is truncated (no footer)".into()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

fn write_line<W: Write>(out: &mut W, line: &Line) -> Result<()> {
    serde_json::to_writer(&mut *out, line).map_err(|e| Error::Parse(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}
