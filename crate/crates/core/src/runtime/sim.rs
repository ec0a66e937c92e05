use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::record::{
    CandidateSummary, RecordHeader, RleMask, RunRecord, SegmentationSummary, Telemetry, TickRecord,
};
use super::scenario::{read_gaze_csv, GazeSource, Scenario};
use crate::attention::{gaze_to_heatmap, GazeSample};
use crate::control::{self, seat_probe, Contact, ProbeState};
use crate::error::{Error, Result};
use crate::imaging::{confidence_map, export::digest, render_bmode};
use crate::intention::{self, HistoryBuffer, IntentState};
use crate::phantom::{cross_section, rasterize_labels, BranchId, CrossSection, LabelMask, PhantomModel};
use crate::segmentation::{
    detect_candidates_with_confidence, dice, select_target, CandidateTracker, SegmentationResult,
};
use crate::{Confidence, Frame, Heatmap};

const STREAM_RENDER: u64 = 1;
const STREAM_GAZE: u64 = 2;
const STREAM_INTENT: u64 = 3;

/// Independent per-tick seed for one random stream.
pub fn tick_seed(seed: u64, tick: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ tick.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything produced by one tick, including the full-resolution images
/// that the record only keeps as digests.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub record: TickRecord,
    pub frame: Frame,
    pub confidence: Confidence,
    pub gaze_heatmap: Arc<Heatmap>,
    pub attention: Heatmap,
    pub segmentation: SegmentationResult,
    pub labels: Vec<LabelMask>,
    pub section: CrossSection,
}

/// The simulation state machine. One instance owns all mutable state of a run.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    phantom: PhantomModel,
    scripted: Vec<GazeSample>,
    initial: ProbeState,
    probe: ProbeState,
    contact: Contact,
    tick: u64,
    tracker: CandidateTracker,
    history: HistoryBuffer<f64>,
    intent: IntentState,
    gaze_window: VecDeque<(u64, Vec<GazeSample>)>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let phantom = scenario.build_phantom()?;
        let scripted = match &scenario.gaze.source {
            GazeSource::Scripted { path } => read_gaze_csv(path)?,
            _ => vec![],
        };
        let p = &scenario.probe;
        let start = ProbeState::at(p.x_mm, p.y_mm, p.z_mm.unwrap_or(0.0), p.theta_rad);
        let initial = match p.z_mm {
            Some(_) => start,
            None => {
                let above = phantom.surface.height(p.x_mm, p.y_mm)? + 10.0;
                seat_probe(
                    &ProbeState { z: above, ..start },
                    &phantom.surface,
                    &scenario.imaging,
                    &scenario.control,
                )?
            }
        };
        let contact = control::contact(
            &initial,
            &phantom.surface,
            &scenario.imaging,
            scenario.control.gap_max_mm,
        );
        let initial = ProbeState {
            force: contact.force(&scenario.control),
            ..initial
        };
        Ok(Self {
            tracker: CandidateTracker::new(scenario.tracker.gate_px, scenario.tracker.max_missed),
            history: HistoryBuffer::for_params(&scenario.intention),
            intent: IntentState::default(),
            gaze_window: VecDeque::new(),
            scripted,
            initial,
            probe: initial,
            contact,
            tick: 0,
            phantom,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn phantom(&self) -> &PhantomModel {
        &self.phantom
    }

    pub fn probe(&self) -> &ProbeState {
        &self.probe
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn intent(&self) -> &IntentState {
        &self.intent
    }

    pub fn correction(&self) -> bool {
        self.scenario.control.correction
    }

    pub fn set_correction(&mut self, on: bool) {
        self.scenario.control.correction = on;
    }

    /// Replaces the control parameters between ticks.
    pub fn set_control(&mut self, params: control::ControlParams) -> Result<()> {
        params.validate()?;
        self.scenario.control = params;
        Ok(())
    }

    /// Back to tick 0 with the initial pose and empty histories.
    pub fn reset(&mut self) {
        self.probe = self.initial;
        self.contact = control::contact(
            &self.initial,
            &self.phantom.surface,
            &self.scenario.imaging,
            self.scenario.control.gap_max_mm,
        );
        self.tick = 0;
        self.tracker.reset();
        self.history.clear();
        self.intent = intention::reset(&self.intent);
        self.gaze_window.clear();
    }

    pub fn header(&self) -> RecordHeader {
        RecordHeader::for_scenario(&self.scenario)
    }

    /// Branch the follow plan points at for the current pose.
    fn planned_branch(&self) -> Option<BranchId> {
        match &self.scenario.gaze.source {
            GazeSource::Follow { plan, .. } => plan
                .iter()
                .rev()
                .find(|leg| self.probe.y >= leg.from_y_mm)
                .map(|leg| leg.branch),
            _ => None,
        }
    }

    fn synthesize_gaze(&self, section: &CrossSection) -> Vec<GazeSample> {
        let tick = self.tick;
        match &self.scenario.gaze.source {
            GazeSource::Scripted { .. } => {
                let lo = self.scripted.partition_point(|s| s.t < tick);
                let hi = self.scripted.partition_point(|s| s.t <= tick);
                self.scripted[lo..hi].to_vec()
            }
            GazeSource::Follow { jitter_px, .. } => {
                let geom = &self.scenario.imaging;
                let Some(branch) = self.planned_branch() else {
                    return vec![];
                };
                let lineage = self.phantom.vessels.lineage(branch);
                let lumen = lineage.iter().find_map(|b| section.lumen(*b));
                let mut rng = ChaCha8Rng::seed_from_u64(tick_seed(self.scenario.seed, tick, STREAM_GAZE));
                let sample = match lumen {
                    Some(l) => {
                        let (mut x, mut y) = (
                            geom.lateral_to_column(l.center.0),
                            geom.depth_to_row(l.center.1),
                        );
                        if *jitter_px > 0.0 {
                            let n = Normal::new(0.0, *jitter_px).expect("finite jitter");
                            x += n.sample(&mut rng);
                            y += n.sample(&mut rng);
                        }
                        GazeSample { t: tick, x, y, valid: true }
                    }
                    None => GazeSample {
                        t: tick,
                        x: -1.0,
                        y: -1.0,
                        valid: false,
                    },
                };
                vec![sample]
            }
            GazeSource::None | GazeSource::Live => vec![],
        }
    }

    /// Runs one tick. `supplied` overrides the scenario's gaze source (live
    /// clients and replays); `None` uses the scenario's own source.
    pub fn step(&mut self, supplied: Option<&[GazeSample]>) -> Result<TickOutput> {
        let started = Instant::now();
        let sc = &self.scenario;
        let geom = sc.imaging;
        let tick = self.tick;
        let probe = self.probe;

        let section = cross_section(&self.phantom.vessels, &probe, &geom);
        let labels = rasterize_labels(&section, &geom);
        let frame: Frame = render_bmode(
            &section,
            &self.contact.model,
            &geom,
            tick_seed(sc.seed, tick, STREAM_RENDER),
            &sc.render,
        )?;
        let confidence = confidence_map(&frame);

        let samples = match supplied {
            Some(s) => s.to_vec(),
            None => self.synthesize_gaze(&section),
        };
        let window_start = (tick + 1).saturating_sub(sc.gaze.window_ticks);
        self.gaze_window.push_back((tick, samples.clone()));
        while self.gaze_window.front().is_some_and(|(t, _)| *t < window_start) {
            self.gaze_window.pop_front();
        }
        let pooled: Vec<GazeSample> = self
            .gaze_window
            .iter()
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        let gaze_heatmap = Arc::new(gaze_to_heatmap::<f64>(&pooled, &sc.attention, &geom));

        let mut candidates = detect_candidates_with_confidence(&frame, &confidence, &sc.segmentation);
        self.tracker.assign(tick, &mut candidates);
        self.history.push(tick, gaze_heatmap.clone(), &candidates)?;
        let (intent, attention) = intention::update(
            &self.history,
            &self.intent,
            &sc.intention,
            tick_seed(sc.seed, tick, STREAM_INTENT),
        )?;
        self.intent = intent;
        let segmentation = select_target(candidates, &attention, &sc.segmentation)?;

        let branch_of = |mask: &crate::grid::Mask| -> Option<BranchId> {
            labels
                .iter()
                .map(|l| (l.mask.overlap(mask), l.branch))
                .filter(|(o, _)| *o > 0)
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
                .map(|(_, b)| b)
        };
        let summaries: Vec<CandidateSummary> = segmentation
            .candidates
            .iter()
            .map(|c| CandidateSummary {
                track: c.track,
                centroid: c.centroid,
                area: c.area,
                branch: branch_of(&c.mask),
            })
            .collect();
        let selected = segmentation.selected_candidate();
        let branch = segmentation.selected.and_then(|i| summaries[i].branch);
        let dice_score = match (selected, branch) {
            (Some(c), Some(b)) => {
                let label = labels.iter().find(|l| l.branch == b).expect("label exists");
                Some(dice(&c.mask, &label.mask)?)
            }
            _ => None,
        };

        let gaze_branch = self.planned_branch();
        let out = control::step(
            &probe,
            &confidence,
            &segmentation,
            &self.phantom.surface,
            &sc.control,
            sc.dt(),
        )?;

        let telemetry = Telemetry {
            tick,
            x: probe.x,
            y: probe.y,
            z: probe.z,
            theta: probe.theta,
            force: probe.force,
            x_c: out.servo.map(|s| s.x_c),
            d_c: out.servo.map(|s| s.d_c),
            theta_c: out.servo.map(|s| s.theta_c),
            target: selected.and_then(|c| c.track),
            intent: self.intent.current_target,
            evidence: self.intent.evidence.clone(),
            branch,
            dice: dice_score,
            gaze_branch,
            correction: sc.control.correction,
        };
        let record = TickRecord {
            tick,
            frame_digest: digest(&frame.intensity),
            gaze_digest: digest(&gaze_heatmap.values),
            attention_digest: digest(&attention.values),
            gaze: samples,
            segmentation: SegmentationSummary {
                candidates: summaries,
                selected: segmentation.selected,
                attention_used: segmentation.attention_used,
                selected_mask: selected.map(|c| RleMask::encode(&c.mask)),
            },
            telemetry,
            tick_micros: 0,
        };

        self.probe = out.probe;
        self.contact = out.contact;
        self.tick += 1;
        let mut output = TickOutput {
            record,
            frame,
            confidence,
            gaze_heatmap,
            attention,
            segmentation,
            labels,
            section,
        };
        output.record.tick_micros = started.elapsed().as_micros() as u64;
        Ok(output)
    }
}

/// Headless run of the whole scenario.
pub fn run(scenario: &Scenario) -> Result<RunRecord> {
    let mut sim = Simulation::new(scenario.clone())?;
    let mut record = RunRecord::new(sim.header());
    for _ in 0..scenario.ticks {
        record.ticks.push(sim.step(None)?.record);
    }
    Ok(record)
}

/// Re-runs the embedded scenario with the recorded gaze and checks every
/// digest and telemetry entry bit for bit.
pub fn replay(record: &RunRecord) -> Result<RunRecord> {
    let h = &record.header;
    if h.schema_version != super::scenario::SCHEMA_VERSION {
        return Err(Error::Version {
            found: h.schema_version,
            expected: super::scenario::SCHEMA_VERSION,
        });
    }
    if h.scenario.hash() != h.scenario_hash {
        return Err(Error::DigestMismatch {
            tick: 0,
            field: "scenario_hash".into(),
        });
    }
    let mut scenario = h.scenario.clone();
    // Recorded samples replace whatever source produced them.
    scenario.gaze.source = GazeSource::Live;
    scenario.control.correction = h.correction;
    let mut sim = Simulation::new(scenario)?;
    let mut out = RunRecord::new(h.clone());
    for expected in &record.ticks {
        let got = sim.step(Some(&expected.gaze))?.record;
        let mismatch = |field: &str| Error::DigestMismatch {
            tick: expected.tick,
            field: field.into(),
        };
        if got.tick != expected.tick {
            return Err(mismatch("tick"));
        }
        if got.frame_digest != expected.frame_digest {
            return Err(mismatch("frame_digest"));
        }
        if got.gaze_digest != expected.gaze_digest {
            return Err(mismatch("gaze_digest"));
        }
        if got.attention_digest != expected.attention_digest {
            return Err(mismatch("attention_digest"));
        }
        if got.segmentation != expected.segmentation {
            return Err(mismatch("segmentation"));
        }
        let mut tel = got.telemetry.clone();
        tel.gaze_branch = expected.telemetry.gaze_branch;
        if tel != expected.telemetry {
            return Err(mismatch("telemetry"));
        }
        out.ticks.push(TickRecord {
            telemetry: tel,
            ..got
        });
    }
    Ok(out)
}
