use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{GazeSample, HeatmapParams};
use crate::control::ControlParams;
use crate::error::{Error, Result, ValidationIssue};
use crate::imaging::{ImageGeometry, RenderParams};
use crate::intention::IntentionParams;
use crate::phantom::{BranchId, PhantomModel, SurfaceProfile, VesselLayout};
use crate::segmentation::{CandidateTracker, SegmentationParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub surface: SurfaceProfile,
    pub vessels: VesselLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub gate_px: f64,
    pub max_missed: u64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        let t = CandidateTracker::default();
        Self {
            gate_px: t.gate_px,
            max_missed: t.max_missed,
        }
    }
}

/// Starting pose. Without `z_mm` the probe is lowered until the contact
/// spring delivers the target force.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialProbe {
    pub x_mm: f64,
    pub y_mm: f64,
    pub theta_rad: f64,
    pub z_mm: Option<f64>,
}

/// One leg of a follow plan: from `from_y_mm` on, gaze the lumen of `branch`
/// (or its nearest visible ancestor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowStep {
    pub from_y_mm: f64,
    pub branch: BranchId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum GazeSource {
    #[default]
    None,
    /// CSV file with columns `t,x,y,valid`; `t` is the tick index, `x`/`y` are px.
    Scripted { path: PathBuf },
    /// Synthetic operator that looks at ground-truth lumens along a plan.
    Follow {
        plan: Vec<FollowStep>,
        #[serde(default = "default_jitter")]
        jitter_px: f64,
    },
    /// Samples arrive from a connected client.
    Live,
}

fn default_jitter() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSpec {
    #[serde(flatten)]
    pub source: GazeSource,
    /// Ticks of samples pooled into one raw gaze heatmap.
    #[serde(default = "default_window")]
    pub window_ticks: u64,
}

fn default_window() -> u64 {
    8
}

impl Default for GazeSpec {
    fn default() -> Self {
        Self {
            source: GazeSource::None,
            window_ticks: default_window(),
        }
    }
}

fn default_rate() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub ticks: u64,
    #[serde(default = "default_rate")]
    pub tick_rate_hz: f64,
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub imaging: ImageGeometry,
    #[serde(default)]
    pub render: RenderParams,
    #[serde(default)]
    pub attention: HeatmapParams,
    #[serde(default)]
    pub intention: IntentionParams,
    #[serde(default)]
    pub segmentation: SegmentationParams,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub control: ControlParams,
    #[serde(default)]
    pub probe: InitialProbe,
    #[serde(default)]
    pub gaze: GazeSpec,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u32>,
}

impl Scenario {
    /// Parses and validates a TOML scenario. Relative gaze file paths are
    /// resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let probe: VersionProbe =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        match probe.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(found) => {
                return Err(Error::Version {
                    found,
                    expected: SCHEMA_VERSION,
                })
            }
            None => {
                return Err(Error::Validation(vec![ValidationIssue {
                    path: "schema_version".into(),
                    message: "missing".into(),
                }]))
            }
        }
        let mut scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        if let (Some(base), GazeSource::Scripted { path }) = (base_dir, &mut scenario.gaze.source) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("scenario: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate_hz
    }

    pub fn build_phantom(&self) -> Result<PhantomModel> {
        PhantomModel::build(self.phantom.surface.clone(), &self.phantom.vessels)
    }

    /// Checks every section and reports all failures with their paths.
    pub fn validate(&self) -> Result<()> {
        let mut issues = vec![];
        let mut check = |path: &str, r: Result<()>| {
            if let Err(e) = r {
                issues.push(ValidationIssue {
                    path: path.into(),
                    message: strip_kind(&e),
                });
            }
        };
        if self.schema_version != SCHEMA_VERSION {
            check(
                "schema_version",
                Err(Error::Domain(format!("expected {SCHEMA_VERSION}"))),
            );
        }
        check("tick_rate_hz", positive(self.tick_rate_hz));
        check("imaging", self.imaging.validate());
        check("render", self.render.validate());
        check("attention", self.attention.validate());
        check("intention", self.intention.validate());
        check("segmentation", self.segmentation.validate());
        check("control", self.control.validate());
        check("tracker.gate_px", positive(self.tracker.gate_px));
        check("phantom.surface", self.phantom.surface.validate());
        let tree = self
            .phantom
            .surface
            .validate()
            .and_then(|_| self.phantom.vessels.build(&self.phantom.surface));
        if let Err(e) = &tree {
            check("phantom.vessels", Err(Error::Domain(strip_kind(e))));
        }
        let ext = self.phantom.surface.extent;
        if !(ext.x_min..=ext.x_max).contains(&self.probe.x_mm) {
            check("probe.x_mm", Err(Error::Domain("outside the surface extent".into())));
        }
        if !(ext.y_min..=ext.y_max).contains(&self.probe.y_mm) {
            check("probe.y_mm", Err(Error::Domain("outside the surface extent".into())));
        }
        if self.probe.theta_rad.abs() > self.control.theta_limit {
            check(
                "probe.theta_rad",
                Err(Error::Domain("exceeds control.theta_limit".into())),
            );
        }
        if self.gaze.window_ticks == 0 {
            check("gaze.window_ticks", Err(Error::Domain("must be >= 1".into())));
        }
        match &self.gaze.source {
            GazeSource::Scripted { path } => {
                if !path.is_file() {
                    check(
                        "gaze.path",
                        Err(Error::Domain(format!("{} is not a readable file", path.display()))),
                    );
                }
            }
            GazeSource::Follow { plan, jitter_px } => {
                if !(*jitter_px >= 0.0 && jitter_px.is_finite()) {
                    check("gaze.jitter_px", Err(Error::Domain("must be >= 0".into())));
                }
                for (i, leg) in plan.iter().enumerate() {
                    if let Ok(tree) = &tree {
                        if tree.branch(leg.branch).is_none() {
                            check(
                                &format!("gaze.plan[{i}].branch"),
                                Err(Error::Domain(format!("no branch {}", leg.branch))),
                            );
                        }
                    }
                    if i > 0 && leg.from_y_mm < plan[i - 1].from_y_mm {
                        check(
                            &format!("gaze.plan[{i}].from_y_mm"),
                            Err(Error::Domain("plan must be sorted by from_y_mm".into())),
                        );
                    }
                }
            }
            GazeSource::None | GazeSource::Live => {}
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}

fn positive(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain("must be positive".into()))
    }
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Domain(m) | Error::Degenerate(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Reads a `t,x,y,valid` CSV gaze script, sorted by `t`.
pub fn read_gaze_csv(path: &Path) -> Result<Vec<GazeSample>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut samples = reader
        .deserialize()
        .collect::<std::result::Result<Vec<GazeSample>, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    samples.sort_by_key(|s| s.t);
    Ok(samples)
}

pub fn write_gaze_csv(path: &Path, samples: &[GazeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for s in samples {
        w.serialize(s)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}
