//! Simulation loop, scenarios, recording and replay, metrics, reconstruction
//! export and the live session server.

mod metrics;
pub mod protocol;
mod reconstruct;
mod record;
mod scenario;
mod serve;
mod sim;

pub use metrics::{metrics, DurationStats, MeanStd, MetricsSummary};
pub use reconstruct::{reconstruct, Polyline, Reconstruction};
pub use record::{
    CandidateSummary, RecordHeader, RleMask, RunRecord, SegmentationSummary, Telemetry, TickRecord,
};
pub use scenario::{
    read_gaze_csv, write_gaze_csv, FollowStep, GazeSource, GazeSpec, InitialProbe, PhantomSpec,
    Scenario, TrackerParams, SCHEMA_VERSION,
};
pub use serve::Server;
pub use sim::{replay, run, tick_seed, Simulation, TickOutput};
