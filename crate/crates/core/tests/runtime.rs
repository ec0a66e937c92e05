mod common;

use std::io::BufReader;

use gaze_russ::attention::GazeSample;
use gaze_russ::runtime::{
    metrics, read_gaze_csv, reconstruct, replay, run, write_gaze_csv, GazeSource, RunRecord, Scenario,
};
use gaze_russ::Error;

use common::scenario;

fn short(name: &str, ticks: u64) -> Scenario {
    let mut sc = scenario(name);
    sc.ticks = ticks;
    sc
}

fn to_lines(rec: &RunRecord) -> Vec<String> {
    let mut buf = vec![];
    rec.write_jsonl(&mut buf).unwrap();
    String::from_utf8(buf).unwrap().lines().map(str::to_owned).collect()
}

fn from_lines(lines: &[String]) -> gaze_russ::Result<RunRecord> {
    let text = lines.join("\n") + "\n";
    RunRecord::read_jsonl(BufReader::new(text.as_bytes()))
}

#[test]
fn zero_ticks_gives_header_only() {
    let rec = run(&short("cylinder.toml", 0)).unwrap();
    assert!(rec.ticks.is_empty());
    assert_eq!(rec.header.scenario.name, "cylinder");
    let back = from_lines(&to_lines(&rec)).unwrap();
    assert!(back.same_payload(&rec));
    assert_eq!(metrics(&rec).ticks, 0);
    assert_eq!(reconstruct(&rec).point_count(), 0);
}

#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let sc = short("bifurcation.toml", 30);
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert!(a.same_payload(&b));
    let mut other = sc.clone();
    other.seed += 1;
    let c = run(&other).unwrap();
    assert_ne!(a.ticks[0].frame_digest, c.ticks[0].frame_digest);
}

#[test]
fn record_round_trips_and_replays() {
    let rec = run(&short("bifurcation.toml", 40)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    rec.save(&path).unwrap();
    let loaded = RunRecord::load(&path).unwrap();
    assert!(loaded.same_payload(&rec));
    let again = replay(&loaded).unwrap();
    assert!(again.same_payload(&rec));
}

#[test]
fn truncated_record_is_corrupt() {
    let lines = to_lines(&run(&short("cylinder.toml", 5)).unwrap());
    let cut = &lines[..lines.len() - 1];
    assert!(matches!(from_lines(cut), Err(Error::Corrupt(_))));
    let mut half = lines[..3].to_vec();
    let n = half[2].len() / 2;
    half[2].truncate(n);
    assert!(matches!(from_lines(&half), Err(Error::Corrupt(_))));
    assert!(matches!(from_lines(&[]), Err(Error::Corrupt(_))));
}

#[test]
fn foreign_version_is_rejected() {
    let mut lines = to_lines(&run(&short("cylinder.toml", 2)).unwrap());
    lines[0] = lines[0].replacen("\"schema_version\":1", "\"schema_version\":99", 1);
    assert!(matches!(
        from_lines(&lines),
        Err(Error::Version { found: 99, expected: 1 })
    ));
}

#[test]
fn tampered_record_fails_replay() {
    let mut rec = run(&short("bifurcation.toml", 20)).unwrap();
    rec.ticks[7].telemetry.x += 1e-9;
    assert!(matches!(
        replay(&rec),
        Err(Error::DigestMismatch { tick: 7, .. })
    ));

    let mut rec = run(&short("bifurcation.toml", 20)).unwrap();
    rec.ticks[3].gaze[0].x += 10.0;
    assert!(matches!(replay(&rec), Err(Error::DigestMismatch { tick: 3, .. })));

    let mut rec = run(&short("bifurcation.toml", 5)).unwrap();
    rec.header.scenario.seed += 1;
    assert!(matches!(replay(&rec), Err(Error::DigestMismatch { tick: 0, .. })));
}

#[test]
fn scripted_gaze_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gaze.csv");
    let samples: Vec<GazeSample> = (0..30)
        .map(|t| GazeSample { t, x: 127.5, y: 67.0 + t as f64 * 0.1, valid: t % 7 != 0 })
        .collect();
    write_gaze_csv(&path, &samples).unwrap();
    assert_eq!(read_gaze_csv(&path).unwrap(), samples);

    let mut sc = short("bifurcation.toml", 30);
    sc.gaze.source = GazeSource::Scripted { path };
    let rec = run(&sc).unwrap();
    for (t, s) in rec.ticks.iter().zip(&samples) {
        assert_eq!(t.gaze, vec![*s]);
    }
    assert!(replay(&rec).unwrap().same_payload(&rec));
}

#[test]
fn reconstruction_of_straight_vessel_is_accurate() {
    let sc = short("cylinder.toml", 200);
    let mut sc = sc;
    sc.gaze.source = GazeSource::Follow {
        plan: vec![gaze_russ::runtime::FollowStep { from_y_mm: 0.0, branch: 0 }],
        jitter_px: 3.0,
    };
    let rec = run(&sc).unwrap();
    let recon = reconstruct(&rec);
    assert!(recon.point_count() > 150);
    let rms = recon.rms_to(&sc.build_phantom().unwrap().vessels).unwrap();
    assert!(rms < 1.0, "rms {rms}");

    let mut csv = vec![];
    recon.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("polyline,target,branch,x,y,z"));
    assert_eq!(text.lines().count(), recon.point_count() + 1);
    let mut ply = vec![];
    recon.write_ply(&mut ply).unwrap();
    let ply = String::from_utf8(ply).unwrap();
    assert!(ply.starts_with("ply\nformat ascii 1.0"));
    assert!(ply.contains(&format!("element vertex {}", recon.point_count())));
}

#[test]
fn reconstruction_without_selection_is_empty() {
    let rec = run(&short("cylinder.toml", 20)).unwrap();
    assert!(rec.ticks.iter().all(|t| t.segmentation.selected.is_none()));
    assert!(reconstruct(&rec).polylines.is_empty());
}

#[test]
fn target_switch_splits_polylines() {
    let rec = run(&scenario("bifurcation.toml")).unwrap();
    let recon = reconstruct(&rec);
    assert!(recon.polylines.len() >= 2);
    let first = &recon.polylines[0];
    let last = recon.polylines.last().unwrap();
    assert_ne!(first.target, last.target);
    assert_eq!(last.branch, Some(2));
    let m = metrics(&rec);
    assert_eq!(m.switch_latencies.len(), 1);
    assert!(m.dice_by_branch[&2].mean > 0.85);
}

#[test]
fn metrics_of_constant_offset() {
    let mut rec = run(&short("cylinder.toml", 10)).unwrap();
    for (i, t) in rec.ticks.iter_mut().enumerate() {
        t.telemetry.d_c = Some(if i % 2 == 0 { 3.0 } else { -3.0 });
        t.tick_micros = 1000;
    }
    let m = metrics(&rec);
    let d = m.abs_d_c.unwrap();
    assert_eq!((d.mean, d.std, d.n), (3.0, 0.0, 10));
    let td = m.tick_duration.unwrap();
    assert_eq!((td.mean_ms, td.p95_ms, td.max_ms), (1.0, 1.0, 1.0));
}

#[test]
fn correction_lowers_mean_offset() {
    let mut sc = short("cylinder.toml", 150);
    let on = metrics(&run(&sc).unwrap()).abs_d_c.unwrap().mean;
    sc.control.correction = false;
    let off = metrics(&run(&sc).unwrap()).abs_d_c.unwrap().mean;
    assert!(on < off, "on {on} off {off}");
}

#[test]
fn invalid_scenarios_report_paths() {
    let mut sc = scenario("bifurcation.toml");
    sc.probe.y_mm = 1000.0;
    sc.control.k_theta = -1.0;
    let Err(Error::Validation(issues)) = sc.validate() else {
        panic!("expected validation error");
    };
    let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
    assert!(paths.contains(&"probe.y_mm"), "{paths:?}");
    assert!(paths.contains(&"control"), "{paths:?}");

    let text = std::fs::read_to_string(common::scenario_path("cylinder.toml")).unwrap();
    let bumped = text.replacen("schema_version = 1", "schema_version = 2", 1);
    assert!(matches!(
        Scenario::from_toml_str(&bumped, None),
        Err(Error::Version { found: 2, .. })
    ));
    assert!(matches!(
        Scenario::from_toml_str("ticks = \"many\"", None),
        Err(Error::Validation(_) | Error::Parse(_))
    ));
}

#[test]
fn scenario_toml_round_trips() {
    let sc = scenario("bifurcation.toml");
    let again = Scenario::from_toml_str(&sc.to_toml_string().unwrap(), None).unwrap();
    assert_eq!(sc, again);
    assert_eq!(sc.hash(), again.hash());
}
