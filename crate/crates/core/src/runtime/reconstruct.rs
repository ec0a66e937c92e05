use std::io::Write;

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use crate::control::ProbeState;
use crate::error::Result;
use crate::phantom::{BranchId, ImagingPlane, Point3, VesselTree};

/// Centroids of one followed target, in world mm, ordered by scan position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    /// Track id of the followed target.
    pub target: u32,
    /// Most frequent ground-truth branch along the polyline.
    pub branch: Option<BranchId>,
    pub points: Vec<Point3>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub polylines: Vec<Polyline>,
}

/// Maps every selected centroid through the probe pose of its tick. A new
/// polyline starts whenever the selected target changes.
pub fn reconstruct(record: &RunRecord) -> Reconstruction {
    let geom = record.header.scenario.imaging;
    let mut polylines: Vec<Polyline> = vec![];
    let mut branches: Vec<Vec<BranchId>> = vec![];
    let mut open: Option<u32> = None;
    for t in &record.ticks {
        let seg = &t.segmentation;
        let Some(c) = seg.selected.map(|i| &seg.candidates[i]) else {
            continue;
        };
        let target = c.track.unwrap_or(u32::MAX);
        if open != Some(target) {
            polylines.push(Polyline {
                target,
                branch: None,
                points: vec![],
            });
            branches.push(vec![]);
            open = Some(target);
        }
        let tel = &t.telemetry;
        let plane = ImagingPlane::from_probe(&ProbeState::at(tel.x, tel.y, tel.z, tel.theta));
        let point = plane.unproject(
            geom.column_to_lateral(c.centroid.0),
            geom.row_to_depth(c.centroid.1),
        );
        let last = polylines.len() - 1;
        polylines[last].points.push(point);
        if let Some(b) = c.branch {
            branches[last].push(b);
        }
    }
    for (line, seen) in polylines.iter_mut().zip(&mut branches) {
        line.points.sort_by(|a, b| a[1].total_cmp(&b[1]));
        seen.sort_unstable();
        line.branch = seen
            .chunk_by(|a, b| a == b)
            .max_by_key(|run| run.len())
            .map(|run| run[0]);
    }
    Reconstruction { polylines }
}

impl Reconstruction {
    pub fn point_count(&self) -> usize {
        self.polylines.iter().map(|p| p.points.len()).sum()
    }

    /// Root-mean-square distance of all points to the nearest centerline.
    pub fn rms_to(&self, tree: &VesselTree) -> Option<f64> {
        let d: Vec<f64> = self
            .polylines
            .iter()
            .flat_map(|p| p.points.iter().map(|q| tree.distance_to_centerlines(*q)))
            .collect();
        if d.is_empty() {
            return None;
        }
        Some((d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt())
    }

    /// `polyline,target,branch,x,y,z` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["polyline", "target", "branch", "x", "y", "z"])
            .map_err(csv_err)?;
        for (i, line) in self.polylines.iter().enumerate() {
            let branch = line.branch.map(|b| b.to_string()).unwrap_or_default();
            for p in &line.points {
                w.write_record([
                    i.to_string(),
                    line.target.to_string(),
                    branch.clone(),
                    p[0].to_string(),
                    p[1].to_string(),
                    p[2].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// ASCII PLY point cloud with a per-vertex polyline index.
    pub fn write_ply<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "ply")?;
        writeln!(out, "format ascii 1.0")?;
        writeln!(out, "element vertex {}", self.point_count())?;
        writeln!(out, "property double x")?;
        writeln!(out, "property double y")?;
        writeln!(out, "property double z")?;
        writeln!(out, "property int polyline")?;
        writeln!(out, "end_header")?;
        for (i, line) in self.polylines.iter().enumerate() {
            for p in &line.points {
                writeln!(out, "{} {} {} {i}", p[0], p[1], p[2])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Parse(e.to_string())
}
