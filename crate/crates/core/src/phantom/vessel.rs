use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::surface::SurfaceProfile;
use crate::error::{Error, Result};

pub type BranchId = u32;

pub type Point3 = [f64; 3];

/// Where a child branch leaves its parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub branch: BranchId,
    /// Arc-length fraction along the parent centerline, in `[0, 1]`.
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselBranch {
    pub id: BranchId,
    /// World-frame centerline vertices in mm.
    pub centerline: Vec<Point3>,
    /// Lumen radius per vertex in mm.
    pub radius: Vec<f64>,
    #[serde(default)]
    pub parent: Option<Junction>,
}

/// Maximum distance between a child's first vertex and its parent centerline.
pub const JUNCTION_TOLERANCE_MM: f64 = 0.1;

impl VesselBranch {
    pub fn validate(&self) -> Result<()> {
        if self.centerline.len() < 2 {
            return Err(Error::Domain(format!(
                "branch {} needs at least 2 centerline vertices",
                self.id
            )));
        }
        if self.radius.len() != self.centerline.len() {
            return Err(Error::Domain(format!(
                "branch {} has {} radii for {} vertices",
                self.id,
                self.radius.len(),
                self.centerline.len()
            )));
        }
        if self.radius.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Domain(format!("branch {} has non-positive radius", self.id)));
        }
        if self.centerline.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("branch {} has non-finite vertex", self.id)));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.centerline.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    /// Point at arc-length fraction `t` in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Point3 {
        let total = self.length();
        let mut target = t.clamp(0.0, 1.0) * total;
        for w in self.centerline.windows(2) {
            let l = dist(w[0], w[1]);
            if target <= l && l > 0.0 {
                return lerp3(w[0], w[1], target / l);
            }
            target -= l;
        }
        *self.centerline.last().expect("validated branch")
    }

    /// Shortest distance from `p` to the centerline polyline.
    pub fn distance_to(&self, p: Point3) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselTree {
    pub root: BranchId,
    pub branches: Vec<VesselBranch>,
}

impl VesselTree {
    pub fn branch(&self, id: BranchId) -> Option<&VesselBranch> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// `id` followed by its ancestors up to the root.
    pub fn lineage(&self, id: BranchId) -> Vec<BranchId> {
        let mut out = vec![];
        let mut cur = Some(id);
        while let Some(c) = cur {
            if out.contains(&c) {
                break;
            }
            out.push(c);
            cur = self.branch(c).and_then(|b| b.parent).map(|j| j.branch);
        }
        out
    }

    /// Shortest distance from `p` to any centerline in the tree.
    pub fn distance_to_centerlines(&self, p: Point3) -> f64 {
        self.branches
            .iter()
            .map(|b| b.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the tree invariants: unique ids, a single root, acyclic parents,
    /// junction continuity and every lumen strictly below the surface.
    pub fn validate(&self, surface: &SurfaceProfile) -> Result<()> {
        let mut ids = HashSet::new();
        for b in &self.branches {
            b.validate()?;
            if !ids.insert(b.id) {
                return Err(Error::Domain(format!("duplicate branch id {}", b.id)));
            }
        }
        let roots: Vec<_> = self.branches.iter().filter(|b| b.parent.is_none()).collect();
        if roots.len() != 1 || roots[0].id != self.root {
            return Err(Error::Domain(format!(
                "vessel tree must have exactly one root ({}), found {:?}",
                self.root,
                roots.iter().map(|b| b.id).collect::<Vec<_>>()
            )));
        }
        let parent: HashMap<BranchId, BranchId> = self
            .branches
            .iter()
            .filter_map(|b| b.parent.map(|j| (b.id, j.branch)))
            .collect();
        for b in &self.branches {
            let mut seen = HashSet::new();
            let mut cur = b.id;
            while let Some(&p) = parent.get(&cur) {
                if !ids.contains(&p) {
                    return Err(Error::Domain(format!(
                        "branch {cur} references missing parent {p}"
                    )));
                }
                if !seen.insert(cur) {
                    return Err(Error::Domain(format!("branch {} is part of a cycle", b.id)));
                }
                cur = p;
            }
            if let Some(j) = b.parent {
                let pb = self.branch(j.branch).expect("checked above");
                let d = pb.distance_to(b.centerline[0]);
                if d > JUNCTION_TOLERANCE_MM {
                    return Err(Error::Domain(format!(
                        "branch {} starts {:.3} mm away from parent {}",
                        b.id, d, j.branch
                    )));
                }
            }
            for (v, r) in b.centerline.iter().zip(&b.radius) {
                let h = surface.height(v[0], v[1]).map_err(|_| {
                    Error::Domain(format!("branch {} leaves the surface extent", b.id))
                })?;
                if v[2] + r >= h {
                    return Err(Error::Domain(format!(
                        "branch {} is not strictly below the surface at y={:.2}",
                        b.id, v[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Declarative vessel description used by scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VesselLayout {
    /// Explicit branches.
    Tree(VesselTree),
    /// One straight vessel along y at a fixed lateral position and depth under the surface.
    Straight {
        x_mm: f64,
        depth_mm: f64,
        y_start_mm: f64,
        y_end_mm: f64,
        radius_mm: f64,
    },
    /// A trunk that splits into two children (ids `root + 1` on the -x side,
    /// `root + 2` on the +x side) with smoothstep lateral blending.
    YSplit {
        x_mm: f64,
        depth_mm: f64,
        y_start_mm: f64,
        y_junction_mm: f64,
        y_end_mm: f64,
        /// Final lateral offset of each child from the trunk.
        spread_mm: f64,
        /// Distance over which the children diverge.
        blend_mm: f64,
        trunk_radius_mm: f64,
        child_radii_mm: [f64; 2],
        #[serde(default = "default_step")]
        step_mm: f64,
        #[serde(default)]
        root: BranchId,
    },
}

fn default_step() -> f64 {
    2.0
}

impl VesselLayout {
    /// Expands the layout into concrete centerlines hugging `surface` at the given depth.
    pub fn build(&self, surface: &SurfaceProfile) -> Result<VesselTree> {
        let below = |x: f64, y: f64, depth: f64| -> Result<Point3> {
            Ok([x, y, surface.height(x, y)? - depth])
        };
        let tree = match self {
            VesselLayout::Tree(t) => t.clone(),
            VesselLayout::Straight {
                x_mm,
                depth_mm,
                y_start_mm,
                y_end_mm,
                radius_mm,
            } => {
                let n = (((y_end_mm - y_start_mm) / 2.0).ceil() as usize).max(1);
                let centerline = (0..=n)
                    .map(|i| {
                        let y = y_start_mm + (y_end_mm - y_start_mm) * i as f64 / n as f64;
                        below(*x_mm, y, *depth_mm)
                    })
                    .collect::<Result<Vec<_>>>()?;
                VesselTree {
                    root: 0,
                    branches: vec![VesselBranch {
                        id: 0,
                        radius: vec![*radius_mm; centerline.len()],
                        centerline,
                        parent: None,
                    }],
                }
            }
            VesselLayout::YSplit {
                x_mm,
                depth_mm,
                y_start_mm,
                y_junction_mm,
                y_end_mm,
                spread_mm,
                blend_mm,
                trunk_radius_mm,
                child_radii_mm,
                step_mm,
                root,
            } => {
                if !(y_start_mm < y_junction_mm && y_junction_mm < y_end_mm) || *step_mm <= 0.0 {
                    return Err(Error::Domain("y-split needs start < junction < end".into()));
                }
                let samples = |a: f64, b: f64| -> Vec<f64> {
                    let n = (((b - a) / step_mm).ceil() as usize).max(1);
                    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
                };
                let trunk_pts = samples(*y_start_mm, *y_junction_mm)
                    .into_iter()
                    .map(|y| below(*x_mm, y, *depth_mm))
                    .collect::<Result<Vec<_>>>()?;
                let junction = *trunk_pts.last().expect("at least two samples");
                let mut branches = vec![VesselBranch {
                    id: *root,
                    radius: vec![*trunk_radius_mm; trunk_pts.len()],
                    centerline: trunk_pts,
                    parent: None,
                }];
                for (k, side) in [-1.0, 1.0].into_iter().enumerate() {
                    let r_child = child_radii_mm[k];
                    let mut pts = vec![];
                    let mut radii = vec![];
                    for y in samples(*y_junction_mm, *y_end_mm) {
                        let t = ((y - y_junction_mm) / blend_mm).clamp(0.0, 1.0);
                        let s = t * t * (3.0 - 2.0 * t);
                        let p = if y == *y_junction_mm {
                            junction
                        } else {
                            below(x_mm + side * spread_mm * s, y, *depth_mm)?
                        };
                        pts.push(p);
                        radii.push(trunk_radius_mm + (r_child - trunk_radius_mm) * s);
                    }
                    branches.push(VesselBranch {
                        id: root + 1 + k as BranchId,
                        centerline: pts,
                        radius: radii,
                        parent: Some(Junction {
                            branch: *root,
                            at: 1.0,
                        }),
                    });
                }
                VesselTree {
                    root: *root,
                    branches,
                }
            }
        };
        tree.validate(surface)?;
        Ok(tree)
    }
}

pub(crate) fn dist(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub(crate) fn lerp3(a: Point3, b: Point3, t: f64) -> Point3 {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn point_segment_distance(p: Point3, a: Point3, b: Point3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, lerp3(a, b, t))
}
