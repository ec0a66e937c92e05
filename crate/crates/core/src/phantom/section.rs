use serde::{Deserialize, Serialize};

use super::vessel::{BranchId, Point3, VesselTree};
use crate::control::ProbeState;
use crate::grid::Mask;
use crate::imaging::ImageGeometry;

/// Below this |cos| between a centerline and the plane normal the vessel runs
/// inside the plane and produces no transversal crossing.
const MIN_CROSSING_COS: f64 = 0.05;

/// The probe's imaging plane in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingPlane {
    /// Transducer face center.
    pub origin: Point3,
    /// Unit vector along image columns (probe x).
    pub lateral: Point3,
    /// Unit vector along image rows, pointing into the tissue.
    pub axial: Point3,
}

impl ImagingPlane {
    /// Plane of a probe rotated by `theta` about its y-axis. Positive `theta`
    /// raises the +x edge of the transducer.
    pub fn from_probe(probe: &ProbeState) -> Self {
        let (s, c) = probe.theta.sin_cos();
        Self {
            origin: [probe.x, probe.y, probe.z],
            lateral: [c, 0.0, s],
            axial: [s, 0.0, -c],
        }
    }

    pub fn normal(&self) -> Point3 {
        cross(self.lateral, self.axial)
    }

    /// In-plane `(lateral, depth)` coordinates of a world point, mm.
    pub fn project(&self, p: Point3) -> (f64, f64) {
        let d = sub(p, self.origin);
        (dot(d, self.lateral), dot(d, self.axial))
    }

    /// World point of in-plane coordinates.
    pub fn unproject(&self, lateral: f64, depth: f64) -> Point3 {
        [
            self.origin[0] + lateral * self.lateral[0] + depth * self.axial[0],
            self.origin[1] + lateral * self.lateral[1] + depth * self.axial[1],
            self.origin[2] + lateral * self.lateral[2] + depth * self.axial[2],
        ]
    }
}

/// One vessel lumen cut by the imaging plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lumen {
    pub branch: BranchId,
    /// Ellipse center in image mm (lateral, depth).
    pub center: (f64, f64),
    /// Semi-axes in mm; `semi_axes.0` lies along `orientation`.
    pub semi_axes: (f64, f64),
    /// Angle of the first semi-axis from the image lateral axis, rad.
    pub orientation: f64,
    /// The ellipse extends past the field of view.
    pub clipped: bool,
}

impl Lumen {
    /// True when the image-mm point lies inside the ellipse.
    pub fn contains(&self, lateral: f64, depth: f64) -> bool {
        let (a, b) = self.semi_axes;
        if a <= 0.0 || b <= 0.0 {
            return false;
        }
        let (s, c) = self.orientation.sin_cos();
        let dx = lateral - self.center.0;
        let dy = depth - self.center.1;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }

    /// Axis-aligned half extents of the ellipse.
    pub fn half_extents(&self) -> (f64, f64) {
        let (a, b) = self.semi_axes;
        let (s, c) = self.orientation.sin_cos();
        (
            ((a * c).powi(2) + (b * s).powi(2)).sqrt(),
            ((a * s).powi(2) + (b * c).powi(2)).sqrt(),
        )
    }

    pub fn area_mm2(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes.0 * self.semi_axes.1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub lumens: Vec<Lumen>,
}

impl CrossSection {
    pub fn lumen(&self, branch: BranchId) -> Option<&Lumen> {
        self.lumens.iter().find(|l| l.branch == branch)
    }
}

/// Ground-truth label for one lumen.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub branch: BranchId,
    pub mask: Mask,
}

pub fn cross_section(tree: &VesselTree, probe: &ProbeState, fov: &ImageGeometry) -> CrossSection {
    section_in_plane(tree, &ImagingPlane::from_probe(probe), fov)
}

/// Cuts every branch with an arbitrary plane. Each centerline segment that
/// changes side (half-open, so shared vertices count once) yields one lumen.
pub fn section_in_plane(tree: &VesselTree, plane: &ImagingPlane, fov: &ImageGeometry) -> CrossSection {
    let n = plane.normal();
    let (lat_lo, lat_hi) = fov.lateral_bounds();
    let (dep_lo, dep_hi) = fov.depth_bounds();
    let mut lumens = vec![];
    for branch in &tree.branches {
        let pts = &branch.centerline;
        for i in 0..pts.len() - 1 {
            let s0 = dot(sub(pts[i], plane.origin), n);
            let s1 = dot(sub(pts[i + 1], plane.origin), n);
            let crosses = (s0 < 0.0 && s1 >= 0.0) || (s0 >= 0.0 && s1 < 0.0);
            if !crosses {
                continue;
            }
            let t = s0 / (s0 - s1);
            let seg = sub(pts[i + 1], pts[i]);
            let len = norm(seg);
            if len == 0.0 {
                continue;
            }
            let dir = scale(seg, 1.0 / len);
            let cos = dot(dir, n).abs();
            if cos < MIN_CROSSING_COS {
                continue;
            }
            let p = [
                pts[i][0] + seg[0] * t,
                pts[i][1] + seg[1] * t,
                pts[i][2] + seg[2] * t,
            ];
            let r = branch.radius[i] + (branch.radius[i + 1] - branch.radius[i]) * t;
            let (cl, cd) = plane.project(p);
            // Major axis along the in-plane projection of the centerline.
            let (dl, dd) = (dot(dir, plane.lateral), dot(dir, plane.axial));
            let in_plane = (dl * dl + dd * dd).sqrt();
            let orientation = if in_plane > 1e-9 { dd.atan2(dl) } else { 0.0 };
            let mut lumen = Lumen {
                branch: branch.id,
                center: (cl, cd),
                semi_axes: (r / cos, r),
                orientation,
                clipped: false,
            };
            let (hx, hy) = lumen.half_extents();
            let outside = cl + hx < lat_lo || cl - hx > lat_hi || cd + hy < dep_lo || cd - hy > dep_hi;
            if outside {
                continue;
            }
            lumen.clipped = cl - hx < lat_lo || cl + hx > lat_hi || cd - hy < dep_lo || cd + hy > dep_hi;
            lumens.push(lumen);
        }
    }
    CrossSection { lumens }
}

/// One binary mask per lumen; a pixel is set iff its center lies in the ellipse.
pub fn rasterize_labels(cs: &CrossSection, fov: &ImageGeometry) -> Vec<LabelMask> {
    cs.lumens
        .iter()
        .map(|l| LabelMask {
            branch: l.branch,
            mask: rasterize_lumen(l, fov),
        })
        .collect()
}

pub fn rasterize_lumen(lumen: &Lumen, fov: &ImageGeometry) -> Mask {
    let mut mask = Mask::empty(fov.width_px, fov.depth_px);
    let (hx, hy) = lumen.half_extents();
    if hx <= 0.0 || hy <= 0.0 {
        return mask;
    }
    let c0 = fov.lateral_to_column(lumen.center.0 - hx).floor().max(0.0) as usize;
    let c1 = (fov.lateral_to_column(lumen.center.0 + hx).ceil() as isize).min(fov.width_px as isize - 1);
    let r0 = fov.depth_to_row(lumen.center.1 - hy).floor().max(0.0) as usize;
    let r1 = (fov.depth_to_row(lumen.center.1 + hy).ceil() as isize).min(fov.depth_px as isize - 1);
    if c1 < 0 || r1 < 0 {
        return mask;
    }
    for row in r0..=r1 as usize {
        let depth = fov.row_to_depth(row as f64);
        for col in c0..=c1 as usize {
            if lumen.contains(fov.column_to_lateral(col as f64), depth) {
                mask.set(col, row, true);
            }
        }
    }
    mask
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: Point3, k: f64) -> Point3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{SurfaceProfile, VesselBranch, VesselLayout};

    fn probe_at(y: f64, theta: f64) -> ProbeState {
        ProbeState {
            x: 0.0,
            y,
            z: 40.0,
            theta,
            force: 0.0,
        }
    }

    fn straight_tree(r: f64) -> VesselTree {
        VesselTree {
            root: 0,
            branches: vec![VesselBranch {
                id: 0,
                centerline: vec![[0.0, 0.0, 30.0], [0.0, 100.0, 30.0]],
                radius: vec![r, r],
                parent: None,
            }],
        }
    }

    #[test]
    fn perpendicular_cut_is_circle() {
        let cs = cross_section(&straight_tree(2.5), &probe_at(50.0, 0.0), &ImageGeometry::default());
        assert_eq!(cs.lumens.len(), 1);
        let l = cs.lumens[0];
        assert!((l.semi_axes.0 - 2.5).abs() < 1e-12 && (l.semi_axes.1 - 2.5).abs() < 1e-12);
        assert!((l.center.0).abs() < 1e-12 && (l.center.1 - 10.0).abs() < 1e-12);
        assert!(!l.clipped);
    }

    #[test]
    fn rotation_about_probe_y_keeps_a_circle_for_a_vessel_along_y() {
        // Rotating about y leaves the plane normal on y, so the cut stays round.
        let cs = cross_section(&straight_tree(2.0), &probe_at(50.0, 0.3), &ImageGeometry::default());
        let l = cs.lumens[0];
        assert!((l.semi_axes.0 - 2.0).abs() < 1e-12 && (l.semi_axes.1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_plane_gives_ellipse() {
        let r = 2.0;
        let phi: f64 = 0.4;
        // Imaging plane pitched by phi: its normal leaves the vessel axis by phi.
        let plane = ImagingPlane {
            origin: [0.0, 50.0, 40.0],
            lateral: [1.0, 0.0, 0.0],
            axial: [0.0, phi.sin(), -phi.cos()],
        };
        let cs = section_in_plane(&straight_tree(r), &plane, &ImageGeometry::default());
        let l = cs.lumens[0];
        assert!((l.semi_axes.0 - r / phi.cos()).abs() < 1e-12);
        assert!((l.semi_axes.1 - r).abs() < 1e-12);
        // Elongated along image depth.
        assert!((l.orientation.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn oblique_vessel_gives_lateral_ellipse() {
        let phi: f64 = 0.5;
        let tree = VesselTree {
            root: 0,
            branches: vec![VesselBranch {
                id: 0,
                centerline: vec![[0.0, 0.0, 30.0], [100.0 * phi.tan(), 100.0, 30.0]],
                radius: vec![1.5, 1.5],
                parent: None,
            }],
        };
        let mut probe = probe_at(40.0, 0.0);
        probe.x = 40.0 * phi.tan();
        let l = cross_section(&tree, &probe, &ImageGeometry::default()).lumens[0];
        assert!((l.semi_axes.0 - 1.5 / phi.cos()).abs() < 1e-9);
        assert!(l.orientation.abs() < 1e-12);
    }

    #[test]
    fn plane_past_junction_has_two_lumens() {
        let surface = SurfaceProfile::cylinder(40.0, 0.0, 130.0);
        let tree = VesselLayout::YSplit {
            x_mm: 0.0,
            depth_mm: 10.0,
            y_start_mm: 0.0,
            y_junction_mm: 40.0,
            y_end_mm: 130.0,
            spread_mm: 7.0,
            blend_mm: 30.0,
            trunk_radius_mm: 2.5,
            child_radii_mm: [2.0, 2.0],
            step_mm: 2.0,
            root: 0,
        }
        .build(&surface)
        .unwrap();
        let geom = ImageGeometry::default();
        let count = |y: f64| cross_section(&tree, &probe_at(y, 0.0), &geom).lumens.len();
        for y in [1.0, 10.0, 37.9] {
            assert_eq!(count(y), 1, "y={y}");
        }
        for y in [42.1, 60.0, 120.0] {
            assert_eq!(count(y), 2, "y={y}");
        }
        let cs = cross_section(&tree, &probe_at(80.0, 0.0), &geom);
        let mut ids: Vec<_> = cs.lumens.iter().map(|l| l.branch).collect();
        ids.sort();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn no_intersection_is_empty() {
        let cs = cross_section(&straight_tree(2.0), &probe_at(150.0, 0.0), &ImageGeometry::default());
        assert!(cs.lumens.is_empty());
    }

    #[test]
    fn lumen_outside_fov_is_dropped_and_partial_is_flagged() {
        let geom = ImageGeometry::default();
        let mut probe = probe_at(50.0, 0.0);
        probe.x = 40.0;
        assert!(cross_section(&straight_tree(2.0), &probe, &geom).lumens.is_empty());
        probe.x = 19.0;
        let cs = cross_section(&straight_tree(2.0), &probe, &geom);
        assert_eq!(cs.lumens.len(), 1);
        assert!(cs.lumens[0].clipped);
    }

    #[test]
    fn cross_section_is_continuous_in_y() {
        let surface = SurfaceProfile::cylinder(40.0, 0.0, 130.0);
        let tree = VesselLayout::YSplit {
            x_mm: 0.0,
            depth_mm: 10.0,
            y_start_mm: 0.0,
            y_junction_mm: 40.0,
            y_end_mm: 130.0,
            spread_mm: 7.0,
            blend_mm: 30.0,
            trunk_radius_mm: 2.5,
            child_radii_mm: [2.0, 2.0],
            step_mm: 2.0,
            root: 0,
        }
        .build(&surface)
        .unwrap();
        let geom = ImageGeometry::default();
        let delta = 1e-4;
        for y in [20.0, 55.0, 71.3] {
            let a = cross_section(&tree, &probe_at(y, 0.05), &geom);
            let b = cross_section(&tree, &probe_at(y + delta, 0.05), &geom);
            for la in &a.lumens {
                let lb = b.lumen(la.branch).unwrap();
                let shift = ((la.center.0 - lb.center.0).powi(2) + (la.center.1 - lb.center.1).powi(2)).sqrt();
                assert!(shift < 10.0 * delta, "shift {shift}");
            }
        }
    }

    #[test]
    fn zero_radius_rasterizes_empty() {
        let l = Lumen {
            branch: 0,
            center: (0.0, 10.0),
            semi_axes: (0.0, 0.0),
            orientation: 0.0,
            clipped: false,
        };
        assert!(rasterize_lumen(&l, &ImageGeometry::default()).is_empty_mask());
    }

    #[test]
    fn disjoint_lumens_have_disjoint_masks() {
        let geom = ImageGeometry::default();
        let mk = |x: f64| Lumen {
            branch: 0,
            center: (x, 12.0),
            semi_axes: (2.0, 2.0),
            orientation: 0.0,
            clipped: false,
        };
        let cs = CrossSection {
            lumens: vec![mk(-6.0), mk(6.0)],
        };
        let masks = rasterize_labels(&cs, &geom);
        assert_eq!(masks.len(), 2);
        assert!(masks[0].mask.count() > 0);
        assert_eq!(masks[0].mask.overlap(&masks[1].mask), 0);
    }

    #[test]
    fn raster_area_matches_analytic_area() {
        // Oracle: count pixel centers inside a circle of radius 10 px.
        let geom = ImageGeometry::default();
        let l = Lumen {
            branch: 0,
            center: (0.37 * geom.pixel_pitch, 12.0),
            semi_axes: (10.0 * geom.pixel_pitch, 10.0 * geom.pixel_pitch),
            orientation: 0.0,
            clipped: false,
        };
        let area = rasterize_lumen(&l, &geom).count() as f64;
        let analytic = std::f64::consts::PI * 100.0;
        assert!((area - analytic).abs() / analytic < 0.03, "area {area}");
    }

    #[test]
    fn raster_area_converges_with_finer_pitch() {
        let l = Lumen {
            branch: 0,
            center: (0.11, 6.0),
            semi_axes: (2.3, 1.4),
            orientation: 0.6,
            clipped: false,
        };
        let err = |pitch: f64| {
            let geom = ImageGeometry::new(
                (20.0 / pitch) as usize,
                (12.0 / pitch) as usize,
                pitch,
            )
            .unwrap();
            let area = rasterize_lumen(&l, &geom).count() as f64 * pitch * pitch;
            (area - l.area_mm2()).abs() / l.area_mm2()
        };
        let coarse = err(0.2);
        let fine = err(0.02);
        assert!(fine < coarse, "fine {fine} coarse {coarse}");
        assert!(fine < 0.005);
    }
}
