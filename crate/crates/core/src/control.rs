//! Probe control: confidence-weighted centerline, orientation servo, lateral
//! vessel centering, spring-damper contact and scan advance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ConfidenceMap, ContactModel, ImageGeometry};
use crate::phantom::SurfaceProfile;
use crate::scalar::Scalar;
use crate::segmentation::SegmentationResult;

/// Probe pose and contact force. `(x, y, z)` is the transducer face center in
/// world mm, `theta` the rotation about the probe y-axis (positive raises the
/// +x edge) and `force` the normal contact force in N.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub force: f64,
}

impl ProbeState {
    pub fn at(x: f64, y: f64, z: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            z,
            theta,
            force: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    /// Curvature parameter R, mm.
    pub curvature_mm: f64,
    /// Angular servo gain, 1/s.
    pub k_theta: f64,
    /// Lateral centering gain, 1/s.
    pub k_x: f64,
    pub scan_speed_mm_s: f64,
    /// Contact spring, N/mm.
    pub stiffness_n_per_mm: f64,
    /// Contact damper, N s/mm.
    pub damping_ns_per_mm: f64,
    pub target_force_n: f64,
    /// `|d_c|` below this leaves `theta` untouched, mm.
    pub angle_deadband_mm: f64,
    /// Target offsets below this leave `x` untouched, mm.
    pub lateral_deadband_mm: f64,
    pub theta_limit: f64,
    /// Columns whose face-to-skin gap exceeds this are decoupled, mm.
    pub gap_max_mm: f64,
    /// Orientation correction on/off. When off `theta_c` is still computed.
    pub correction: bool,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            curvature_mm: 100.0,
            k_theta: 1.0,
            k_x: 1.5,
            scan_speed_mm_s: 10.0,
            stiffness_n_per_mm: 5.0,
            damping_ns_per_mm: 1.0,
            target_force_n: 5.0,
            angle_deadband_mm: 0.3,
            lateral_deadband_mm: 0.1,
            theta_limit: 0.35,
            gap_max_mm: 0.5,
            correction: true,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("curvature_mm", self.curvature_mm),
            ("k_theta", self.k_theta),
            ("k_x", self.k_x),
            ("stiffness_n_per_mm", self.stiffness_n_per_mm),
            ("damping_ns_per_mm", self.damping_ns_per_mm),
            ("theta_limit", self.theta_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("scan_speed_mm_s", self.scan_speed_mm_s),
            ("target_force_n", self.target_force_n),
            ("angle_deadband_mm", self.angle_deadband_mm),
            ("lateral_deadband_mm", self.lateral_deadband_mm),
            ("gap_max_mm", self.gap_max_mm),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Penetration depth at which the spring delivers the target force.
    pub fn target_penetration_mm(&self) -> f64 {
        self.target_force_n / self.stiffness_n_per_mm
    }
}

/// Depth-weighted lateral centroid of the confidence map, in px:
///
/// `x_c = sum x * C(x, y) * y / sum C(x, y) * y`
///
/// The face row has weight zero. Moments are taken about the image center with
/// mirrored columns paired, so a laterally symmetric map yields the center
/// exactly.
pub fn confidence_centroid<T: Scalar>(cmap: &ConfidenceMap<T>) -> Result<T> {
    let v = &cmap.values;
    let w = v.width();
    let center = T::lit(cmap.geometry.center_column());
    let mut num = T::zero();
    let mut den = T::zero();
    for y in 1..v.depth() {
        let wy = T::from_usize_lossy(y);
        let row = v.row(y);
        let mut row_num = T::zero();
        for x in 0..w / 2 {
            let arm = T::from_usize_lossy(x) - center;
            row_num = row_num + arm * (row[x] - row[w - 1 - x]);
        }
        let row_den = row.iter().fold(T::zero(), |acc, &c| acc + c);
        num = num + row_num * wy;
        den = den + row_den * wy;
    }
    if den <= T::zero() {
        return Err(Error::Degenerate(
            "confidence map carries no depth-weighted mass".into(),
        ));
    }
    Ok(center + num / den)
}

/// Signed distance from the image centerline, mm. Positive right of center.
pub fn centerline_offset<T: Scalar>(x_c: T, geom: &ImageGeometry) -> T {
    (x_c - T::lit(geom.center_column())) * T::lit(geom.pixel_pitch)
}

/// `theta_c = atan(d_c / R)`.
pub fn correction_angle<T: Scalar>(d_c: T, curvature: T) -> Result<T> {
    if !(curvature > T::zero()) {
        return Err(Error::Domain(format!(
            "curvature parameter must be positive, got {curvature}"
        )));
    }
    Ok((d_c / curvature).atan())
}

/// Servo quantities derived from one confidence map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoReading {
    pub x_c: f64,
    pub d_c: f64,
    pub theta_c: f64,
}

pub fn servo_reading<T: Scalar>(cmap: &ConfidenceMap<T>, curvature_mm: f64) -> Result<ServoReading> {
    let x_c = confidence_centroid(cmap)?;
    let d_c = centerline_offset(x_c, &cmap.geometry);
    let theta_c = correction_angle(d_c, T::lit(curvature_mm))?;
    Ok(ServoReading {
        x_c: x_c.to_f64_lossy(),
        d_c: d_c.to_f64_lossy(),
        theta_c: theta_c.to_f64_lossy(),
    })
}

/// Face-to-skin coupling for every image column plus the deepest penetration.
#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub model: ContactModel,
    pub penetration_mm: f64,
}

impl Contact {
    pub fn force(&self, params: &ControlParams) -> f64 {
        params.stiffness_n_per_mm * self.penetration_mm
    }
}

const RAY_REACH_MM: f64 = 60.0;
const RAY_BISECTIONS: usize = 48;

/// Casts one ray per image column from the transducer face along the beam
/// direction and returns the signed distance to the skin. Negative gaps mean
/// the face is pressed into the tissue; columns that never meet the surface
/// get an infinite gap.
pub fn contact(
    probe: &ProbeState,
    surface: &SurfaceProfile,
    geom: &ImageGeometry,
    gap_max_mm: f64,
) -> Contact {
    let (s, c) = probe.theta.sin_cos();
    let lateral = [c, s];
    let axial = [s, -c];
    // Height of the ray point above the skin; air outside the extent.
    let above = |px: f64, pz: f64, t: f64| -> f64 {
        let x = px + t * axial[0];
        let z = pz + t * axial[1];
        match surface.height(x, probe.y) {
            Ok(h) => z - h,
            Err(_) => f64::INFINITY,
        }
    };
    let gaps_mm: Vec<f64> = (0..geom.width_px)
        .map(|col| {
            let u = geom.column_to_lateral(col as f64);
            let px = probe.x + u * lateral[0];
            let pz = probe.z + u * lateral[1];
            let (mut lo, mut hi) = (-RAY_REACH_MM, RAY_REACH_MM);
            if above(px, pz, hi) > 0.0 {
                return f64::INFINITY;
            }
            if above(px, pz, lo) <= 0.0 {
                return lo;
            }
            for _ in 0..RAY_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if above(px, pz, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let deepest = gaps_mm.iter().copied().fold(f64::INFINITY, f64::min);
    Contact {
        penetration_mm: (-deepest).max(0.0),
        model: ContactModel {
            gaps_mm,
            g_max_mm: gap_max_mm,
        },
    }
}

/// Places the probe along world z so the spring is at its target force.
pub fn seat_probe(
    probe: &ProbeState,
    surface: &SurfaceProfile,
    geom: &ImageGeometry,
    params: &ControlParams,
) -> Result<ProbeState> {
    let target = params.target_penetration_mm();
    let mut p = *probe;
    for _ in 0..64 {
        let c = contact(&p, surface, geom, params.gap_max_mm);
        let deepest = -c.model.gaps_mm.iter().copied().fold(f64::INFINITY, f64::min);
        if !deepest.is_finite() {
            return Err(Error::Domain(format!(
                "probe at ({:.2}, {:.2}) mm does not reach the surface",
                p.x, p.y
            )));
        }
        let err = deepest - target;
        if err.abs() < 1e-9 {
            p.force = c.force(params);
            return Ok(p);
        }
        p.z += err * p.theta.cos();
    }
    let c = contact(&p, surface, geom, params.gap_max_mm);
    p.force = c.force(params);
    Ok(p)
}

/// Result of one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub probe: ProbeState,
    /// `None` when the confidence map was degenerate and `theta` was held.
    pub servo: Option<ServoReading>,
    /// Coupling at the new pose, ready for the next frame.
    pub contact: Contact,
}

/// Advances the probe by one tick of length `dt` seconds.
pub fn step<T: Scalar>(
    probe: &ProbeState,
    cmap: &ConfidenceMap<T>,
    seg: &SegmentationResult,
    surface: &SurfaceProfile,
    params: &ControlParams,
    dt: f64,
) -> Result<ControlOutput> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let geom = &cmap.geometry;
    let servo = servo_reading(cmap, params.curvature_mm).ok();

    let mut next = *probe;
    if let Some(s) = servo {
        if params.correction && s.d_c.abs() >= params.angle_deadband_mm {
            next.theta = (probe.theta + params.k_theta * s.theta_c * dt)
                .clamp(-params.theta_limit, params.theta_limit);
        }
    }
    if let Some(target) = seg.selected_candidate() {
        let offset = (target.centroid.0 - geom.center_column()) * geom.pixel_pitch;
        if offset.abs() >= params.lateral_deadband_mm {
            next.x += params.k_x * offset * dt;
        }
    }
    next.y += params.scan_speed_mm_s * dt;

    let before = contact(&next, surface, geom, params.gap_max_mm);
    let force = before.force(params);
    next.z -= (params.target_force_n - force) / params.damping_ns_per_mm * dt;
    let after = contact(&next, surface, geom, params.gap_max_mm);
    next.force = after.force(params);
    Ok(ControlOutput {
        probe: next,
        servo,
        contact: after,
    })
}
