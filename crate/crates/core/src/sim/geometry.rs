//! Analytic vessel geometry.
//!
//! A vessel cavity is a solid of revolution around the local +y axis. Its
//! wall is the polyline through `(height, inner radius)` profile points,
//! closed at the bottom by a flat floor and open at the top (the mouth).
//! All distance queries reduce to 2D work in the `(radial, height)`
//! half-plane.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("profile needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("profile heights must be strictly increasing (index {0})")]
    NonMonotonic(usize),
    #[error("profile radius must be positive and finite (index {0})")]
    BadRadius(usize),
    #[error("wall thickness must be non-negative")]
    BadWall,
}

/// Rigid placement of a vessel: local origin is the centre of the cavity floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Pose {
            position,
            orientation: Quat::identity(),
        }
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.position + self.orientation * local
    }

    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        self.orientation.inverse() * (world - self.position)
    }

    /// Local +y expressed in world coordinates.
    pub fn axis(&self) -> Vec3 {
        self.orientation * Vec3::y()
    }

    /// Moves a world point rigidly from this pose to `next`; contents ride
    /// along with a moving vessel this way.
    pub fn carry(&self, next: &Pose, world: &Vec3) -> Vec3 {
        next.to_world(&self.to_local(world))
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::at(Vec3::zeros())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VesselKind {
    TestTube,
    Bottle,
    PipetteBody,
}

impl VesselKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VesselKind::TestTube => "test_tube",
            VesselKind::Bottle => "bottle",
            VesselKind::PipetteBody => "pipette_body",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselProfile {
    pub kind: VesselKind,
    points: Vec<(f64, f64)>,
    pub wall_thickness: f64,
}

/// Result of a cavity distance query in the vessel's local frame.
#[derive(Clone, Copy, Debug)]
pub struct CavityContact {
    /// Signed distance to the wall, positive inside the cavity.
    pub distance: f64,
    /// Unit normal pointing into the cavity, local frame.
    pub normal: Vec3,
}

impl VesselProfile {
    pub fn new(
        kind: VesselKind,
        points: Vec<(f64, f64)>,
        wall_thickness: f64,
    ) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        for (i, &(h, r)) in points.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(GeometryError::BadRadius(i));
            }
            if !h.is_finite() || (i > 0 && h <= points[i - 1].0) {
                return Err(GeometryError::NonMonotonic(i));
            }
        }
        if !(wall_thickness.is_finite() && wall_thickness >= 0.0) {
            return Err(GeometryError::BadWall);
        }
        Ok(VesselProfile {
            kind,
            points,
            wall_thickness,
        })
    }

    /// Straight cylinder of the given inner radius and height.
    pub fn cylinder(kind: VesselKind, radius: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(kind, vec![(0.0, radius), (height, radius)], 0.001)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn floor_z(&self) -> f64 {
        self.points[0].0
    }

    pub fn mouth_z(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn mouth_radius(&self) -> f64 {
        self.points[self.points.len() - 1].1
    }

    /// Inner radius at height `h`, clamped to the profile ends.
    pub fn radius_at(&self, h: f64) -> f64 {
        let pts = &self.points;
        if h <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let (h0, r0) = w[0];
            let (h1, r1) = w[1];
            if h <= h1 {
                let t = (h - h0) / (h1 - h0);
                return r0 + t * (r1 - r0);
            }
        }
        self.mouth_radius()
    }

    /// Angle subtended by the mouth radius seen from the floor centre.
    pub fn rim_angle(&self) -> f64 {
        self.mouth_radius()
            .atan2(self.mouth_z() - self.floor_z())
    }

    /// Signed distance in the local frame; see [`sdf_vessel`].
    pub fn sdf_local(&self, p: &Vec3) -> f64 {
        let rho = (p.x * p.x + p.z * p.z).sqrt();
        if p.y >= self.mouth_z() {
            return self.mouth_radius() - rho;
        }
        self.wall_query(rho, p.y).0
    }

    /// Distance and inward normal for points below the mouth plane.
    pub fn contact_local(&self, p: &Vec3) -> CavityContact {
        let rho = (p.x * p.x + p.z * p.z).sqrt();
        let (distance, n2) = self.wall_query(rho, p.y);
        let radial = if rho > 1e-12 {
            Vec3::new(p.x / rho, 0.0, p.z / rho)
        } else {
            Vec3::x()
        };
        let normal = radial * n2.x + Vec3::y() * n2.y;
        CavityContact { distance, normal }
    }

    /// 2D query in the (rho, h) half-plane: signed distance and the inward
    /// unit normal of the nearest wall feature.
    fn wall_query(&self, rho: f64, h: f64) -> (f64, Vector2<f64>) {
        let q = Vector2::new(rho, h);
        let floor = self.floor_z();
        let mut best = f64::INFINITY;
        let mut best_point = Vector2::new(0.0, floor);
        let mut best_seg_normal = Vector2::new(0.0, 1.0);

        let mut consider = |a: Vector2<f64>, b: Vector2<f64>| {
            let ab = b - a;
            let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let c = a + ab * t;
            let d = (q - c).norm();
            if d < best {
                best = d;
                best_point = c;
                let dir = ab / ab.norm();
                best_seg_normal = Vector2::new(-dir.y, dir.x);
            }
        };

        consider(
            Vector2::new(0.0, floor),
            Vector2::new(self.points[0].1, floor),
        );
        for w in self.points.windows(2) {
            consider(Vector2::new(w[0].1, w[0].0), Vector2::new(w[1].1, w[1].0));
        }

        let inside = h > floor && h < self.mouth_z() && rho < self.radius_at(h);
        let normal = if best > 1e-12 {
            let n = (q - best_point) / best;
            if inside {
                n
            } else {
                -n
            }
        } else {
            best_seg_normal
        };
        (if inside { best } else { -best }, normal)
    }

    /// True when `local` is strictly inside the cavity below the mouth.
    pub fn contains_local(&self, local: &Vec3) -> bool {
        local.y < self.mouth_z() && self.sdf_local(local) > 0.0
    }
}

/// Signed distance from world point `p` to the cavity wall of a vessel.
///
/// Positive inside the free cavity, zero on the wall, negative inside the
/// wall or outside below the rim. Above the mouth plane only the lateral rim
/// matters: the value is `mouth_radius - radial distance`.
pub fn sdf_vessel(profile: &VesselProfile, pose: &Pose, p: &Vec3) -> f64 {
    profile.sdf_local(&pose.to_local(p))
}

/// Angle between a pose's local up axis and world up, in `[0, pi]`.
pub fn tilt_angle(pose: &Pose) -> f64 {
    pose.axis().dot(&Vec3::y()).clamp(-1.0, 1.0).acos()
}

/// Orientation tilted by `degrees` about world z; positive tips +y toward +x.
pub fn tilt_orientation(degrees: f64) -> Quat {
    Quat::from_axis_angle(&Vector3::z_axis(), -degrees.to_radians())
}
