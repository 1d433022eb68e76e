//! Plane poses and plane-local coordinate frames.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Oriented plane `{p : n·p = d}` with unit normal `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePose {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl PlanePose {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Signed distance of `p` from the plane along its normal.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    /// Horizontal if the normal is within `tolerance_rad` of ±z, vertical if
    /// it is within `tolerance_rad` of the xy-plane, `None` otherwise.
    pub fn orientation(&self, tolerance_rad: f64) -> Option<Orientation> {
        let nz = self.normal.z.abs() / self.normal.norm();
        if nz >= tolerance_rad.cos() {
            Some(Orientation::Horizontal)
        } else if nz <= tolerance_rad.sin() {
            Some(Orientation::Vertical)
        } else {
            None
        }
    }

    pub fn frame(&self) -> PlaneFrame {
        PlaneFrame::from_pose(self)
    }
}

/// Canonicalize a pose: unit normal, `n_z > 0` for horizontal-leaning planes
/// and the lexicographically larger of `±n` otherwise. The offset follows the
/// normal so the described point set is unchanged.
pub fn normalize_pose(pose: PlanePose) -> Result<PlanePose> {
    let norm = pose.normal.norm();
    if !(norm > 0.0) || !norm.is_finite() || !pose.offset.is_finite() {
        return Err(Error::Validation(format!(
            "plane normal must be finite and non-zero, got {:?}",
            pose.normal
        )));
    }
    let mut n = pose.normal / norm;
    let mut d = pose.offset / norm;
    let flip = if n.z.abs() >= std::f64::consts::FRAC_1_SQRT_2 {
        n.z < 0.0
    } else {
        lexicographically_less(&n, &(-n))
    };
    if flip {
        n = -n;
        d = -d;
    }
    Ok(PlanePose::new(n, d))
}

fn lexicographically_less(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    for i in 0..3 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Right-handed orthonormal frame anchored on a plane: `u`, `v` span the
/// plane and `w` is the plane normal. Local coordinates are
/// `(u·p, v·p, n·p − d)`, so local height 0 is the plane itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFrame {
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
    pub offset: f64,
}

impl PlaneFrame {
    pub fn from_pose(pose: &PlanePose) -> Self {
        let w = pose.normal.normalize();
        let reference = if w.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = (reference - w * reference.dot(&w)).normalize();
        let v = w.cross(&u);
        Self {
            u,
            v,
            w,
            offset: pose.offset,
        }
    }

    pub fn pose(&self) -> PlanePose {
        PlanePose::new(self.w, self.offset)
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::new(
            self.u.dot(&p.coords),
            self.v.dot(&p.coords),
            self.w.dot(&p.coords) - self.offset,
        )
    }

    pub fn to_world(&self, q: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.u * q.x + self.v * q.y + self.w * (q.z + self.offset))
    }
}
