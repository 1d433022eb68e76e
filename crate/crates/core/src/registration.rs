//! Plane-to-plane matching across scenes and the source→target transforms
//! used for every cross-scene lookup.

use std::fmt::Write as _;

use nalgebra::{Isometry3, Matrix3, Point2, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};

use crate::geometry::{PlaneFrame, PlanePose};
use crate::planesdf::{HeightMap, PlaneSdf};

/// Rigid map between the two scenes for one plane pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTransform {
    /// World-frame snap taking the source plane onto the target plane.
    pub world: Isometry3<f64>,
    /// Source plane-local coordinates to target plane-local coordinates.
    pub local: Isometry3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanePairing {
    pub source_id: usize,
    pub target_id: usize,
    pub cosine: f64,
    pub offset_gap: f64,
    pub transform: RelativeTransform,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub pairings: Vec<PlanePairing>,
    /// Source planes with no partner (whole-plane new).
    pub unmatched_source: Vec<usize>,
    pub unmatched_target: Vec<usize>,
}

/// The pose gate: `n·n' ≥ δ_n` and `|d − d'| ≤ δ_d`.
pub fn admits(cosine: f64, offset_gap: f64, delta_n: f64, delta_d: f64) -> bool {
    cosine >= delta_n && offset_gap <= delta_d
}

/// Greedy one-to-one matching of plane SDFs by pose.
pub fn match_planes(source: &[PlaneSdf], target: &[PlaneSdf], delta_n: f64, delta_d: f64) -> MatchResult {
    let s: Vec<(usize, PlaneFrame)> = source.iter().map(|p| (p.id, p.frame)).collect();
    let t: Vec<(usize, PlaneFrame)> = target.iter().map(|p| (p.id, p.frame)).collect();
    match_frames(&s, &t, delta_n, delta_d)
}

/// Matching on bare `(id, frame)` lists. Admitted pairs are taken in order of
/// decreasing cosine, then increasing offset gap, then ids; each plane is
/// used at most once.
pub fn match_frames(
    source: &[(usize, PlaneFrame)],
    target: &[(usize, PlaneFrame)],
    delta_n: f64,
    delta_d: f64,
) -> MatchResult {
    let mut cands = Vec::new();
    for (si, (_, sf)) in source.iter().enumerate() {
        for (ti, (_, tf)) in target.iter().enumerate() {
            let cosine = sf.w.dot(&tf.w);
            let gap = (sf.offset - tf.offset).abs();
            if admits(cosine, gap, delta_n, delta_d) {
                cands.push((si, ti, cosine, gap));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.3.total_cmp(&b.3))
            .then(source[a.0].0.cmp(&source[b.0].0))
            .then(target[a.1].0.cmp(&target[b.1].0))
    });
    let mut s_used = vec![false; source.len()];
    let mut t_used = vec![false; target.len()];
    let mut pairings = Vec::new();
    for (si, ti, cosine, offset_gap) in cands {
        if s_used[si] || t_used[ti] {
            continue;
        }
        s_used[si] = true;
        t_used[ti] = true;
        pairings.push(PlanePairing {
            source_id: source[si].0,
            target_id: target[ti].0,
            cosine,
            offset_gap,
            transform: relative_transform(&source[si].1, &target[ti].1),
        });
    }
    let unmatched = |list: &[(usize, PlaneFrame)], used: &[bool]| {
        list.iter()
            .zip(used)
            .filter(|(_, &u)| !u)
            .map(|((id, _), _)| *id)
            .collect()
    };
    MatchResult {
        unmatched_source: unmatched(source, &s_used),
        unmatched_target: unmatched(target, &t_used),
        pairings,
    }
}

/// Plane snap from `src` onto `tgt`.
///
/// The minimal rotation taking `n` to `n'` is applied about the source
/// plane's foot point `d·n`, which then lands on `d'·n'`. In-plane motion is
/// not corrected.
pub fn relative_transform(src: &PlaneFrame, tgt: &PlaneFrame) -> RelativeTransform {
    let rot = minimal_rotation(&src.w, &tgt.w);
    let foot_s = src.w * src.offset;
    let foot_t = tgt.w * tgt.offset;
    let world = Isometry3::from_parts(Translation3::from(foot_t - rot * foot_s), rot);
    let local = frame_isometry(tgt).inverse() * world * frame_isometry(src);
    RelativeTransform { world, local }
}

fn minimal_rotation(a: &Vector3<f64>, b: &Vector3<f64>) -> UnitQuaternion<f64> {
    let axis = a.cross(b);
    let s = axis.norm();
    let c = a.dot(b);
    if s < 1e-15 {
        return UnitQuaternion::identity();
    }
    UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis / s), s.atan2(c))
}

/// Plane-local to world.
fn frame_isometry(f: &PlaneFrame) -> Isometry3<f64> {
    let m = Matrix3::from_columns(&[f.u, f.v, f.w]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Isometry3::from_parts(Translation3::from(f.w * f.offset), rot)
}

/// Pose of a plane as seen through a world transform.
pub fn transform_pose(pose: &PlanePose, iso: &Isometry3<f64>) -> PlanePose {
    let n = iso.rotation * pose.normal;
    let p = iso * nalgebra::Point3::from(pose.normal * pose.offset);
    PlanePose::new(n, n.dot(&p.coords))
}

pub fn pairings_csv(pairings: &[PlanePairing]) -> String {
    let mut s = String::from("source_id,target_id,cosine,offset_gap\n");
    for p in pairings {
        let _ = writeln!(s, "{},{},{:.6},{:.6}", p.source_id, p.target_id, p.cosine, p.offset_gap);
    }
    s
}

/// In-plane ICP between the occupied cells of two height maps.
///
/// Starts from `init` (source-local → target-local) and returns it composed
/// with a rotation about the target normal and a translation within the
/// target plane, so the plane snap is preserved.
pub fn refine_in_plane(src: &HeightMap, tgt: &HeightMap, init: &Isometry3<f64>, iterations: usize) -> Isometry3<f64> {
    let occupied = |m: &HeightMap| -> Vec<Point2<f64>> {
        let mut out = Vec::new();
        for j in 0..m.ny() {
            for i in 0..m.nx() {
                if m.cells()[(i, j)] > 0.0 {
                    let c = m.cell_center(i, j);
                    out.push(Point2::new(c[0], c[1]));
                }
            }
        }
        out
    };
    let src_pts = occupied(src);
    let tgt_pts = occupied(tgt);
    if src_pts.len() < 3 || tgt_pts.len() < 3 {
        return *init;
    }
    let cs = tgt.cell_size();
    let reach = 4isize;
    let max_d2 = (reach as f64 * cs).powi(2);
    let mut angle = 0.0f64;
    let mut shift = Vector2::zeros();
    let project = |p: &Point2<f64>| {
        let q = init * nalgebra::Point3::new(p.x, p.y, 0.0);
        Point2::new(q.x, q.y)
    };
    let base: Vec<Point2<f64>> = src_pts.iter().map(project).collect();
    for _ in 0..iterations {
        let rot = nalgebra::Rotation2::new(angle);
        let mut pairs = Vec::new();
        for p in &base {
            let q = rot * p + shift;
            let ci = ((q.x - tgt.origin()[0]) / cs).floor() as isize;
            let cj = ((q.y - tgt.origin()[1]) / cs).floor() as isize;
            let mut best: Option<(f64, Point2<f64>)> = None;
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    if tgt.value(ci + di, cj + dj).is_some_and(|h| h > 0.0) {
                        let c = tgt.cell_center((ci + di) as usize, (cj + dj) as usize);
                        let c = Point2::new(c[0], c[1]);
                        let d2 = (c - q).norm_squared();
                        if d2 <= max_d2 && best.is_none_or(|(b, _)| d2 < b) {
                            best = Some((d2, c));
                        }
                    }
                }
            }
            if let Some((_, c)) = best {
                pairs.push((q, c));
            }
        }
        if pairs.len() < 3 {
            break;
        }
        let n = pairs.len() as f64;
        let ca = pairs.iter().fold(Vector2::zeros(), |s, (a, _)| s + a.coords) / n;
        let cb = pairs.iter().fold(Vector2::zeros(), |s, (_, b)| s + b.coords) / n;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (a, b) in &pairs {
            let (a, b) = (a.coords - ca, b.coords - cb);
            sxx += a.x * b.x + a.y * b.y;
            sxy += a.x * b.y - a.y * b.x;
        }
        let d_angle = sxy.atan2(sxx);
        let d_rot = nalgebra::Rotation2::new(d_angle);
        let d_shift = cb - d_rot * ca;
        angle += d_angle;
        shift = d_rot * shift + d_shift;
        if d_angle.abs() < 1e-9 && d_shift.norm() < 1e-9 {
            break;
        }
    }
    let planar = Isometry3::from_parts(
        Translation3::new(shift.x, shift.y, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
    );
    planar * init
}
