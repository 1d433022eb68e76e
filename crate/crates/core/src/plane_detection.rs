//! Horizontal / vertical plane extraction by sequential seeded RANSAC.

use std::collections::HashSet;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::grid::{component_cells, dilate_square, label_components, Grid2};
use crate::geometry::{normalize_pose, Orientation, PlanePose};
use crate::scene_io::PointCloud;
use crate::validate3d::eigen::SymmetricEigen3;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionParams {
    pub inlier_tolerance: f64,
    pub min_inliers: usize,
    pub orientation_tolerance_rad: f64,
    pub min_plane_area: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl From<&PipelineConfig> for DetectionParams {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            inlier_tolerance: c.inlier_tolerance,
            min_inliers: c.min_inliers,
            orientation_tolerance_rad: c.orientation_tolerance_rad(),
            min_plane_area: c.min_plane_area,
            iterations: c.ransac_iterations,
            seed: c.seed,
        }
    }
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedPlane {
    /// Rank in the output (0 = most inliers).
    pub id: usize,
    pub pose: PlanePose,
    /// Sorted indices into the source cloud.
    pub inliers: Vec<usize>,
    pub orientation: Orientation,
    /// Area of the largest connected inlier patch, estimated on an occupancy
    /// raster of at least 2 cm (m²).
    pub support_area: f64,
}

const AREA_CELL: f64 = 0.02;
const SCORE_SAMPLE: usize = 4000;
const MAX_ROUNDS: usize = 32;

/// Extracts planes largest-first; each extracted plane's inliers are removed
/// before the next search, so inlier sets are disjoint. Candidates that are
/// neither horizontal nor vertical, or that cover less than the minimum
/// area, are discarded (their points are removed as well).
pub fn detect_planes(cloud: &PointCloud, params: &DetectionParams) -> Vec<DetectedPlane> {
    let pts = &cloud.points;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    let mut planes = Vec::new();

    for _ in 0..MAX_ROUNDS {
        if remaining.len() < params.min_inliers.max(3) {
            break;
        }
        let Some(candidate) = best_hypothesis(pts, &remaining, params, &mut rng) else {
            break;
        };
        let (pose, inliers) = refine(pts, &remaining, candidate, params.inlier_tolerance);
        if inliers.len() < params.min_inliers {
            break;
        }
        let taken: HashSet<usize> = inliers.iter().copied().collect();
        remaining.retain(|i| !taken.contains(i));

        let Some(orientation) = pose.orientation(params.orientation_tolerance_rad) else {
            continue;
        };
        let support_area = support_area(pts, &inliers, &pose);
        if support_area < params.min_plane_area {
            continue;
        }
        planes.push(DetectedPlane {
            id: 0,
            pose,
            inliers,
            orientation,
            support_area,
        });
    }

    planes.sort_by(|a, b| b.inliers.len().cmp(&a.inliers.len()));
    for (i, p) in planes.iter_mut().enumerate() {
        p.id = i;
    }
    planes
}

fn count_inliers(pts: &[Point3<f64>], idx: &[usize], pose: &PlanePose, tol: f64) -> usize {
    idx.iter()
        .filter(|&&i| pose.signed_distance(&pts[i]).abs() <= tol)
        .count()
}

/// Best axis-aligned hypothesis scored on a fixed random subsample, with
/// the usual adaptive stopping rule (99.9 % confidence).
fn best_hypothesis(
    pts: &[Point3<f64>],
    remaining: &[usize],
    params: &DetectionParams,
    rng: &mut ChaCha8Rng,
) -> Option<PlanePose> {
    let sample: Vec<usize> = if remaining.len() <= SCORE_SAMPLE {
        remaining.to_vec()
    } else {
        (0..SCORE_SAMPLE)
            .map(|_| remaining[rng.random_range(0..remaining.len())])
            .collect()
    };
    let mut best: Option<(usize, PlanePose)> = None;
    let mut needed = params.iterations as f64;
    let mut it = 0usize;
    while (it as f64) < needed.min(params.iterations as f64) {
        it += 1;
        let a = pts[remaining[rng.random_range(0..remaining.len())]];
        let b = pts[remaining[rng.random_range(0..remaining.len())]];
        let c = pts[remaining[rng.random_range(0..remaining.len())]];
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if !(len > 1e-12) {
            continue;
        }
        let n = n / len;
        let pose = PlanePose::new(n, n.dot(&a.coords));
        if pose.orientation(params.orientation_tolerance_rad).is_none() {
            continue;
        }
        let score = count_inliers(pts, &sample, &pose, params.inlier_tolerance);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, pose));
            let w = score as f64 / sample.len() as f64;
            let p_good = w.powi(3);
            if p_good >= 1.0 {
                needed = 0.0;
            } else if p_good > 0.0 {
                needed = (1e-3f64).ln() / (1.0 - p_good).ln();
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Least-squares refit. The fit uses a robust subset (residuals within
/// three scaled MADs), while the reported inliers use the full tolerance.
fn refine(
    pts: &[Point3<f64>],
    remaining: &[usize],
    start: PlanePose,
    tol: f64,
) -> (PlanePose, Vec<usize>) {
    let mut pose = start;
    for _ in 0..3 {
        let inliers: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| pose.signed_distance(&pts[i]).abs() <= tol)
            .collect();
        if inliers.len() < 3 {
            break;
        }
        let mut res: Vec<f64> = inliers
            .iter()
            .map(|&i| pose.signed_distance(&pts[i]))
            .collect();
        let median = median(&mut res.clone());
        for r in &mut res {
            *r = (*r - median).abs();
        }
        let mad = median_of(&mut res.clone());
        let cut = (3.0 * 1.4826 * mad).max(1e-9);
        let core: Vec<usize> = inliers
            .iter()
            .copied()
            .filter(|&i| (pose.signed_distance(&pts[i]) - median).abs() <= cut)
            .collect();
        match fit_plane(pts, if core.len() >= 3 { &core } else { &inliers }) {
            Some(p) => pose = p,
            None => break,
        }
    }
    let pose = normalize_pose(pose).unwrap_or(pose);
    let inliers = remaining
        .iter()
        .copied()
        .filter(|&i| pose.signed_distance(&pts[i]).abs() <= tol)
        .collect();
    (pose, inliers)
}

fn median(v: &mut [f64]) -> f64 {
    median_of(v)
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Total least squares: normal = eigenvector of the smallest covariance
/// eigenvalue, through the centroid.
pub fn fit_plane(pts: &[Point3<f64>], idx: &[usize]) -> Option<PlanePose> {
    if idx.len() < 3 {
        return None;
    }
    let n = idx.len() as f64;
    let centroid = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + pts[i].coords) / n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = pts[i].coords - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen3::new(&(cov / n));
    let normal = eig.vectors[2];
    Some(PlanePose::new(normal, normal.dot(&centroid)))
}

/// Area of the largest connected patch of the inlier footprint after a
/// one-cell morphological opening, so that disjoint coplanar faces joined by
/// thin strips (e.g. object sides standing on a table edge) do not add up to
/// a plane.
fn support_area(pts: &[Point3<f64>], inliers: &[usize], pose: &PlanePose) -> f64 {
    if inliers.is_empty() {
        return 0.0;
    }
    let frame = pose.frame();
    let local: Vec<Point3<f64>> = inliers.iter().map(|&i| frame.to_local(&pts[i])).collect();
    // Sparse clouds get a coarser raster, about three point spacings wide,
    // so that cells inside the plane are rarely empty by chance.
    let (lo, hi) = local.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), q| ([lo[0].min(q.x), lo[1].min(q.y)], [hi[0].max(q.x), hi[1].max(q.y)]),
    );
    let spacing = ((hi[0] - lo[0]) * (hi[1] - lo[1]) / local.len() as f64).sqrt();
    let cell = AREA_CELL.max(3.0 * spacing);
    let cells: Vec<(i64, i64)> = local
        .iter()
        .map(|q| ((q.x / cell).floor() as i64, (q.y / cell).floor() as i64))
        .collect();
    let (x0, y0) = cells.iter().fold((i64::MAX, i64::MAX), |(a, b), &(x, y)| (a.min(x), b.min(y)));
    let (x1, y1) = cells.iter().fold((i64::MIN, i64::MIN), |(a, b), &(x, y)| (a.max(x), b.max(y)));
    // One empty cell of padding on every side keeps the erosion honest at
    // the raster border.
    let (nx, ny) = ((x1 - x0 + 3) as usize, (y1 - y0 + 3) as usize);
    let mut mask = Grid2::filled(nx, ny, false);
    for &(x, y) in &cells {
        mask[((x - x0 + 1) as usize, (y - y0 + 1) as usize)] = true;
    }
    let eroded = dilate_square(&mask.map(|&m| !m), 1).map(|&m| !m);
    let (labels, count) = label_components(&eroded);
    let Some(core) = component_cells(&labels, count).into_iter().max_by_key(Vec::len) else {
        return 0.0;
    };
    let mut seed = Grid2::filled(nx, ny, false);
    for c in core {
        seed.as_mut_slice()[c] = true;
    }
    let opened = dilate_square(&seed, 1);
    let n = opened
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(&o, &m)| o && m)
        .count();
    n as f64 * cell * cell
}
