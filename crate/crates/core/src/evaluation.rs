//! Point- and cluster-level scoring of detections against labeled ground
//! truth.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::Point3;

use crate::scene_io::{LabeledPointCloud, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScore {
    pub id: u32,
    pub gt_points: usize,
    /// GT points with a detection within the match radius.
    pub matched_points: usize,
    pub missed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub detected_points: usize,
    pub gt_points: usize,
    pub true_positives: usize,
    pub gt_objects: usize,
    pub missed_objects: usize,
    pub detected_clusters: usize,
    pub wrong_clusters: usize,
    /// Recall was defined as 1 because the ground truth is empty.
    pub vacuous_recall: bool,
    pub objects: Vec<ObjectScore>,
}

impl EvaluationReport {
    /// Fraction of GT objects with at least one matched point.
    pub fn object_recall(&self) -> f64 {
        if self.gt_objects == 0 {
            1.0
        } else {
            (self.gt_objects - self.missed_objects) as f64 / self.gt_objects as f64
        }
    }

    /// Fraction of detected clusters that touch a GT object.
    pub fn object_precision(&self) -> f64 {
        if self.detected_clusters == 0 {
            1.0
        } else {
            (self.detected_clusters - self.wrong_clusters) as f64 / self.detected_clusters as f64
        }
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "precision: {:.6}", self.precision);
        let _ = writeln!(s, "recall: {:.6}", self.recall);
        let _ = writeln!(s, "f1: {:.6}", self.f1);
        let _ = writeln!(s, "detected_points: {}", self.detected_points);
        let _ = writeln!(s, "gt_points: {}", self.gt_points);
        let _ = writeln!(s, "true_positives: {}", self.true_positives);
        let _ = writeln!(s, "gt_objects: {}", self.gt_objects);
        let _ = writeln!(s, "missed_objects: {}", self.missed_objects);
        let _ = writeln!(s, "detected_clusters: {}", self.detected_clusters);
        let _ = writeln!(s, "wrong_clusters: {}", self.wrong_clusters);
        let _ = writeln!(s, "vacuous_recall: {}", self.vacuous_recall);
        for o in &self.objects {
            let _ = writeln!(
                s,
                "object {}: gt_points={} matched={} missed={}",
                o.id, o.gt_points, o.matched_points, o.missed
            );
        }
        s
    }

    pub const CSV_HEADER: &'static str =
        "precision,recall,f1,detected_points,gt_points,gt_objects,missed_objects,detected_clusters,wrong_clusters";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{},{},{},{},{},{}",
            self.precision,
            self.recall,
            self.f1,
            self.detected_points,
            self.gt_points,
            self.gt_objects,
            self.missed_objects,
            self.detected_clusters,
            self.wrong_clusters
        )
    }
}

/// Uniform hash grid for fixed-radius neighbor queries.
struct PointIndex<'a> {
    points: &'a [Point3<f64>],
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> PointIndex<'a> {
    fn new(points: &'a [Point3<f64>], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(key(p, cell)).or_default().push(i);
        }
        Self { points, cell, buckets }
    }

    fn any_within(&self, q: &Point3<f64>, r: f64) -> bool {
        let k = key(q, self.cell);
        let r2 = r * r;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if b.iter().any(|&i| (self.points[i] - q).norm_squared() <= r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

fn key(p: &Point3<f64>, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

/// Scores detected points against ground-truth changed points.
///
/// A detection is a true positive if a GT point lies within `match_radius`;
/// a GT point is recalled if a detection lies within it. Detections are
/// clustered by 26-connected occupancy of a grid with cell `cluster_cell`;
/// a cluster with no true positive is wrong. A GT object with no recalled
/// point is missed.
pub fn score(
    detected: &PointCloud,
    ground_truth: &LabeledPointCloud,
    match_radius: f64,
    cluster_cell: f64,
) -> EvaluationReport {
    let det = &detected.points;
    let gt = &ground_truth.cloud.points;
    let gt_index = PointIndex::new(gt, match_radius);
    let det_index = PointIndex::new(det, match_radius);

    let tp_flags: Vec<bool> = det.iter().map(|p| gt_index.any_within(p, match_radius)).collect();
    let true_positives = tp_flags.iter().filter(|&&t| t).count();
    let recalled: Vec<bool> = gt.iter().map(|p| det_index.any_within(p, match_radius)).collect();
    let recalled_count = recalled.iter().filter(|&&r| r).count();

    let mut per_object: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (l, r) in ground_truth.labels.iter().zip(&recalled) {
        let e = per_object.entry(*l).or_default();
        e.0 += 1;
        e.1 += *r as usize;
    }
    let objects: Vec<ObjectScore> = per_object
        .into_iter()
        .map(|(id, (n, m))| ObjectScore {
            id,
            gt_points: n,
            matched_points: m,
            missed: m == 0,
        })
        .collect();
    let missed_objects = objects.iter().filter(|o| o.missed).count();

    let clusters = cluster_points(det, cluster_cell);
    let detected_clusters = clusters.len();
    let wrong_clusters = clusters
        .iter()
        .filter(|c| !c.iter().any(|&i| tp_flags[i]))
        .count();

    let (precision, recall, vacuous_recall) = match (det.is_empty(), gt.is_empty()) {
        (true, true) => (1.0, 1.0, false),
        (_, true) => (0.0, 1.0, true),
        (true, false) => (0.0, 0.0, false),
        (false, false) => (
            true_positives as f64 / det.len() as f64,
            recalled_count as f64 / gt.len() as f64,
            false,
        ),
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvaluationReport {
        precision,
        recall,
        f1,
        detected_points: det.len(),
        gt_points: gt.len(),
        true_positives,
        gt_objects: objects.len(),
        missed_objects,
        detected_clusters,
        wrong_clusters,
        vacuous_recall,
        objects,
    }
}

/// Point indices grouped by 26-connected occupied grid cells, ordered by
/// each cluster's smallest point index.
pub fn cluster_points(points: &[Point3<f64>], cell: f64) -> Vec<Vec<usize>> {
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p, cell)).or_default().push(i);
    }
    let mut seen: HashMap<[i64; 3], bool> = cells.keys().map(|k| (*k, false)).collect();
    let mut out = Vec::new();
    for p in points {
        let start = key(p, cell);
        if seen[&start] {
            continue;
        }
        seen.insert(start, true);
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            members.extend_from_slice(&cells[&c]);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                        if let Some(s) = seen.get_mut(&n) {
                            if !*s {
                                *s = true;
                                queue.push_back(n);
                            }
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}
