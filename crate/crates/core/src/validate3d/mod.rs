//! 3D confirmation of changed-blob candidates: key voxels at local maxima
//! of the Hessian determinant, eigenpair-histogram features compared across
//! the two volumes, and a per-blob similarity vote.

pub mod eigen;
pub mod feature;
pub mod hessian;

use std::fmt::Write as _;

use nalgebra::Isometry3;

pub use feature::{build_feature, similarity, BinThresholds, Feature, FeatureParams};
pub use hessian::hessian_at;

use crate::change2d::{BlobCandidate, CellState, ChangeMask};
use crate::config::PipelineConfig;
use crate::planesdf::{ObjectMap, PlaneSdf, SdfVolume};
use crate::scene_io::PointCloud;

/// Observed half-width a key voxel needs so every voxel of its 3×3×3
/// neighborhood has a Hessian.
const KEY_CLEARANCE: isize = hessian::SUPPORT + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationParams {
    pub feature: FeatureParams,
    pub alpha: f64,
    pub delta_blob: f64,
    pub doh_floor: f64,
    pub max_key_voxels: usize,
    pub similarity_bins: usize,
    pub missing_score: f64,
}

impl From<&PipelineConfig> for ValidationParams {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            feature: FeatureParams::from(c),
            alpha: c.alpha,
            delta_blob: c.delta_blob,
            doh_floor: c.doh_floor,
            max_key_voxels: c.max_key_voxels,
            similarity_bins: c.similarity_bins,
            missing_score: c.missing_score,
        }
    }
}

impl Default for ValidationParams {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyVoxel {
    pub voxel: [usize; 3],
    /// `|det H|` at the voxel.
    pub doh: f64,
}

/// Strict 3×3×3 local maxima of `|det H|` among the voxels above
/// `footprint` (cell indices on the volume's `(i, j)` grid), at least
/// `doh_floor`, sorted by descending `|det H|` (ties by index) and capped.
pub fn select_key_voxels(volume: &SdfVolume, footprint: &[usize], params: &ValidationParams) -> Vec<KeyVoxel> {
    let [nx, ny, nz] = volume.dims();
    if footprint.is_empty() || nx == 0 || ny == 0 {
        return Vec::new();
    }
    let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
    for &c in footprint {
        let (i, j) = (c % nx, c / nx);
        i0 = i0.min(i);
        j0 = j0.min(j);
        i1 = i1.max(i);
        j1 = j1.max(j);
    }
    // Determinants over the footprint box grown by one voxel.
    let lo = [i0 as isize - 1, j0 as isize - 1];
    let bw = (i1 - i0 + 3) as isize;
    let bh = (j1 - j0 + 3) as isize;
    let slot = |v: [isize; 3]| (((v[2] * bh) + (v[1] - lo[1])) * bw + (v[0] - lo[0])) as usize;
    let mut doh = vec![f64::NAN; (bw * bh) as usize * nz];
    for k in 0..nz as isize {
        for j in lo[1]..lo[1] + bh {
            for i in lo[0]..lo[0] + bw {
                if let Some(h) = hessian_at(volume, [i, j, k]) {
                    doh[slot([i, j, k])] = h.determinant().abs();
                }
            }
        }
    }
    let mut keys = Vec::new();
    for &c in footprint {
        let (i, j) = ((c % nx) as isize, (c / nx) as isize);
        for k in 0..nz as isize {
            let v = [i, j, k];
            if !volume.neighborhood_observed(v, KEY_CLEARANCE) {
                continue;
            }
            let d = doh[slot(v)];
            if !(d >= params.doh_floor) {
                continue;
            }
            let mut is_max = true;
            'nb: for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if (dx, dy, dz) != (0, 0, 0) && doh[slot([i + dx, j + dy, k + dz])] >= d {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
            }
            if is_max {
                keys.push(KeyVoxel {
                    voxel: [i as usize, j as usize, k as usize],
                    doh: d,
                });
            }
        }
    }
    keys.sort_by(|a, b| {
        b.doh
            .total_cmp(&a.doh)
            .then_with(|| [a.voxel[2], a.voxel[1], a.voxel[0]].cmp(&[b.voxel[2], b.voxel[1], b.voxel[0]]))
    });
    keys.truncate(params.max_key_voxels);
    keys
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyScore {
    pub key: KeyVoxel,
    pub similarity: f64,
    /// False when the target neighborhood was unavailable and the score is
    /// the missing-evidence floor.
    pub target_observed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobVerdict {
    pub blob: Option<u32>,
    pub footprint: Vec<usize>,
    pub scores: Vec<KeyScore>,
    /// Counts over uniform bins of `(0, 1]`.
    pub histogram: Vec<usize>,
    /// Bin-midpoint mean of the scores; `None` without key voxels.
    pub h_avg: Option<f64>,
    pub changed: bool,
    /// No key voxels: the 2D verdict (changed) stands without 3D support.
    pub low_evidence: bool,
}

/// Bin of a score in `(0, 1]` split into `bins` half-open-below intervals.
pub fn score_bin(score: f64, bins: usize) -> usize {
    let b = (score * bins as f64).ceil() as isize - 1;
    b.clamp(0, bins as isize - 1) as usize
}

/// `Σ m_i n_i / N` with `m_i` the bin midpoints.
pub fn histogram_mean(histogram: &[usize]) -> Option<f64> {
    let n: usize = histogram.iter().sum();
    if n == 0 {
        return None;
    }
    let bins = histogram.len() as f64;
    let s: f64 = histogram
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as f64 + 0.5) * c as f64)
        .sum();
    Some(s / (bins * n as f64))
}

/// Scores every key voxel of the candidate against the target volume at its
/// transformed position and votes on the blob.
pub fn validate_blob(
    src: &PlaneSdf,
    tgt: &PlaneSdf,
    transform: &Isometry3<f64>,
    candidate: &BlobCandidate,
    params: &ValidationParams,
) -> BlobVerdict {
    let keys = select_key_voxels(&src.volume, &candidate.footprint, params);
    let mut scores = Vec::with_capacity(keys.len());
    for key in keys {
        let v = key.voxel.map(|x| x as isize);
        let Some((f_src, bins)) = build_feature(&src.volume, v, None, &params.feature) else {
            continue;
        };
        let p = transform * src.volume.voxel_center(v);
        let v_tgt = tgt.volume.voxel_of(&p);
        let target = build_feature(&tgt.volume, v_tgt, Some(&bins), &params.feature);
        let (similarity, target_observed) = match target {
            Some((f_tgt, _)) => (
                feature::similarity(&f_src.values, &f_tgt.values, params.alpha)
                    .expect("features share one parameter set"),
                true,
            ),
            None => (params.missing_score, false),
        };
        scores.push(KeyScore {
            key,
            similarity,
            target_observed,
        });
    }
    verdict_from_scores(candidate, scores, params)
}

fn verdict_from_scores(candidate: &BlobCandidate, scores: Vec<KeyScore>, params: &ValidationParams) -> BlobVerdict {
    let mut histogram = vec![0usize; params.similarity_bins];
    for s in &scores {
        histogram[score_bin(s.similarity, params.similarity_bins)] += 1;
    }
    let h_avg = histogram_mean(&histogram);
    let (changed, low_evidence) = match h_avg {
        Some(h) => (h < params.delta_blob, false),
        None => (true, true),
    };
    BlobVerdict {
        blob: candidate.blob,
        footprint: candidate.footprint.clone(),
        scores,
        histogram,
        h_avg,
        changed,
        low_evidence,
    }
}

/// Applies verdicts to a denoised mask. Blobs confirmed changed become
/// changed in full, blobs judged unchanged are cleared, and free-space
/// clusters keep or lose their cells. Changed cells on blobs that were not
/// forwarded as candidates are cleared too.
pub fn refine_mask(mask: &ChangeMask, verdicts: &[BlobVerdict], objects: &ObjectMap) -> ChangeMask {
    let mut out = mask.clone();
    let set = |out: &mut ChangeMask, cells: &[usize], state: CellState| {
        for &c in cells {
            let s = &mut out.cells.as_mut_slice()[c];
            if *s != CellState::Unknown {
                *s = state;
            }
        }
    };
    for blob in &objects.blobs {
        if !verdicts.iter().any(|v| v.blob == Some(blob.label)) {
            set(&mut out, &blob.cells, CellState::Unchanged);
        }
    }
    for v in verdicts {
        let state = if v.changed {
            CellState::Changed
        } else {
            CellState::Unchanged
        };
        set(&mut out, &v.footprint, state);
    }
    out
}

/// World-frame centers of occupied voxels above changed cells, skipping the
/// plane's own clearance layer. Points are colored red.
pub fn extract_changed_voxels(sdf: &PlaneSdf, mask: &ChangeMask) -> PointCloud {
    let vol = &sdf.volume;
    let [_, _, nz] = vol.dims();
    let mut pts = Vec::new();
    for c in mask.changed_cells() {
        let (i, j) = mask.cells.coords(c);
        for k in 0..nz {
            if vol.layer_height(k) > vol.plane_clearance() && vol.is_occupied(i, j, k) {
                let q = vol.voxel_center([i as isize, j as isize, k as isize]);
                pts.push(sdf.frame.to_world(&q));
            }
        }
    }
    PointCloud::with_uniform_color(pts, [255, 0, 0])
}

/// Per-key-voxel debug rows: candidate index, blob label (0 for free
/// clusters), voxel, `|det H|`, similarity.
pub fn key_scores_csv(verdicts: &[BlobVerdict]) -> String {
    let mut s = String::from("candidate,blob,i,j,k,doh,similarity,target_observed\n");
    for (n, v) in verdicts.iter().enumerate() {
        for k in &v.scores {
            let [i, j, kk] = k.key.voxel;
            let _ = writeln!(
                s,
                "{n},{},{i},{j},{kk},{:.6e},{:.6},{}",
                v.blob.unwrap_or(0),
                k.key.doh,
                k.similarity,
                k.target_observed as u8
            );
        }
    }
    s
}

/// Similarity histograms and decisions, one row per bin.
pub fn histograms_csv(verdicts: &[BlobVerdict]) -> String {
    let mut s = String::from("candidate,blob,bin_low,bin_high,count,h_avg,changed,low_evidence\n");
    for (n, v) in verdicts.iter().enumerate() {
        let bins = v.histogram.len() as f64;
        let h = v.h_avg.map_or_else(|| "nan".to_string(), |h| format!("{h:.6}"));
        for (b, c) in v.histogram.iter().enumerate() {
            let _ = writeln!(
                s,
                "{n},{},{:.3},{:.3},{c},{h},{},{}",
                v.blob.unwrap_or(0),
                b as f64 / bins,
                (b + 1) as f64 / bins,
                v.changed as u8,
                v.low_evidence as u8
            );
        }
    }
    s
}
