//! End-to-end detection: plane SDFs for both scenes, pairing, 2D
//! comparison and 3D validation in one or both directions, and artifact
//! output.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Isometry3;
use rayon::prelude::*;

use crate::change2d::{compare_height_maps, denoise_mask, extract_candidates, BlobCandidate, ChangeMask};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::plane_detection::{detect_planes, DetectionParams};
use crate::planesdf::{height_map_csv, height_map_pgm, instantiate, label_grid_csv, write_volume, PlaneSdf};
use crate::registration::{match_planes, pairings_csv, refine_in_plane, MatchResult, PlanePairing};
use crate::scene_io::{save_point_cloud, PointCloud};
use crate::validate3d::{
    extract_changed_voxels, histograms_csv, key_scores_csv, refine_mask, validate_blob, BlobVerdict,
    ValidationParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Both => "both",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            "both" => Ok(Direction::Both),
            _ => Err(Error::Validation(format!(
                "unknown direction `{s}` (expected forward, backward or both)"
            ))),
        }
    }
}

/// Detects planes and fuses one [`PlaneSdf`] per plane.
pub fn build_scene(cloud: &PointCloud, config: &PipelineConfig) -> Result<Vec<PlaneSdf>> {
    if cloud.is_empty() {
        return Err(Error::Validation("point cloud is empty".into()));
    }
    let planes = detect_planes(cloud, &DetectionParams::from(config));
    let sdfs: Vec<PlaneSdf> = planes
        .par_iter()
        .map(|p| instantiate(cloud, p, config))
        .collect::<Result<_>>()?;
    for s in &sdfs {
        s.object_map.check_consistency(&s.height_map)?;
    }
    Ok(sdfs)
}

/// Every stage's output for one plane pairing.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub pairing: PlanePairing,
    /// Source-local → target-local map actually used (after the optional
    /// in-plane refinement).
    pub transform: Isometry3<f64>,
    pub preliminary: ChangeMask,
    pub denoised: ChangeMask,
    pub candidates: Vec<BlobCandidate>,
    pub verdicts: Vec<BlobVerdict>,
    pub refined: ChangeMask,
    pub changed_points: PointCloud,
}

#[derive(Debug, Clone)]
pub struct DirectionOutcome {
    pub direction: Direction,
    pub matches: MatchResult,
    pub pairs: Vec<PairOutcome>,
    pub changed_points: PointCloud,
}

/// Changes of `src` with respect to `tgt`.
pub fn detect_direction(
    src: &[PlaneSdf],
    tgt: &[PlaneSdf],
    config: &PipelineConfig,
    direction: Direction,
) -> Result<DirectionOutcome> {
    let matches = match_planes(src, tgt, config.delta_n, config.delta_d);
    let pairs: Vec<PairOutcome> = matches
        .pairings
        .par_iter()
        .map(|p| {
            let s = src.iter().find(|x| x.id == p.source_id).expect("pairing from src");
            let t = tgt.iter().find(|x| x.id == p.target_id).expect("pairing from tgt");
            process_pair(s, t, p, config)
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for p in &pairs {
        points.extend_from_slice(&p.changed_points.points);
    }
    Ok(DirectionOutcome {
        direction,
        matches,
        pairs,
        changed_points: PointCloud::with_uniform_color(points, [255, 0, 0]),
    })
}

fn process_pair(src: &PlaneSdf, tgt: &PlaneSdf, pairing: &PlanePairing, config: &PipelineConfig) -> Result<PairOutcome> {
    let mut transform = pairing.transform.local;
    if config.in_plane_icp {
        transform = refine_in_plane(&src.height_map, &tgt.height_map, &transform, config.icp_iterations);
    }
    let preliminary = compare_height_maps(&src.height_map, &tgt.height_map, &transform, config.delta_h)?;
    let denoised = denoise_mask(&preliminary, config.min_cluster_cells, config.dilation_radius);
    let candidates = extract_candidates(&denoised, &src.object_map, config.min_overlap, config.dilation_radius)?;
    let params = ValidationParams::from(config);
    let verdicts: Vec<BlobVerdict> = candidates
        .par_iter()
        .map(|c| validate_blob(src, tgt, &transform, c, &params))
        .collect();
    let refined = refine_mask(&denoised, &verdicts, &src.object_map);
    let changed_points = extract_changed_voxels(src, &refined);
    Ok(PairOutcome {
        pairing: pairing.clone(),
        transform,
        preliminary,
        denoised,
        candidates,
        verdicts,
        refined,
        changed_points,
    })
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub source_planes: Vec<PlaneSdf>,
    pub target_planes: Vec<PlaneSdf>,
    pub forward: Option<DirectionOutcome>,
    pub backward: Option<DirectionOutcome>,
}

impl Detection {
    /// Changed voxels of every direction that ran, forward first.
    pub fn changed_points(&self) -> PointCloud {
        let mut pts = Vec::new();
        for d in self.directions() {
            pts.extend_from_slice(&d.changed_points.points);
        }
        PointCloud::with_uniform_color(pts, [255, 0, 0])
    }

    pub fn directions(&self) -> impl Iterator<Item = &DirectionOutcome> {
        self.forward.iter().chain(self.backward.iter())
    }
}

/// Runs the full pipeline. Fails if either scene yields no planes.
pub fn run(source: &PointCloud, target: &PointCloud, config: &PipelineConfig, direction: Direction) -> Result<Detection> {
    config.validate()?;
    let (src, tgt) = rayon::join(|| build_scene(source, config), || build_scene(target, config));
    let (source_planes, target_planes) = (src?, tgt?);
    if source_planes.is_empty() {
        return Err(Error::Validation("no planes detected in the source cloud".into()));
    }
    if target_planes.is_empty() {
        return Err(Error::Validation("no planes detected in the target cloud".into()));
    }
    let forward = matches!(direction, Direction::Forward | Direction::Both)
        .then(|| detect_direction(&source_planes, &target_planes, config, Direction::Forward))
        .transpose()?;
    let backward = matches!(direction, Direction::Backward | Direction::Both)
        .then(|| detect_direction(&target_planes, &source_planes, config, Direction::Backward))
        .transpose()?;
    Ok(Detection {
        source_planes,
        target_planes,
        forward,
        backward,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn planes_csv(planes: &[PlaneSdf]) -> String {
    let mut s = String::from("id,nx,ny,nz,offset,normal_x,normal_y,normal_z,origin_u,origin_v,blobs\n");
    for p in planes {
        let [nx, ny, nz] = p.volume.dims();
        let o = p.volume.origin();
        let n = p.pose.normal;
        let _ = writeln!(
            s,
            "{},{nx},{ny},{nz},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            p.id,
            p.pose.offset,
            n.x,
            n.y,
            n.z,
            o[0],
            o[1],
            p.object_map.len()
        );
    }
    s
}

/// Writes every artifact of a detection under `out`.
///
/// Layout: `config.txt`, `source_planes.csv`, `target_planes.csv`,
/// `changed_voxels.ply`, and per direction a subdirectory with
/// `pairings.csv`, `unmatched.csv`, per-plane height/object maps, per-pair
/// masks for the height-comparison (`hc`), denoised (`cc`) and refined
/// (`3d`) stages, validation debug tables, and `changed_voxels.ply`. With
/// `dump_volumes`, each plane's SDF volume is also written as `.psdf`.
pub fn write_artifacts(det: &Detection, config: &PipelineConfig, out: &Path, dump_volumes: bool) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.txt"), config.to_text())?;
    write(&out.join("source_planes.csv"), planes_csv(&det.source_planes))?;
    write(&out.join("target_planes.csv"), planes_csv(&det.target_planes))?;
    save_point_cloud(&det.changed_points(), out.join("changed_voxels.ply"))?;
    for d in det.directions() {
        let dir = out.join(d.direction.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let planes = match d.direction {
            Direction::Backward => &det.target_planes,
            _ => &det.source_planes,
        };
        write(&dir.join("pairings.csv"), pairings_csv(&d.matches.pairings))?;
        let mut unmatched = String::from("side,plane_id\n");
        for id in &d.matches.unmatched_source {
            let _ = writeln!(unmatched, "source,{id}");
        }
        for id in &d.matches.unmatched_target {
            let _ = writeln!(unmatched, "target,{id}");
        }
        write(&dir.join("unmatched.csv"), unmatched)?;
        for p in planes {
            let stem = format!("plane_{}", p.id);
            write(&dir.join(format!("{stem}_height.csv")), height_map_csv(&p.height_map))?;
            write(
                &dir.join(format!("{stem}_height.pgm")),
                height_map_pgm(&p.height_map, config.fusing_band),
            )?;
            write(&dir.join(format!("{stem}_objects.csv")), label_grid_csv(&p.object_map.labels))?;
            if dump_volumes {
                let path = dir.join(format!("{stem}.psdf"));
                let mut bytes = Vec::new();
                write_volume(&p.volume, &p.pose, &mut bytes).map_err(|e| Error::io(&path, e))?;
                write(&path, bytes)?;
            }
        }
        for pair in &d.pairs {
            let stem = format!("pair_{}_{}", pair.pairing.source_id, pair.pairing.target_id);
            for (stage, mask) in [("hc", &pair.preliminary), ("cc", &pair.denoised), ("3d", &pair.refined)] {
                write(&dir.join(format!("{stem}_{stage}.pgm")), mask.to_pgm())?;
                write(&dir.join(format!("{stem}_{stage}.csv")), mask.to_csv())?;
            }
            write(&dir.join(format!("{stem}_keys.csv")), key_scores_csv(&pair.verdicts))?;
            write(&dir.join(format!("{stem}_histograms.csv")), histograms_csv(&pair.verdicts))?;
        }
        save_point_cloud(&d.changed_points, dir.join("changed_voxels.ply"))?;
    }
    Ok(())
}
