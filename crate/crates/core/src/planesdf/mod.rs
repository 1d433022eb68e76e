//! Plane-local SDF fusion, height maps and object maps.

mod export;
mod volume;

pub(crate) use export::grid_csv;
pub use export::{
    height_map_csv, height_map_pgm, label_grid_csv, read_volume, write_pgm, write_volume,
};
pub use volume::SdfVolume;

use nalgebra::Point3;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{PlaneFrame, PlanePose};
use crate::grid::{component_cells, dilate_square, label_components, Grid2};
use crate::plane_detection::DetectedPlane;
use crate::scene_io::PointCloud;

/// Per-cell maximum occupied height over the plane. `-1` marks unobserved
/// columns and `0` observed flat ones.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    origin: [f64; 2],
    cell_size: f64,
    cells: Grid2<f64>,
}

impl HeightMap {
    pub const UNOBSERVED: f64 = -1.0;

    pub fn new(origin: [f64; 2], cell_size: f64, cells: Grid2<f64>) -> Self {
        Self {
            origin,
            cell_size,
            cells,
        }
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn nx(&self) -> usize {
        self.cells.nx()
    }

    pub fn ny(&self) -> usize {
        self.cells.ny()
    }

    pub fn cells(&self) -> &Grid2<f64> {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut Grid2<f64> {
        &mut self.cells
    }

    /// Value at a cell; `None` outside the grid.
    pub fn value(&self, i: isize, j: isize) -> Option<f64> {
        self.cells.get(i, j).copied()
    }

    /// Plane-local `(u, v)` of a cell center.
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_size,
            self.origin[1] + (j as f64 + 0.5) * self.cell_size,
        ]
    }
}

/// One connected component of positive-height cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub label: u32,
    /// Row-major cell indices, ascending.
    pub cells: Vec<usize>,
    /// Inclusive `[i_min, j_min, i_max, j_max]`.
    pub bbox: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMap {
    pub labels: Grid2<u32>,
    /// `blobs[l - 1]` has label `l`.
    pub blobs: Vec<Blob>,
}

impl ObjectMap {
    pub fn blob(&self, label: u32) -> Option<&Blob> {
        label
            .checked_sub(1)
            .and_then(|l| self.blobs.get(l as usize))
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    /// Checks that labeled cells are exactly the positive-height cells.
    pub fn check_consistency(&self, height_map: &HeightMap) -> Result<()> {
        if self.labels.nx() != height_map.nx() || self.labels.ny() != height_map.ny() {
            return Err(Error::Invariant("object map shape differs from height map".into()));
        }
        let bad = self
            .labels
            .as_slice()
            .iter()
            .zip(height_map.cells().as_slice())
            .position(|(&l, &h)| (l > 0) != (h > 0.0));
        match bad {
            Some(idx) => Err(Error::Invariant(format!(
                "object label and height disagree at cell {idx}"
            ))),
            None => Ok(()),
        }
    }
}

/// Fusion settings, derived from [`PipelineConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub band: f64,
    pub voxel_size: f64,
    pub truncation: f64,
    pub occupancy_threshold: f64,
    pub plane_clearance: f64,
    /// Points this far below the plane still fuse (plane noise).
    pub lower_tolerance: f64,
    pub max_voxels: usize,
}

impl From<&PipelineConfig> for FusionParams {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            band: c.fusing_band,
            voxel_size: c.voxel_size,
            truncation: c.truncation(),
            occupancy_threshold: c.occupancy_factor * c.voxel_size,
            plane_clearance: c.plane_clearance,
            lower_tolerance: c.inlier_tolerance,
            max_voxels: c.max_voxels,
        }
    }
}

impl Default for FusionParams {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

/// A plane with its fused volume and derived maps. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSdf {
    pub id: usize,
    pub pose: PlanePose,
    pub frame: PlaneFrame,
    pub volume: SdfVolume,
    pub height_map: HeightMap,
    pub object_map: ObjectMap,
}

/// Fuses the band above `plane` into a new [`PlaneSdf`].
pub fn instantiate(cloud: &PointCloud, plane: &DetectedPlane, config: &PipelineConfig) -> Result<PlaneSdf> {
    instantiate_with(cloud, plane.id, plane.pose, &plane.inliers, &FusionParams::from(config))
}

/// Like [`instantiate`] but from a bare pose and inlier list.
///
/// The grid covers the inliers' bounding rectangle padded by two voxels, on
/// a lattice aligned to multiples of the voxel size. Every point of the cloud
/// whose height lies in `[-lower_tolerance, band]` and which projects inside
/// the rectangle is fused, so a point may land in several volumes.
pub fn instantiate_with(
    cloud: &PointCloud,
    id: usize,
    pose: PlanePose,
    inliers: &[usize],
    params: &FusionParams,
) -> Result<PlaneSdf> {
    if inliers.is_empty() {
        return Err(Error::Validation(format!("plane {id} has no inliers")));
    }
    let frame = pose.frame();
    let vs = params.voxel_size;

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in inliers {
        let q = frame.to_local(&cloud.points[i]);
        lo = [lo[0].min(q.x), lo[1].min(q.y)];
        hi = [hi[0].max(q.x), hi[1].max(q.y)];
    }
    let i0 = [(lo[0] / vs).floor() as i64 - 2, (lo[1] / vs).floor() as i64 - 2];
    let i1 = [(hi[0] / vs).floor() as i64 + 2, (hi[1] / vs).floor() as i64 + 2];
    let nx = (i1[0] - i0[0] + 1) as usize;
    let ny = (i1[1] - i0[1] + 1) as usize;
    let nz = ((params.band / vs) - 1e-9).ceil().max(1.0) as usize;
    let required = nx.saturating_mul(ny).saturating_mul(nz);
    if required > params.max_voxels {
        return Err(Error::VolumeTooLarge {
            required,
            allowed: params.max_voxels,
        });
    }
    let origin = [i0[0] as f64 * vs, i0[1] as f64 * vs, 0.0];

    let local: Vec<Point3<f64>> = cloud
        .points
        .iter()
        .map(|p| frame.to_local(p))
        .filter(|q| {
            q.z >= -params.lower_tolerance
                && q.z <= params.band
                && q.x >= origin[0]
                && q.y >= origin[1]
                && q.x < origin[0] + nx as f64 * vs
                && q.y < origin[1] + ny as f64 * vs
        })
        .collect();

    let volume = fuse(&local, origin, [nx, ny, nz], params);
    let height_map = compute_height_map(&volume);
    let object_map = label_objects(&height_map);
    Ok(PlaneSdf {
        id,
        pose,
        frame,
        volume,
        height_map,
        object_map,
    })
}

/// Distance-to-nearest-point fusion with column-wise signing.
fn fuse(points: &[Point3<f64>], origin: [f64; 3], dims: [usize; 3], params: &FusionParams) -> SdfVolume {
    let vs = params.voxel_size;
    let trunc = params.truncation;
    let [nx, ny, nz] = dims;
    let mut volume = SdfVolume::empty(origin, vs, dims, trunc)
        .with_occupancy(params.occupancy_threshold, params.plane_clearance);
    let n = volume.len();
    let mut dist2 = vec![f64::INFINITY; n];
    let mut near = vec![0u32; n];
    let mut hit = Grid2::filled(nx, ny, false);
    let reach = (trunc / vs).ceil() as isize;
    let t2 = trunc * trunc;

    for q in points {
        let c = volume.voxel_of(q);
        if let Some(h) = hit.get(c[0], c[1]) {
            if !*h {
                hit[(c[0] as usize, c[1] as usize)] = true;
            }
        }
        let range = |a: usize| {
            let lo = (c[a] - reach).max(0);
            let hi = (c[a] + reach).min(dims[a] as isize - 1);
            lo..=hi
        };
        for k in range(2) {
            let dz = origin[2] + (k as f64 + 0.5) * vs - q.z;
            let dz2 = dz * dz;
            if dz2 > t2 {
                continue;
            }
            for j in range(1) {
                let dy = origin[1] + (j as f64 + 0.5) * vs - q.y;
                let dyz2 = dz2 + dy * dy;
                if dyz2 > t2 {
                    continue;
                }
                let row = (k as usize * ny + j as usize) * nx;
                for i in range(0) {
                    let dx = origin[0] + (i as f64 + 0.5) * vs - q.x;
                    let d2 = dyz2 + dx * dx;
                    if d2 <= t2 {
                        let idx = row + i as usize;
                        near[idx] += 1;
                        if d2 < dist2[idx] {
                            dist2[idx] = d2;
                        }
                    }
                }
            }
        }
    }

    let observed = dilate_square(&hit, 1);
    let occ2 = params.occupancy_threshold * params.occupancy_threshold;
    for j in 0..ny {
        for i in 0..nx {
            if !observed[(i, j)] {
                continue;
            }
            let top = (0..nz).rev().find(|&k| dist2[volume.index(i, j, k)] <= occ2);
            for k in 0..nz {
                let idx = volume.index(i, j, k);
                let d = dist2[idx].sqrt().min(trunc);
                let phi = match top {
                    Some(t) if k < t => -d,
                    _ => d,
                };
                volume.set(i, j, k, phi, 1.0 + near[idx] as f32);
            }
        }
    }
    volume
}

/// Projects a fused volume onto its plane.
///
/// Occupied voxels at or below the volume's plane clearance belong to the
/// plane itself and do not raise a cell above 0.
pub fn compute_height_map(volume: &SdfVolume) -> HeightMap {
    let [nx, ny, nz] = volume.dims();
    let mut cells = Grid2::filled(nx, ny, HeightMap::UNOBSERVED);
    for j in 0..ny {
        for i in 0..nx {
            let mut h = HeightMap::UNOBSERVED;
            for k in 0..nz {
                if volume.weight(i, j, k) <= 0.0 {
                    continue;
                }
                h = h.max(0.0);
                let z = volume.layer_height(k);
                if z > volume.plane_clearance() && volume.is_occupied(i, j, k) {
                    h = h.max(z);
                }
            }
            cells[(i, j)] = h;
        }
    }
    HeightMap::new([volume.origin()[0], volume.origin()[1]], volume.voxel_size(), cells)
}

/// 8-connected labeling of the positive-height cells.
pub fn label_objects(height_map: &HeightMap) -> ObjectMap {
    let mask = height_map.cells().map(|&h| h > 0.0);
    let (labels, count) = label_components(&mask);
    let blobs = component_cells(&labels, count)
        .into_iter()
        .enumerate()
        .map(|(l, cells)| {
            let mut bbox = [usize::MAX, usize::MAX, 0, 0];
            for &c in &cells {
                let (i, j) = labels.coords(c);
                bbox = [bbox[0].min(i), bbox[1].min(j), bbox[2].max(i), bbox[3].max(j)];
            }
            Blob {
                label: l as u32 + 1,
                cells,
                bbox,
            }
        })
        .collect();
    ObjectMap { labels, blobs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn grid_points(x0: f64, x1: f64, y0: f64, y1: f64, z: f64, step: f64) -> Vec<Point3<f64>> {
        let mut out = Vec::new();
        let nx = ((x1 - x0) / step).round() as usize;
        let ny = ((y1 - y0) / step).round() as usize;
        for j in 0..=ny {
            for i in 0..=nx {
                out.push(Point3::new(x0 + i as f64 * step, y0 + j as f64 * step, z));
            }
        }
        out
    }

    fn box_points(c: [f64; 2], half: f64, h: f64, step: f64) -> Vec<Point3<f64>> {
        let mut pts = grid_points(c[0] - half, c[0] + half, c[1] - half, c[1] + half, h, step);
        let n = (h / step).round() as usize;
        for s in 0..=n {
            let z = s as f64 * step;
            let m = (2.0 * half / step).round() as usize;
            for t in 0..=m {
                let a = -half + t as f64 * step;
                pts.push(Point3::new(c[0] + a, c[1] - half, z));
                pts.push(Point3::new(c[0] + a, c[1] + half, z));
                pts.push(Point3::new(c[0] - half, c[1] + a, z));
                pts.push(Point3::new(c[0] + half, c[1] + a, z));
            }
        }
        pts
    }

    fn fuse_scene(pts: Vec<Point3<f64>>, n_plane: usize) -> PlaneSdf {
        let cloud = PointCloud::new(pts);
        let inliers: Vec<usize> = (0..n_plane).collect();
        let pose = PlanePose::new(Vector3::z(), 0.0);
        instantiate_with(&cloud, 0, pose, &inliers, &FusionParams::default()).unwrap()
    }

    #[test]
    fn flat_plane_has_no_blobs() {
        let pts = grid_points(-0.2, 0.2, -0.1, 0.1, 0.0, 0.004);
        let n = pts.len();
        let sdf = fuse_scene(pts, n);
        let cells = sdf.height_map.cells().as_slice();
        assert!(cells.iter().all(|&h| h == 0.0 || h == -1.0));
        assert!(cells.iter().any(|&h| h == 0.0));
        // Two padding cells minus the one-cell observation dilation.
        assert_eq!(sdf.height_map.value(0, 0), Some(-1.0));
        assert!(sdf.object_map.is_empty());
    }

    #[test]
    fn box_height_matches_within_a_voxel() {
        let mut pts = grid_points(-0.2, 0.2, -0.2, 0.2, 0.0, 0.004);
        let n = pts.len();
        pts.extend(box_points([0.0, 0.0], 0.05, 0.10, 0.004));
        let sdf = fuse_scene(pts, n);
        assert_eq!(sdf.object_map.len(), 1);
        let blob = &sdf.object_map.blobs[0];
        let hmax = blob
            .cells
            .iter()
            .map(|&c| sdf.height_map.cells().as_slice()[c])
            .fold(0.0, f64::max);
        assert!((hmax - 0.10).abs() <= 0.007, "max height {hmax}");
        sdf.object_map.check_consistency(&sdf.height_map).unwrap();
    }

    #[test]
    fn points_above_band_are_excluded() {
        let base = grid_points(-0.1, 0.1, -0.1, 0.1, 0.0, 0.004);
        let n = base.len();
        let plain = fuse_scene(base.clone(), n);
        let mut with_high = base;
        with_high.extend(grid_points(-0.02, 0.02, -0.02, 0.02, 0.35, 0.004));
        with_high.push(Point3::new(0.0, 0.0, 0.3 + 1e-6));
        let high = fuse_scene(with_high, n);
        assert_eq!(plain.height_map, high.height_map);
        assert_eq!(plain.volume.weight_raw(), high.volume.weight_raw());
        let bits = |v: &SdfVolume| v.phi_raw().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&plain.volume), bits(&high.volume));
    }

    #[test]
    fn fusion_is_deterministic() {
        let mut pts = grid_points(-0.1, 0.1, -0.1, 0.1, 0.0, 0.005);
        let n = pts.len();
        pts.extend(box_points([0.02, 0.0], 0.03, 0.06, 0.005));
        let a = fuse_scene(pts.clone(), n);
        let b = fuse_scene(pts, n);
        assert_eq!(a.volume.phi_raw().len(), b.volume.phi_raw().len());
        for (x, y) in a.volume.phi_raw().iter().zip(b.volume.phi_raw()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.height_map, b.height_map);
    }

    #[test]
    fn phi_bounded_and_unobserved_is_sentinel() {
        let mut pts = grid_points(-0.1, 0.1, -0.1, 0.1, 0.0, 0.005);
        let n = pts.len();
        pts.extend(box_points([0.0, 0.0], 0.03, 0.08, 0.005));
        let sdf = fuse_scene(pts, n);
        let v = &sdf.volume;
        for (phi, w) in v.phi_raw().iter().zip(v.weight_raw()) {
            if *w > 0.0 {
                assert!(phi.abs() <= v.truncation());
            } else {
                assert!(phi.is_nan());
            }
        }
        // Inside the box, below its lid, distances are negative.
        let c = v.voxel_of(&Point3::new(0.0, 0.0, 0.08 - 0.0105));
        assert!(v.phi(c).unwrap() < 0.0);
        let above = v.voxel_of(&Point3::new(0.0, 0.0, 0.08 + 0.0105));
        assert!(v.phi(above).unwrap() > 0.0);
    }

    #[test]
    fn volume_budget_is_enforced() {
        let pts = grid_points(-1.0, 1.0, -1.0, 1.0, 0.0, 0.05);
        let n = pts.len();
        let cloud = PointCloud::new(pts);
        let params = FusionParams {
            max_voxels: 1000,
            ..FusionParams::default()
        };
        let inliers: Vec<usize> = (0..n).collect();
        let err = instantiate_with(&cloud, 0, PlanePose::new(Vector3::z(), 0.0), &inliers, &params)
            .unwrap_err();
        match err {
            Error::VolumeTooLarge { required, allowed } => {
                assert_eq!(allowed, 1000);
                assert!(required > 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn hm_from(vol: &SdfVolume) -> Vec<f64> {
        compute_height_map(vol).cells().as_slice().to_vec()
    }

    #[test]
    fn height_map_all_unobserved() {
        let vol = SdfVolume::empty([0.0; 3], 0.01, [3, 2, 4], 0.04);
        assert!(hm_from(&vol).iter().all(|&h| h == -1.0));
    }

    #[test]
    fn height_map_single_occupied_voxel() {
        let mut vol = SdfVolume::from_fn([0.0; 3], 0.01, [3, 3, 10], 0.04, |_, _, _| 0.04);
        vol.set(1, 2, 6, 0.0, 1.0);
        let h = hm_from(&vol);
        for (idx, &v) in h.iter().enumerate() {
            if idx == 2 * 3 + 1 {
                assert!((v - 0.065).abs() < 1e-12);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn height_map_takes_max_of_column() {
        let mut vol = SdfVolume::from_fn([0.0; 3], 0.01, [1, 1, 10], 0.04, |_, _, _| 0.04);
        vol.set(0, 0, 1, 0.0, 1.0);
        vol.set(0, 0, 7, 0.0, 1.0);
        let h = hm_from(&vol);
        assert!((h[0] - 0.075).abs() < 1e-12);
    }

    fn hm(nx: usize, ny: usize, cells: Vec<f64>) -> HeightMap {
        HeightMap::new([0.0; 2], 0.01, Grid2::from_vec(nx, ny, cells).unwrap())
    }

    #[test]
    fn blocks_split_by_zero_column() {
        let mut cells = vec![0.0; 7 * 3];
        for j in 0..3 {
            for i in (0..3).chain(4..7) {
                cells[j * 7 + i] = 0.1;
            }
        }
        let om = label_objects(&hm(7, 3, cells));
        assert_eq!(om.len(), 2);
        assert_eq!(om.blobs[0].bbox, [0, 0, 2, 2]);
        assert_eq!(om.blobs[1].bbox, [4, 0, 6, 2]);
    }

    #[test]
    fn no_positive_cells_no_blobs() {
        let om = label_objects(&hm(2, 2, vec![0.0, -1.0, -1.0, 0.0]));
        assert!(om.is_empty());
    }

    #[test]
    fn diagonal_blocks_form_one_blob() {
        let om = label_objects(&hm(2, 2, vec![0.1, 0.0, 0.0, 0.1]));
        assert_eq!(om.len(), 1);
    }

    proptest! {
        #[test]
        fn more_points_never_lower_height(
            extra in proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05, 0.0f64..0.3), 1..40)
        ) {
            let base = grid_points(-0.08, 0.08, -0.08, 0.08, 0.0, 0.006);
            let n = base.len();
            let a = fuse_scene(base.clone(), n);
            let mut more = base;
            more.extend(extra.iter().map(|&(x, y, z)| Point3::new(x, y, z)));
            let b = fuse_scene(more, n);
            let (ha, hb) = (a.height_map.cells().as_slice(), b.height_map.cells().as_slice());
            prop_assert_eq!(ha.len(), hb.len());
            for (x, y) in ha.iter().zip(hb) {
                prop_assert!(y >= x);
            }
            b.object_map.check_consistency(&b.height_map).unwrap();
        }
    }
}
