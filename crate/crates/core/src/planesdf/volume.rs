use nalgebra::Point3;

/// Dense truncated SDF over a plane-local box.
///
/// Voxel `(i, j, k)` covers `origin + [i, i+1) × [j, j+1) × [k, k+1)` voxel
/// sizes, with `k` measured up from the plane. Unobserved voxels have
/// weight 0 and carry `NaN` as their distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfVolume {
    pub(crate) origin: [f64; 3],
    pub(crate) voxel_size: f64,
    pub(crate) dims: [usize; 3],
    pub(crate) truncation: f64,
    pub(crate) occupancy_threshold: f64,
    pub(crate) plane_clearance: f64,
    pub(crate) phi: Vec<f64>,
    pub(crate) weight: Vec<f32>,
}

pub const UNOBSERVED: f64 = f64::NAN;

impl SdfVolume {
    /// Volume with every voxel unobserved.
    pub fn empty(origin: [f64; 3], voxel_size: f64, dims: [usize; 3], truncation: f64) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Self {
            origin,
            voxel_size,
            dims,
            truncation,
            occupancy_threshold: voxel_size,
            plane_clearance: 0.0,
            phi: vec![UNOBSERVED; n],
            weight: vec![0.0; n],
        }
    }

    /// Builds a fully observed volume from a distance function of the voxel
    /// index. Handy for synthetic fields in tests and tools.
    pub fn from_fn(
        origin: [f64; 3],
        voxel_size: f64,
        dims: [usize; 3],
        truncation: f64,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut v = Self::empty(origin, voxel_size, dims, truncation);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = v.index(i, j, k);
                    v.phi[idx] = f(i, j, k);
                    v.weight[idx] = 1.0;
                }
            }
        }
        v
    }

    pub fn with_occupancy(mut self, threshold: f64, plane_clearance: f64) -> Self {
        self.occupancy_threshold = threshold;
        self.plane_clearance = plane_clearance;
        self
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn occupancy_threshold(&self) -> f64 {
        self.occupancy_threshold
    }

    pub fn plane_clearance(&self) -> f64 {
        self.plane_clearance
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn in_bounds(&self, v: [isize; 3]) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    /// Signed distance at a voxel, `None` when out of bounds or unobserved.
    #[inline]
    pub fn phi(&self, v: [isize; 3]) -> Option<f64> {
        if !self.in_bounds(v) {
            return None;
        }
        let idx = self.index(v[0] as usize, v[1] as usize, v[2] as usize);
        (self.weight[idx] > 0.0).then(|| self.phi[idx])
    }

    pub fn weight(&self, i: usize, j: usize, k: usize) -> f32 {
        self.weight[self.index(i, j, k)]
    }

    pub fn phi_raw(&self) -> &[f64] {
        &self.phi
    }

    pub fn weight_raw(&self) -> &[f32] {
        &self.weight
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, phi: f64, weight: f32) {
        let idx = self.index(i, j, k);
        self.phi[idx] = if weight > 0.0 { phi } else { UNOBSERVED };
        self.weight[idx] = weight;
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        let idx = self.index(i, j, k);
        self.weight[idx] > 0.0 && self.phi[idx].abs() <= self.occupancy_threshold
    }

    /// Height of voxel layer `k` center above the plane.
    pub fn layer_height(&self, k: usize) -> f64 {
        self.origin[2] + (k as f64 + 0.5) * self.voxel_size
    }

    /// Plane-local center of voxel `(i, j, k)`.
    pub fn voxel_center(&self, v: [isize; 3]) -> Point3<f64> {
        let s = self.voxel_size;
        Point3::new(
            self.origin[0] + (v[0] as f64 + 0.5) * s,
            self.origin[1] + (v[1] as f64 + 0.5) * s,
            self.origin[2] + (v[2] as f64 + 0.5) * s,
        )
    }

    /// Voxel containing a plane-local point (may be out of bounds).
    pub fn voxel_of(&self, p: &Point3<f64>) -> [isize; 3] {
        let s = self.voxel_size;
        [
            ((p.x - self.origin[0]) / s).floor() as isize,
            ((p.y - self.origin[1]) / s).floor() as isize,
            ((p.z - self.origin[2]) / s).floor() as isize,
        ]
    }

    /// True when every voxel in the cube of half-width `r` around `v` is
    /// inside the volume and observed.
    pub fn neighborhood_observed(&self, v: [isize; 3], r: isize) -> bool {
        let lo = [v[0] - r, v[1] - r, v[2] - r];
        let hi = [v[0] + r, v[1] + r, v[2] + r];
        if !self.in_bounds(lo) || !self.in_bounds(hi) {
            return false;
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                let row = self.index(0, j as usize, k as usize);
                if self.weight[row + lo[0] as usize..=row + hi[0] as usize]
                    .iter()
                    .any(|&w| w <= 0.0)
                {
                    return false;
                }
            }
        }
        true
    }
}
