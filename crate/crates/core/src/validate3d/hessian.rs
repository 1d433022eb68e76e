//! SDF Hessians from composed Sobel kernels.

use std::sync::OnceLock;

use nalgebra::Matrix3;

use crate::planesdf::SdfVolume;

/// Half-width of the composed kernel support.
pub const SUPPORT: isize = 2;
const W: usize = 5;

/// Normalized 3D Sobel derivative kernel along `axis`, as a correlation
/// kernel indexed by offsets in `-1..=1`: `d ⊗ s ⊗ s` with `d = [-1, 0, 1]/2`
/// and `s = [1, 2, 1]/4`.
pub fn sobel(axis: usize) -> [[[f64; 3]; 3]; 3] {
    const D: [f64; 3] = [-0.5, 0.0, 0.5];
    const S: [f64; 3] = [0.25, 0.5, 0.25];
    let mut k = [[[0.0; 3]; 3]; 3];
    for (a, plane) in k.iter_mut().enumerate() {
        for (b, row) in plane.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                // k[z][y][x]
                let idx = [c, b, a];
                *v = (0..3)
                    .map(|ax| if ax == axis { D[idx[ax]] } else { S[idx[ax]] })
                    .product();
            }
        }
    }
    k
}

/// `K_ij(o) = Σ_{a+b=o} G_i(a) G_j(b)`: applying `G_j` then `G_i` as
/// correlations equals one correlation with `K_ij`. Indexed `[z][y][x]` with
/// offsets in `-2..=2`.
pub fn composed_kernel(i: usize, j: usize) -> [[[f64; W]; W]; W] {
    let (gi, gj) = (sobel(i), sobel(j));
    let mut k = [[[0.0; W]; W]; W];
    for az in 0..3 {
        for ay in 0..3 {
            for ax in 0..3 {
                for bz in 0..3 {
                    for by in 0..3 {
                        for bx in 0..3 {
                            k[az + bz][ay + by][ax + bx] += gi[az][ay][ax] * gj[bz][by][bx];
                        }
                    }
                }
            }
        }
    }
    k
}

/// The six upper-triangle kernels, in `xx, xy, xz, yy, yz, zz` order.
fn kernels() -> &'static [[[[f64; W]; W]; W]; 6] {
    static K: OnceLock<[[[[f64; W]; W]; W]; 6]> = OnceLock::new();
    K.get_or_init(|| {
        [
            composed_kernel(0, 0),
            composed_kernel(0, 1),
            composed_kernel(0, 2),
            composed_kernel(1, 1),
            composed_kernel(1, 2),
            composed_kernel(2, 2),
        ]
    })
}

/// Hessian of Φ at voxel `v` in physical units (1/m), or `None` when the
/// 5×5×5 support is not fully observed.
pub fn hessian_at(volume: &SdfVolume, v: [isize; 3]) -> Option<Matrix3<f64>> {
    if !volume.neighborhood_observed(v, SUPPORT) {
        return None;
    }
    let ks = kernels();
    let mut s = [0.0f64; 6];
    let phi = volume.phi_raw();
    for dz in 0..W {
        for dy in 0..W {
            let z = (v[2] + dz as isize - SUPPORT) as usize;
            let y = (v[1] + dy as isize - SUPPORT) as usize;
            let row = volume.index((v[0] - SUPPORT) as usize, y, z);
            for dx in 0..W {
                let f = phi[row + dx];
                for (acc, k) in s.iter_mut().zip(ks) {
                    *acc += k[dz][dy][dx] * f;
                }
            }
        }
    }
    let scale = 1.0 / (volume.voxel_size() * volume.voxel_size());
    let [xx, xy, xz, yy, yz, zz] = s.map(|x| x * scale);
    Some(Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz))
}
