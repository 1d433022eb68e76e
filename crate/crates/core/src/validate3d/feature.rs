//! Eigenpair-histogram features and their similarity score.

use nalgebra::{Matrix3, Vector3};

use super::eigen::SymmetricEigen3;
use super::hessian::hessian_at;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::planesdf::SdfVolume;

const LAMBDA_EPS: f64 = 1e-12;
const AXIS_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_lambda: usize,
    /// Gaussian width of the SDF scalar, in voxels.
    pub sigma: f64,
}

impl From<&PipelineConfig> for FeatureParams {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            n_theta: c.n_theta,
            n_phi: c.n_phi,
            n_lambda: c.n_lambda,
            sigma: c.gaussian_sigma,
        }
    }
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

impl FeatureParams {
    pub fn len(&self) -> usize {
        3 * self.sub_len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn sub_len(&self) -> usize {
        self.n_theta * self.n_phi * self.n_lambda
    }
}

/// Eigenvalue, normalized by the voxel's total absolute eigenvalue, and its
/// direction in degrees with `e` and `-e` folded together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Azimuth in `[0, 180)`.
    pub theta: f64,
    /// Elevation in `[-90, 90]`.
    pub phi: f64,
}

/// Eigenpairs of a Hessian, descending by eigenvalue.
pub fn eigen_pairs(h: &Matrix3<f64>) -> [EigenPair; 3] {
    let eig = SymmetricEigen3::new(h);
    let total: f64 = eig.values.iter().map(|l| l.abs()).sum::<f64>() + LAMBDA_EPS;
    std::array::from_fn(|i| {
        let (theta, phi) = direction_angles(&eig.vectors[i]);
        EigenPair {
            lambda: eig.values[i] / total,
            theta,
            phi,
        }
    })
}

/// `(θ, φ)` in degrees for a unit direction, identical for `e` and `-e`.
pub fn direction_angles(e: &Vector3<f64>) -> (f64, f64) {
    let mut e = e.map(|c| if c.abs() < AXIS_SNAP { 0.0 } else { c });
    let flip = if e.y != 0.0 {
        e.y < 0.0
    } else if e.x != 0.0 {
        e.x < 0.0
    } else {
        e.z < 0.0
    };
    if flip {
        e = -e;
    }
    // No negative zeros: atan2(-0, -0) would give -180.
    e = e.map(|c| c + 0.0);
    let n = e.norm();
    if n > 0.0 {
        e /= n;
    }
    let theta = e.y.atan2(e.x).to_degrees();
    let theta = if theta >= 180.0 { 0.0 } else { theta };
    let phi = e.z.clamp(-1.0, 1.0).asin().to_degrees();
    (theta, phi)
}

/// λ range of each sub-histogram, fixed by the source neighborhood and
/// reused for the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinThresholds {
    pub lambda: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub values: Vec<f64>,
    /// Eigenpairs accumulated into each sub-histogram.
    pub mass: [usize; 3],
}

fn bin(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    if !(hi > lo) {
        return 0;
    }
    let t = ((x - lo) / (hi - lo) * n as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(n - 1)
    }
}

/// Feature at `v0`: three `N_θ × N_φ × N_λ` eigenpair histograms over the
/// 3×3×3 neighborhood, then the Gaussian-weighted mean Φ of that
/// neighborhood. Returns `None` when any neighbor lacks a Hessian.
///
/// Without `shared` the λ ranges are the neighborhood's own min/max and are
/// returned for reuse; with `shared` those ranges are used as given and
/// out-of-range values fall into the edge bins.
pub fn build_feature(
    volume: &SdfVolume,
    v0: [isize; 3],
    shared: Option<&BinThresholds>,
    params: &FeatureParams,
) -> Option<(Feature, BinThresholds)> {
    let mut pairs = Vec::with_capacity(27);
    let mut weighted = 0.0;
    let mut weight_sum = 0.0;
    let two_s2 = 2.0 * params.sigma * params.sigma;
    for dz in -1..=1isize {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let v = [v0[0] + dx, v0[1] + dy, v0[2] + dz];
                let h = hessian_at(volume, v)?;
                pairs.push(eigen_pairs(&h));
                let r2 = (dx * dx + dy * dy + dz * dz) as f64;
                let w = (-r2 / two_s2).exp();
                weighted += w * volume.phi(v)?;
                weight_sum += w;
            }
        }
    }
    let thresholds = match shared {
        Some(t) => *t,
        None => {
            let mut lambda = [[f64::INFINITY, f64::NEG_INFINITY]; 3];
            for p in &pairs {
                for i in 0..3 {
                    lambda[i][0] = lambda[i][0].min(p[i].lambda);
                    lambda[i][1] = lambda[i][1].max(p[i].lambda);
                }
            }
            BinThresholds { lambda }
        }
    };
    let sub = params.sub_len();
    let mut values = vec![0.0; params.len()];
    let mut mass = [0usize; 3];
    for p in &pairs {
        for i in 0..3 {
            let e = p[i];
            let [lo, hi] = thresholds.lambda[i];
            let tl = bin(e.lambda, lo, hi, params.n_lambda);
            let tt = bin(e.theta, 0.0, 180.0, params.n_theta);
            let tp = bin(e.phi, -90.0, 90.0, params.n_phi);
            values[i * sub + (tt * params.n_phi + tp) * params.n_lambda + tl] += 1.0;
            mass[i] += 1;
        }
    }
    values[3 * sub] = weighted / weight_sum;
    Some((Feature { values, mass }, thresholds))
}

/// `1 / (1 + α‖f − f'‖)`. Exactly 1 only for identical inputs.
pub fn similarity(f: &[f64], g: &[f64], alpha: f64) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::Validation(format!(
            "feature lengths differ: {} vs {}",
            f.len(),
            g.len()
        )));
    }
    let scale = f.iter().zip(g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        return Ok(1.0);
    }
    let dist = scale
        * f.iter()
            .zip(g)
            .map(|(a, b)| ((a - b) / scale).powi(2))
            .sum::<f64>()
            .sqrt();
    let sim = 1.0 / (1.0 + alpha * dist);
    // Keep distinct features strictly below 1 even when α·d underflows.
    Ok(sim.min(1.0 - f64::EPSILON / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_fold_hemispheres() {
        for e in [
            Vector3::new(0.3, -0.5, 0.8).normalize(),
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            Vector3::new(1.0, 0.0, 1.0).normalize(),
        ] {
            let a = direction_angles(&e);
            let b = direction_angles(&-e);
            assert_eq!(a, b);
            assert!((0.0..180.0).contains(&a.0));
            assert!((-90.0..=90.0).contains(&a.1));
        }
        assert_eq!(direction_angles(&Vector3::z()), (0.0, 90.0));
        assert_eq!(direction_angles(&-Vector3::x()), (0.0, 0.0));
    }

    #[test]
    fn normalized_lambdas_are_bounded() {
        let h = Matrix3::new(3.0, 1.0, 0.0, 1.0, -2.0, 0.5, 0.0, 0.5, 1.0);
        let p = eigen_pairs(&h);
        let total: f64 = p.iter().map(|e| e.lambda.abs()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(p[0].lambda >= p[1].lambda && p[1].lambda >= p[2].lambda);
    }

    #[test]
    fn identical_hessians_fill_one_bin() {
        let v = SdfVolume::from_fn([0.0; 3], 1.0, [9, 9, 9], 100.0, |i, j, k| {
            let (x, y, z) = (i as f64, j as f64, k as f64);
            x * x + 0.5 * y * y - z * z
        });
        let params = FeatureParams::default();
        let (f, _) = build_feature(&v, [4, 4, 4], None, &params).unwrap();
        assert_eq!(f.values.len(), 451);
        assert_eq!(f.mass, [27; 3]);
        for i in 0..3 {
            let h = &f.values[i * 150..(i + 1) * 150];
            assert_eq!(h.iter().filter(|&&c| c > 0.0).count(), 1);
            assert_eq!(h.iter().sum::<f64>(), 27.0);
        }
    }

    #[test]
    fn constant_field_scalar() {
        let v = SdfVolume::from_fn([0.0; 3], 0.007, [9, 9, 9], 0.028, |_, _, _| 0.0123);
        let (f, _) = build_feature(&v, [4, 4, 4], None, &FeatureParams::default()).unwrap();
        assert!((f.values[450] - 0.0123).abs() < 1e-15);
    }

    #[test]
    fn missing_neighborhood_is_skipped() {
        let v = SdfVolume::from_fn([0.0; 3], 1.0, [6, 6, 6], 1.0, |_, _, _| 0.0);
        assert!(build_feature(&v, [2, 2, 2], None, &FeatureParams::default()).is_none());
    }

    #[test]
    fn shared_thresholds_clamp() {
        assert_eq!(bin(-5.0, 0.0, 1.0, 6), 0);
        assert_eq!(bin(5.0, 0.0, 1.0, 6), 5);
        assert_eq!(bin(1.0, 0.0, 1.0, 6), 5);
        assert_eq!(bin(0.5, 0.0, 1.0, 6), 3);
        assert_eq!(bin(0.3, 0.3, 0.3, 6), 0);
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity(&[1.0, 2.0], &[1.0, 2.0], 2.0).unwrap(), 1.0);
        assert!((similarity(&[0.0], &[0.5], 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((similarity(&[0.0, 0.0], &[6.0, 8.0], 2.0).unwrap() - 1.0 / 21.0).abs() < 1e-15);
        assert!(similarity(&[0.0], &[1e-300], 2.0).unwrap() < 1.0);
        assert!(similarity(&[0.0], &[0.0, 1.0], 2.0).is_err());
    }
}
