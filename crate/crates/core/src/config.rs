//! Pipeline configuration: flat `key = value` text with command-line overrides.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Every tunable of the pipeline. Defaults reproduce the published setup
/// (0.3 m band, 7 mm voxels, δ_n = 0.95, δ_d = 0.2 m, δ_h = 0.02 m,
/// 5×5×6 histogram bins, α = 2, δ_blob = 0.9).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // Plane detection
    pub inlier_tolerance: f64,
    pub min_inliers: usize,
    pub orientation_tolerance_deg: f64,
    pub min_plane_area: f64,
    pub ransac_iterations: usize,
    pub seed: u64,

    // Fusion
    pub fusing_band: f64,
    pub voxel_size: f64,
    pub truncation_voxels: f64,
    /// Voxels with |Φ| ≤ `occupancy_factor · voxel_size` count as occupied.
    pub occupancy_factor: f64,
    /// Occupied voxels whose center lies at or below this height belong to
    /// the plane itself and do not raise the height map.
    pub plane_clearance: f64,
    pub max_voxels: usize,

    // Registration
    pub delta_n: f64,
    pub delta_d: f64,
    pub in_plane_icp: bool,
    pub icp_iterations: usize,

    // 2D change
    pub delta_h: f64,
    pub min_cluster_cells: usize,
    pub dilation_radius: usize,
    pub min_overlap: f64,

    // 3D validation
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_lambda: usize,
    pub alpha: f64,
    pub delta_blob: f64,
    pub doh_floor: f64,
    pub max_key_voxels: usize,
    /// Gaussian weighting σ for the SDF scalar, in voxels.
    pub gaussian_sigma: f64,
    pub similarity_bins: usize,
    /// Score assigned to a key voxel whose target neighborhood is unobserved.
    pub missing_score: f64,

    // Evaluation
    pub match_radius: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inlier_tolerance: 0.01,
            min_inliers: 1000,
            orientation_tolerance_deg: 10.0,
            min_plane_area: 0.1,
            ransac_iterations: 500,
            seed: 0,

            fusing_band: 0.3,
            voxel_size: 0.007,
            truncation_voxels: 4.0,
            occupancy_factor: 1.0,
            plane_clearance: 0.014,
            max_voxels: 60_000_000,

            delta_n: 0.95,
            delta_d: 0.2,
            in_plane_icp: false,
            icp_iterations: 20,

            delta_h: 0.02,
            min_cluster_cells: 12,
            dilation_radius: 2,
            min_overlap: 0.3,

            n_theta: 5,
            n_phi: 5,
            n_lambda: 6,
            alpha: 2.0,
            delta_blob: 0.9,
            doh_floor: 1e-6,
            max_key_voxels: 512,
            gaussian_sigma: 2.0,
            similarity_bins: 10,
            missing_score: 1e-3,

            match_radius: 0.014,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        msg: format!("`{value}` is not a valid number"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config {
            key: key.to_string(),
            msg: format!("`{value}` is not a boolean"),
        }),
    }
}

impl PipelineConfig {
    /// Sets one key from its textual value. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "inlier_tolerance" => self.inlier_tolerance = parse_num(key, v)?,
            "min_inliers" => self.min_inliers = parse_num(key, v)?,
            "orientation_tolerance_deg" => self.orientation_tolerance_deg = parse_num(key, v)?,
            "min_plane_area" => self.min_plane_area = parse_num(key, v)?,
            "ransac_iterations" => self.ransac_iterations = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "fusing_band" => self.fusing_band = parse_num(key, v)?,
            "voxel_size" => self.voxel_size = parse_num(key, v)?,
            "truncation_voxels" => self.truncation_voxels = parse_num(key, v)?,
            "occupancy_factor" => self.occupancy_factor = parse_num(key, v)?,
            "plane_clearance" => self.plane_clearance = parse_num(key, v)?,
            "max_voxels" => self.max_voxels = parse_num(key, v)?,
            "delta_n" => self.delta_n = parse_num(key, v)?,
            "delta_d" => self.delta_d = parse_num(key, v)?,
            "in_plane_icp" => self.in_plane_icp = parse_bool(key, v)?,
            "icp_iterations" => self.icp_iterations = parse_num(key, v)?,
            "delta_h" => self.delta_h = parse_num(key, v)?,
            "min_cluster_cells" => self.min_cluster_cells = parse_num(key, v)?,
            "dilation_radius" => self.dilation_radius = parse_num(key, v)?,
            "min_overlap" => self.min_overlap = parse_num(key, v)?,
            "n_theta" => self.n_theta = parse_num(key, v)?,
            "n_phi" => self.n_phi = parse_num(key, v)?,
            "n_lambda" => self.n_lambda = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "delta_blob" => self.delta_blob = parse_num(key, v)?,
            "doh_floor" => self.doh_floor = parse_num(key, v)?,
            "max_key_voxels" => self.max_key_voxels = parse_num(key, v)?,
            "gaussian_sigma" => self.gaussian_sigma = parse_num(key, v)?,
            "similarity_bins" => self.similarity_bins = parse_num(key, v)?,
            "missing_score" => self.missing_score = parse_num(key, v)?,
            "match_radius" => self.match_radius = parse_num(key, v)?,
            other => {
                return Err(Error::Config {
                    key: other.to_string(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                msg: format!("line {}: expected `key = value`", n + 1),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config {
                key: "config".into(),
                msg: format!("cannot read {}: {e}", p.display()),
            })?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config {
                key: o.clone(),
                msg: "override must look like `key=value`".into(),
            })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        let positive = [
            ("inlier_tolerance", self.inlier_tolerance),
            ("orientation_tolerance_deg", self.orientation_tolerance_deg),
            ("fusing_band", self.fusing_band),
            ("voxel_size", self.voxel_size),
            ("truncation_voxels", self.truncation_voxels),
            ("occupancy_factor", self.occupancy_factor),
            ("delta_n", self.delta_n),
            ("delta_d", self.delta_d),
            ("delta_h", self.delta_h),
            ("alpha", self.alpha),
            ("delta_blob", self.delta_blob),
            ("doh_floor", self.doh_floor),
            ("gaussian_sigma", self.gaussian_sigma),
            ("missing_score", self.missing_score),
            ("match_radius", self.match_radius),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(k, "must be a positive finite number");
            }
        }
        for (k, v) in [("min_plane_area", self.min_plane_area), ("plane_clearance", self.plane_clearance), ("min_overlap", self.min_overlap)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(k, "must be a non-negative finite number");
            }
        }
        let counts = [
            ("min_inliers", self.min_inliers),
            ("ransac_iterations", self.ransac_iterations),
            ("max_voxels", self.max_voxels),
            ("min_cluster_cells", self.min_cluster_cells),
            ("n_theta", self.n_theta),
            ("n_phi", self.n_phi),
            ("n_lambda", self.n_lambda),
            ("max_key_voxels", self.max_key_voxels),
            ("similarity_bins", self.similarity_bins),
        ];
        for (k, v) in counts {
            if v == 0 {
                return bad(k, "must be at least 1");
            }
        }
        if self.delta_n > 1.0 {
            return bad("delta_n", "cosine threshold cannot exceed 1");
        }
        if self.min_overlap > 1.0 {
            return bad("min_overlap", "ratio cannot exceed 1");
        }
        if self.missing_score >= 1.0 {
            return bad("missing_score", "must lie in (0, 1)");
        }
        if self.orientation_tolerance_deg >= 45.0 {
            return bad("orientation_tolerance_deg", "must be below 45 degrees");
        }
        Ok(())
    }

    pub fn truncation(&self) -> f64 {
        self.truncation_voxels * self.voxel_size
    }

    pub fn orientation_tolerance_rad(&self) -> f64 {
        self.orientation_tolerance_deg.to_radians()
    }

    /// Length of a feature vector: three sub-histograms plus the SDF scalar.
    pub fn feature_len(&self) -> usize {
        3 * self.n_theta * self.n_phi * self.n_lambda + 1
    }

    /// Canonical `key = value` rendering; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("inlier_tolerance", self.inlier_tolerance.to_string());
        kv("min_inliers", self.min_inliers.to_string());
        kv("orientation_tolerance_deg", self.orientation_tolerance_deg.to_string());
        kv("min_plane_area", self.min_plane_area.to_string());
        kv("ransac_iterations", self.ransac_iterations.to_string());
        kv("seed", self.seed.to_string());
        kv("fusing_band", self.fusing_band.to_string());
        kv("voxel_size", self.voxel_size.to_string());
        kv("truncation_voxels", self.truncation_voxels.to_string());
        kv("occupancy_factor", self.occupancy_factor.to_string());
        kv("plane_clearance", self.plane_clearance.to_string());
        kv("max_voxels", self.max_voxels.to_string());
        kv("delta_n", self.delta_n.to_string());
        kv("delta_d", self.delta_d.to_string());
        kv("in_plane_icp", self.in_plane_icp.to_string());
        kv("icp_iterations", self.icp_iterations.to_string());
        kv("delta_h", self.delta_h.to_string());
        kv("min_cluster_cells", self.min_cluster_cells.to_string());
        kv("dilation_radius", self.dilation_radius.to_string());
        kv("min_overlap", self.min_overlap.to_string());
        kv("n_theta", self.n_theta.to_string());
        kv("n_phi", self.n_phi.to_string());
        kv("n_lambda", self.n_lambda.to_string());
        kv("alpha", self.alpha.to_string());
        kv("delta_blob", self.delta_blob.to_string());
        kv("doh_floor", self.doh_floor.to_string());
        kv("max_key_voxels", self.max_key_voxels.to_string());
        kv("gaussian_sigma", self.gaussian_sigma.to_string());
        kv("similarity_bins", self.similarity_bins.to_string());
        kv("missing_score", self.missing_score.to_string());
        kv("match_radius", self.match_radius.to_string());
        s
    }
}
