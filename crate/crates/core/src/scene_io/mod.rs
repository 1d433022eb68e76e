//! Point cloud containers, file formats and the synthetic tabletop generator.

mod ply;
pub mod synthetic;
mod xyz;

use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

pub use synthetic::{
    generate_scene_pair, GroundTruth, ObjectAnnotation, ObjectSpec, ScenarioKind, ScenePair, Shape,
    SyntheticScenario, TableSpec,
};

/// Positions in meters (world frame) with optional RGB colors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            colors: None,
        }
    }

    pub fn with_uniform_color(points: Vec<Point3<f64>>, rgb: [u8; 3]) -> Self {
        let colors = vec![rgb; points.len()];
        Self {
            points,
            colors: Some(colors),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Validation(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::Validation(format!(
                    "{} colors for {} points",
                    c.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }
}

/// Point cloud with a per-point object id; 0 marks background (planes).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    pub cloud: PointCloud,
    pub labels: Vec<u32>,
}

impl LabeledPointCloud {
    /// Keeps only the points whose label satisfies `keep`.
    pub fn filter_labels(&self, keep: impl Fn(u32) -> bool) -> LabeledPointCloud {
        let mut out = LabeledPointCloud::default();
        let mut colors = self.cloud.colors.as_ref().map(|_| Vec::new());
        for (i, (&p, &l)) in self.cloud.points.iter().zip(&self.labels).enumerate() {
            if keep(l) {
                out.cloud.points.push(p);
                out.labels.push(l);
                if let (Some(dst), Some(src)) = (colors.as_mut(), self.cloud.colors.as_ref()) {
                    dst.push(src[i]);
                }
            }
        }
        out.cloud.colors = colors;
        out
    }

    pub fn concat(mut self, other: &LabeledPointCloud) -> LabeledPointCloud {
        self.cloud.points.extend_from_slice(&other.cloud.points);
        self.labels.extend_from_slice(&other.labels);
        self.cloud.colors = None;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    XyzCsv,
}

impl CloudFormat {
    /// `.ply` maps to ASCII PLY; `.csv`, `.xyz` and `.txt` to CSV.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("ply") => Ok(CloudFormat::PlyAscii),
            Some("csv" | "xyz" | "txt") => Ok(CloudFormat::XyzCsv),
            _ => Err(Error::Validation(format!(
                "cannot infer point cloud format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_point_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    Ok(load_labeled(path.as_ref(), format)?.0)
}

/// Loads a cloud whose format is inferred from the file extension.
pub fn load_point_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    load_point_cloud(path, CloudFormat::from_path(path)?)
}

/// Loads a PLY cloud that carries a per-vertex `label` property.
pub fn load_labeled_point_cloud(path: impl AsRef<Path>) -> Result<LabeledPointCloud> {
    let path = path.as_ref();
    let (cloud, labels) = load_labeled(path, CloudFormat::PlyAscii)?;
    let labels = labels.ok_or_else(|| Error::parse(path, 1, "PLY has no `label` vertex property"))?;
    Ok(LabeledPointCloud { cloud, labels })
}

fn load_labeled(path: &Path, format: CloudFormat) -> Result<(PointCloud, Option<Vec<u32>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::PlyAscii => ply::parse(&text, path),
        CloudFormat::XyzCsv => xyz::parse(&text, path).map(|c| (c, None)),
    }
}

/// Writes `cloud` in the format implied by the extension of `path`.
pub fn save_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match CloudFormat::from_path(path)? {
        CloudFormat::PlyAscii => ply::format(cloud, None),
        CloudFormat::XyzCsv => xyz::format(cloud),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_labeled_point_cloud(cloud: &LabeledPointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = ply::format(&cloud.cloud, Some(&cloud.labels));
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_three_vertex_ply() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0.5\n",
        )
        .unwrap();
        let cloud = load_point_cloud(&path, CloudFormat::PlyAscii).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.points[2], Point3::new(0.0, 1.0, 0.5));
        assert!(cloud.colors.is_none());
    }

    #[test]
    fn empty_csv_is_empty_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(load_point_cloud(&path, CloudFormat::XyzCsv).unwrap().is_empty());
    }

    #[test]
    fn truncated_ply_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n1 1 1\n",
        )
        .unwrap();
        match load_point_cloud(&path, CloudFormat::PlyAscii) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 12),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn save_empty_cloud_writes_zero_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.ply");
        save_point_cloud(&PointCloud::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("element vertex 0\n"));
        assert!(load_point_cloud_auto(&path).unwrap().is_empty());
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing_dir").join("x.ply");
        assert!(matches!(
            save_point_cloud(&PointCloud::default(), &path),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn labeled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.ply");
        let cloud = LabeledPointCloud {
            cloud: PointCloud::new(vec![Point3::new(0.1, 0.2, 0.3), Point3::new(1.0, 2.0, 3.0)]),
            labels: vec![4, 0],
        };
        save_labeled_point_cloud(&cloud, &path).unwrap();
        let back = load_labeled_point_cloud(&path).unwrap();
        assert_eq!(back.labels, vec![4, 0]);
        assert_eq!(back.cloud.points, cloud.cloud.points);
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        proptest::collection::vec(
            (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0, any::<[u8; 3]>()),
            1..100,
        )
        .prop_map(|v| PointCloud {
            points: v.iter().map(|&(x, y, z, _)| Point3::new(x, y, z)).collect(),
            colors: Some(v.iter().map(|&(_, _, _, c)| c).collect()),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_within_text_precision(cloud in arb_cloud(), csv in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join(if csv { "c.csv" } else { "c.ply" });
            save_point_cloud(&cloud, &path).unwrap();
            let back = load_point_cloud_auto(&path).unwrap();
            prop_assert_eq!(back.len(), cloud.len());
            prop_assert_eq!(&back.colors, &cloud.colors);
            for (a, b) in back.points.iter().zip(&cloud.points) {
                prop_assert!((a - b).abs().max() <= 1e-6);
            }
        }
    }
}
