//! Plane-anchored signed distance fields (PlaneSDF) for detecting object-level
//! changes between two point clouds of the same indoor environment.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`plane_detection`] extracts horizontal and vertical support planes, and
//!    [`planesdf`] fuses every point in a band above each plane into a
//!    plane-local truncated SDF volume, a 2D height map and an object map.
//! 2. [`registration`] pairs planes across the two scenes by pose.
//! 3. [`change2d`] compares the paired height maps and extracts changed blob
//!    candidates.
//! 4. [`validate3d`] confirms or rejects each candidate by comparing local
//!    curvature histograms of the two SDF volumes.
//!
//! [`pipeline`] wires the stages together, [`evaluation`] scores detections
//! against ground truth, and [`scene_io`] handles point cloud files and the
//! synthetic tabletop generator.

pub mod change2d;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod grid;
pub mod pipeline;
pub mod plane_detection;
pub mod planesdf;
pub mod registration;
pub mod scene_io;
pub mod validate3d;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::PlanePose;
pub use scene_io::{LabeledPointCloud, PointCloud};
