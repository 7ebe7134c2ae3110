//! Soft-grasp benchmarking from before/during-grasp point clouds.
//!
//! The deformation of a grasped object is measured as the density-aware
//! chamfer distance between its pre-grasp cloud and its in-hand cloud after
//! rigid alignment, then folded together with the grasp outcome into a
//! score in `[0, 1]`.

pub mod alignment;
pub mod metric;
pub mod pipeline;
pub mod pointcloud;
pub mod synth;

pub use alignment::{AlignError, IcpParams, IcpResult, RigidTransform};
pub use metric::{dcd, grasp_score, DcdParams, GraspOutcome, MetricError, Score};
pub use pointcloud::{CloudError, NnIndex, Point3, PointCloud};
