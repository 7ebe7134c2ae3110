//! Point clouds: storage, PLY I/O, nearest-neighbour index, voxel
//! downsampling and colour segmentation.

mod kdtree;
mod ply;
mod segment;
mod voxel;

pub use kdtree::NnIndex;
pub use ply::{load_cloud, read_ply, save_cloud, write_ply, PlyFormat};
pub use segment::{segment_by_color, CropBox, SegmentationParams};
pub use voxel::voxel_downsample;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// A point in meters.
pub type Point3 = nalgebra::Point3<f64>;

/// 8-bit RGB colour.
pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("empty cloud")]
    Empty,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("colour count {colors} does not match point count {points}")]
    ColorLength { points: usize, colors: usize },
    #[error("cloud has no colours")]
    MissingColors,
    #[error("segmentation removed all points")]
    SegmentedEmpty,
    #[error("voxel size must be positive and finite, got {0}")]
    VoxelSize(f64),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PLY: {0}")]
    Ply(String),
}

/// An ordered set of finite 3D points with optional per-point colours.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Rgb>>,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates. Empty clouds are
    /// allowed here; operations that need points check for themselves.
    pub fn new(points: Vec<Point3>) -> Result<Self, CloudError> {
        check_finite(&points)?;
        Ok(Self { points, colors: None })
    }

    pub fn with_colors(points: Vec<Point3>, colors: Vec<Rgb>) -> Result<Self, CloudError> {
        check_finite(&points)?;
        if colors.len() != points.len() {
            return Err(CloudError::ColorLength {
                points: points.len(),
                colors: colors.len(),
            });
        }
        Ok(Self {
            points,
            colors: Some(colors),
        })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self, CloudError> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<Rgb>>) {
        (self.points, self.colors)
    }

    /// Keeps the points whose index satisfies `keep`, preserving order.
    pub fn filter_indexed(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        PointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Maps every point through `f`, keeping colours. The caller guarantees
    /// `f` keeps coordinates finite.
    pub(crate) fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            colors: self.colors.clone(),
        }
    }

    pub(crate) fn require_non_empty(&self) -> Result<(), CloudError> {
        if self.is_empty() {
            Err(CloudError::Empty)
        } else {
            Ok(())
        }
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Result<Point3, CloudError> {
        self.require_non_empty()?;
        Ok(centroid_of(&self.points))
    }

    /// Population covariance (divide by N) of the points about their centroid.
    pub fn covariance(&self) -> Result<Matrix3<f64>, CloudError> {
        self.require_non_empty()?;
        Ok(covariance_of(&self.points))
    }

    /// Per-axis (min, max) bounds.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

fn check_finite(points: &[Point3]) -> Result<(), CloudError> {
    match points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
        Some(index) => Err(CloudError::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn centroid_of(points: &[Point3]) -> Point3 {
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc: Vector3<f64>, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

pub(crate) fn covariance_of(points: &[Point3]) -> Matrix3<f64> {
    let c = centroid_of(points);
    let sum = points.iter().fold(Matrix3::zeros(), |acc: Matrix3<f64>, p| {
        let d = p - c;
        acc + d * d.transpose()
    });
    sum / points.len() as f64
}
