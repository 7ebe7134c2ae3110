use serde::{Deserialize, Serialize};

use super::{CloudError, Point3, PointCloud, Rgb};

/// Axis-aligned box in meters, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl CropBox {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Thresholds for isolating a bright, unsaturated (white or grey) object
/// from a dark scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    /// Minimum of `floor((r + g + b) / 3)`.
    pub min_brightness: u8,
    /// Maximum pairwise channel difference.
    pub max_chroma_spread: u8,
    pub crop_box: Option<CropBox>,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_brightness: 128,
            max_chroma_spread: 40,
            crop_box: None,
        }
    }
}

pub(crate) fn brightness(c: &Rgb) -> u8 {
    ((c[0] as u16 + c[1] as u16 + c[2] as u16) / 3) as u8
}

pub(crate) fn chroma_spread(c: &Rgb) -> u8 {
    let [r, g, b] = *c;
    r.abs_diff(g).max(g.abs_diff(b)).max(r.abs_diff(b))
}

/// Keeps the points that pass the brightness and chroma tests and, when
/// given, lie inside the crop box. Order is preserved.
pub fn segment_by_color(cloud: &PointCloud, params: &SegmentationParams) -> Result<PointCloud, CloudError> {
    let colors = cloud.colors().ok_or(CloudError::MissingColors)?;
    let points = cloud.points();
    let out = cloud.filter_indexed(|i| {
        let c = &colors[i];
        brightness(c) >= params.min_brightness
            && chroma_spread(c) <= params.max_chroma_spread
            && params.crop_box.is_none_or(|b| b.contains(&points[i]))
    });
    if out.is_empty() {
        return Err(CloudError::SegmentedEmpty);
    }
    Ok(out)
}
