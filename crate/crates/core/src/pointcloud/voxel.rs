use std::collections::HashMap;

use nalgebra::Vector3;

use super::{CloudError, Point3, PointCloud, Rgb};

/// Replaces the points in each occupied voxel with their centroid.
///
/// Voxel keys are `floor(coord / voxel_size)` on raw coordinates. Output
/// order follows the first point seen in each voxel. Colours are averaged
/// per channel and rounded to nearest.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud, CloudError> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(CloudError::VoxelSize(voxel_size));
    }
    struct Cell {
        sum: Vector3<f64>,
        rgb: [u64; 3],
        n: usize,
    }
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut cells: Vec<Cell> = Vec::new();
    let colors = cloud.colors();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = [
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        ];
        let k = *slot.entry(key).or_insert_with(|| {
            cells.push(Cell {
                sum: Vector3::zeros(),
                rgb: [0; 3],
                n: 0,
            });
            cells.len() - 1
        });
        let cell = &mut cells[k];
        cell.sum += p.coords;
        cell.n += 1;
        if let Some(c) = colors {
            for (acc, &v) in cell.rgb.iter_mut().zip(&c[i]) {
                *acc += v as u64;
            }
        }
    }
    let points: Vec<Point3> = cells
        .iter()
        .map(|c| Point3::from(c.sum / c.n as f64))
        .collect();
    match colors {
        Some(_) => {
            let avg: Vec<Rgb> = cells
                .iter()
                .map(|c| {
                    let n = c.n as u64;
                    c.rgb.map(|s| ((s + n / 2) / n) as u8)
                })
                .collect();
            PointCloud::with_colors(points, avg)
        }
        None => PointCloud::new(points),
    }
}
