//! Synthetic before/during-grasp cloud pairs with known ground truth.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so a spec
//! always produces the same cloud.

use std::f64::consts::{PI, TAU};

use nalgebra::{Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::RigidTransform;
use crate::pointcloud::{centroid_of, Point3, PointCloud};

/// Name of the generator recorded in sidecar metadata.
pub const GENERATOR: &str = "ChaCha8Rng::seed_from_u64";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("invalid deformation: {0}")]
    Deform(String),
    #[error("occlusion removed all points")]
    FullyOccluded,
}

/// Closed surfaces centred on the origin. Dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    /// A random closed spline mirrored about the `x = 0` plane, then
    /// extruded along z. `width` and `height` bound the profile in x and y.
    ExtrudedSpline {
        width: f64,
        height: f64,
        depth: f64,
        /// Control points per half of the profile.
        #[serde(default = "default_lobes")]
        lobes: usize,
    },
}

fn default_lobes() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub n_points: usize,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_points < 10 {
            return Err(SynthError::Shape(format!("n_points must be >= 10, got {}", self.n_points)));
        }
        let dims: Vec<f64> = match self.shape {
            Shape::Box { size } => size.to_vec(),
            Shape::Cylinder { radius, height } => vec![radius, height],
            Shape::Sphere { radius } => vec![radius],
            Shape::ExtrudedSpline { width, height, depth, lobes } => {
                if lobes < 2 {
                    return Err(SynthError::Shape("extruded spline needs at least 2 lobes".into()));
                }
                vec![width, height, depth]
            }
        };
        if dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            Ok(())
        } else {
            Err(SynthError::Shape(format!("dimensions must be positive, got {dims:?}")))
        }
    }
}

/// Uniform surface sample of the shape.
pub fn sample_shape(spec: &ShapeSpec) -> Result<PointCloud, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_points;
    let points = match spec.shape {
        Shape::Box { size } => sample_box(&mut rng, size, n),
        Shape::Cylinder { radius, height } => sample_cylinder(&mut rng, radius, height, n),
        Shape::Sphere { radius } => (0..n)
            .map(|_| {
                let v = loop {
                    let v = Vector3::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
                    if v.norm() > 1e-6 {
                        break v;
                    }
                };
                Point3::from(v.normalize() * radius)
            })
            .collect(),
        Shape::ExtrudedSpline { width, height, depth, lobes } => {
            let profile = mirrored_profile(&mut rng, width, height, lobes);
            sample_extrusion(&mut rng, &profile, depth, n)
        }
    };
    Ok(PointCloud::new(points).expect("sampled points are finite"))
}

fn sample_box(rng: &mut ChaCha8Rng, size: [f64; 3], n: usize) -> Vec<Point3> {
    let h = size.map(|s| s / 2.0);
    // faces normal to x, y, z (two of each)
    let areas = [size[1] * size[2], size[0] * size[2], size[0] * size[1]];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    axis = k;
                    break;
                }
                pick -= a;
            }
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = if k == axis {
                    if rng.random::<bool>() { h[k] } else { -h[k] }
                } else {
                    rng.random_range(-h[k]..h[k])
                };
            }
            Point3::new(p[0], p[1], p[2])
        })
        .collect()
}

fn sample_cylinder(rng: &mut ChaCha8Rng, radius: f64, height: f64, n: usize) -> Vec<Point3> {
    let side = TAU * radius * height;
    let cap = PI * radius * radius;
    (0..n)
        .map(|_| {
            let pick = rng.random::<f64>() * (side + 2.0 * cap);
            let theta = rng.random::<f64>() * TAU;
            if pick < side {
                let z = rng.random_range(-height / 2.0..height / 2.0);
                Point3::new(radius * theta.cos(), radius * theta.sin(), z)
            } else {
                let r = radius * rng.random::<f64>().sqrt();
                let z = if pick < side + cap { height / 2.0 } else { -height / 2.0 };
                Point3::new(r * theta.cos(), r * theta.sin(), z)
            }
        })
        .collect()
}

const SEGMENT_STEPS: usize = 32;

/// Closed polyline in the xy plane, symmetric under `x -> -x`.
fn mirrored_profile(rng: &mut ChaCha8Rng, width: f64, height: f64, lobes: usize) -> Vec<[f64; 2]> {
    let half: Vec<(f64, f64)> = (0..lobes)
        .map(|i| {
            let theta = -PI / 2.0 + PI * (i as f64 + 0.5) / lobes as f64;
            (theta, rng.random_range(0.55..1.0))
        })
        .collect();
    // right half by ascending angle, then its mirror image walking back
    let mut ctrl: Vec<[f64; 2]> = half
        .iter()
        .map(|&(t, r)| [r * t.cos(), r * t.sin()])
        .collect();
    ctrl.extend(half.iter().rev().map(|&(t, r)| [-r * t.cos(), r * t.sin()]));

    let m = ctrl.len();
    let mut out = Vec::with_capacity(m * SEGMENT_STEPS);
    for i in 0..m {
        let p0 = ctrl[(i + m - 1) % m];
        let p1 = ctrl[i];
        let p2 = ctrl[(i + 1) % m];
        let p3 = ctrl[(i + 2) % m];
        for s in 0..SEGMENT_STEPS {
            let t = s as f64 / SEGMENT_STEPS as f64;
            let c = catmull_rom(p0, p1, p2, p3, t);
            out.push([c[0] * width / 2.0, c[1] * height / 2.0]);
        }
    }
    out
}

fn catmull_rom(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2], p3: [f64; 2], t: f64) -> [f64; 2] {
    let t2 = t * t;
    let t3 = t2 * t;
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
    };
    [f(p0[0], p1[0], p2[0], p3[0]), f(p0[1], p1[1], p2[1], p3[1])]
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn inside_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn sample_extrusion(rng: &mut ChaCha8Rng, profile: &[[f64; 2]], depth: f64, n: usize) -> Vec<Point3> {
    let m = profile.len();
    let mut cumulative = Vec::with_capacity(m + 1);
    cumulative.push(0.0);
    for i in 0..m {
        let (a, b) = (profile[i], profile[(i + 1) % m]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cumulative.push(cumulative[i] + len);
    }
    let perimeter = cumulative[m];
    let side = perimeter * depth;
    let cap = polygon_area(profile);
    let (lo, hi) = profile.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });

    (0..n)
        .map(|_| {
            let pick = rng.random::<f64>() * (side + 2.0 * cap);
            if pick < side {
                let u = rng.random::<f64>() * perimeter;
                let seg = cumulative.partition_point(|&c| c <= u).saturating_sub(1).min(m - 1);
                let seg_len = cumulative[seg + 1] - cumulative[seg];
                let f = if seg_len > 0.0 { (u - cumulative[seg]) / seg_len } else { 0.0 };
                let (a, b) = (profile[seg], profile[(seg + 1) % m]);
                let z = rng.random_range(-depth / 2.0..depth / 2.0);
                Point3::new(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), z)
            } else {
                let z = if pick < side + cap { depth / 2.0 } else { -depth / 2.0 };
                loop {
                    let x = rng.random_range(lo[0]..hi[0]);
                    let y = rng.random_range(lo[1]..hi[1]);
                    if inside_polygon(profile, x, y) {
                        break Point3::new(x, y, z);
                    }
                }
            }
        })
        .collect()
}

/// Points with `normal · p > offset` are removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl HalfSpace {
    pub fn contains(&self, p: &Point3) -> bool {
        Vector3::from(self.normal).dot(&p.coords) > self.offset
    }

    /// Half-space along `normal` that holds the top `fraction` of the
    /// cloud's projections onto `normal`.
    pub fn dropping_fraction(cloud: &PointCloud, normal: [f64; 3], fraction: f64) -> HalfSpace {
        let n = Vector3::from(normal);
        let mut proj: Vec<f64> = cloud.points().iter().map(|p| n.dot(&p.coords)).collect();
        proj.sort_by(f64::total_cmp);
        let keep = ((1.0 - fraction.clamp(0.0, 1.0)) * proj.len() as f64).round() as usize;
        let offset = match keep {
            0 => f64::NEG_INFINITY,
            k => proj[k - 1],
        };
        HalfSpace { normal, offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformSpec {
    pub squash_axis: [f64; 3],
    /// Scale along `squash_axis`, in (0, 1].
    pub squash_ratio: f64,
    #[serde(default)]
    pub rigid_motion: RigidTransform,
    #[serde(default)]
    pub occlusion: Option<HalfSpace>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DeformSpec {
    fn default() -> Self {
        Self {
            squash_axis: [0.0, 0.0, 1.0],
            squash_ratio: 1.0,
            rigid_motion: RigidTransform::identity(),
            occlusion: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl DeformSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.squash_ratio > 0.0 && self.squash_ratio <= 1.0) {
            return Err(SynthError::Deform(format!("squash_ratio {} not in (0, 1]", self.squash_ratio)));
        }
        let axis = Vector3::from(self.squash_axis);
        if !(axis.norm() > 0.0 && axis.iter().all(|v| v.is_finite())) {
            return Err(SynthError::Deform("squash_axis must be a non-zero vector".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::Deform(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Squashes about the centroid, applies the rigid motion, removes occluded
/// points, then adds Gaussian noise. Returns the cloud and the rigid motion.
pub fn deform(cloud: &PointCloud, spec: &DeformSpec) -> Result<(PointCloud, RigidTransform), SynthError> {
    spec.validate()?;
    if cloud.is_empty() {
        return Err(SynthError::FullyOccluded);
    }
    let axis = Unit::new_normalize(Vector3::from(spec.squash_axis)).into_inner();
    let c = centroid_of(cloud.points());
    let k = spec.squash_ratio - 1.0;
    let motion = spec.rigid_motion;
    let moved = cloud.map_points(|p| {
        let d = p - c;
        let squashed = c + d + axis * (k * d.dot(&axis));
        motion.apply(&squashed)
    });
    let kept = match spec.occlusion {
        Some(h) => moved.filter_indexed(|i| !h.contains(&moved.points()[i])),
        None => moved,
    };
    if kept.is_empty() {
        return Err(SynthError::FullyOccluded);
    }
    let out = if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let sigma = spec.noise_sigma;
        let (points, colors) = kept.into_parts();
        let noisy: Vec<Point3> = points
            .into_iter()
            .map(|p| {
                let n: f64 = StandardNormal.sample(&mut rng);
                let m: f64 = StandardNormal.sample(&mut rng);
                let o: f64 = StandardNormal.sample(&mut rng);
                Point3::new(p.x + sigma * n, p.y + sigma * m, p.z + sigma * o)
            })
            .collect();
        match colors {
            Some(c) => PointCloud::with_colors(noisy, c),
            None => PointCloud::new(noisy),
        }
        .expect("noise keeps points finite")
    } else {
        kept
    };
    Ok((out, motion))
}

/// Sidecar written next to a generated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub generator: String,
    pub shape: ShapeSpec,
    pub deform: DeformSpec,
    pub ground_truth: RigidTransform,
}

/// Samples a shape and deforms it, returning `(pre, grasp, record)`.
pub fn generate_pair(shape: &ShapeSpec, spec: &DeformSpec) -> Result<(PointCloud, PointCloud, SynthRecord), SynthError> {
    let pre = sample_shape(shape)?;
    let (grasp, truth) = deform(&pre, spec)?;
    let record = SynthRecord {
        generator: GENERATOR.to_string(),
        shape: *shape,
        deform: *spec,
        ground_truth: truth,
    };
    Ok((pre, grasp, record))
}
