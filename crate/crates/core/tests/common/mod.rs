//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sograb::alignment::RigidTransform;
use sograb::synth::{sample_shape, Shape, ShapeSpec};
use sograb::{Point3, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            )
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random rigid motion with rotation angle and translation norm bounded.
pub fn random_motion(rng: &mut ChaCha8Rng, max_angle: f64, max_shift: f64) -> RigidTransform {
    let axis = unit_vector(rng);
    let angle = rng.random_range(0.0..max_angle);
    let shift = unit_vector(rng) * rng.random_range(0.0..max_shift);
    RigidTransform::from_axis_angle(axis, angle, shift)
}

pub fn box_cloud(size: [f64; 3], n: usize, seed: u64) -> PointCloud {
    sample_shape(&ShapeSpec { shape: Shape::Box { size }, n_points: n, seed }).unwrap()
}

/// Density-aware chamfer distance by exhaustive search, written without the
/// library's spatial index: O(|a| |b|).
pub fn brute_dcd(a: &PointCloud, b: &PointCloud, alpha: f64) -> f64 {
    0.5 * (brute_one_sided(a.points(), b.points(), alpha) + brute_one_sided(b.points(), a.points(), alpha))
}

pub fn brute_one_sided(s: &[Point3], t: &[Point3], alpha: f64) -> f64 {
    let nearest: Vec<(usize, f64)> = s
        .iter()
        .map(|x| {
            let mut best = (0usize, f64::INFINITY);
            for (j, y) in t.iter().enumerate() {
                let d2 = (x.x - y.x).powi(2) + (x.y - y.y).powi(2) + (x.z - y.z).powi(2);
                if d2 < best.1 {
                    best = (j, d2);
                }
            }
            (best.0, best.1.sqrt())
        })
        .collect();
    let mut count = vec![0usize; t.len()];
    for (j, _) in &nearest {
        count[*j] += 1;
    }
    let mut total = 0.0;
    for (j, d) in &nearest {
        total += 1.0 - (-alpha * d).exp() / count[*j] as f64;
    }
    total / s.len() as f64
}

use serde_json::json;
use sograb::metric::GraspOutcome;
use sograb::pointcloud::{save_cloud, PlyFormat};
use sograb::synth::{deform, DeformSpec};
use std::path::Path;

/// One synthetic trial: a pre-grasp cloud and its squashed, moved copy.
pub struct SynthTrial {
    pub id: String,
    pub object: String,
    pub material: String,
    pub gripper: String,
    pub repeat: u32,
    pub squash: f64,
    pub mode: &'static str,
    pub outcome: GraspOutcome,
}

/// Writes the trial's clouds under `dir` and returns its manifest entry.
/// The kinematic prior is the true motion perturbed by up to 2° and 2 mm.
pub fn write_trial(dir: &Path, pre: &PointCloud, t: &SynthTrial, seed: u64) -> serde_json::Value {
    let mut r = rng(seed);
    let motion = random_motion(&mut r, 0.5, 0.05);
    let spec = DeformSpec {
        squash_axis: [0.0, 0.0, 1.0],
        squash_ratio: t.squash,
        rigid_motion: motion,
        ..Default::default()
    };
    let (grasp, truth) = deform(pre, &spec).unwrap();
    let init = truth.compose(&random_motion(&mut r, 2f64.to_radians(), 0.002));
    let pre_name = format!("{}_pre.ply", t.id);
    let grasp_name = format!("{}_grasp.ply", t.id);
    save_cloud(pre, dir.join(&pre_name), PlyFormat::BinaryLittleEndian).unwrap();
    let outcome = serde_json::to_value(t.outcome).unwrap();
    let mut entry = json!({
        "trial_id": t.id,
        "object_id": t.object,
        "material": t.material,
        "gripper_id": t.gripper,
        "repeat": t.repeat,
        "pre_cloud": pre_name,
        "init_transform": serde_json::to_value(init).unwrap(),
        "alignment_mode": t.mode,
        "outcome": outcome,
    });
    if t.outcome != GraspOutcome::Unsuccessful {
        save_cloud(&grasp, dir.join(&grasp_name), PlyFormat::BinaryLittleEndian).unwrap();
        entry["grasp_cloud"] = json!(grasp_name);
    }
    entry
}

pub fn write_manifest(dir: &Path, alpha: f64, trials: Vec<serde_json::Value>) -> std::path::PathBuf {
    let path = dir.join("manifest.json");
    let doc = json!({ "alpha": alpha, "trials": trials });
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}
