//! WebAssembly bindings for the browser demo. Every export returns JSON.

use nalgebra::Vector3;
use serde::Serialize;
use sograb::pipeline::{evaluate_pair, AlignmentMode, PipelineConfig};
use sograb::synth::{deform, sample_shape, DeformSpec, Shape, ShapeSpec};
use sograb::{grasp_score, GraspOutcome, PointCloud, RigidTransform};
use wasm_bindgen::prelude::*;

const DEMO_POINTS: usize = 1200;

#[derive(Debug, Serialize)]
pub struct GraspView {
    pub pre: Vec<[f32; 3]>,
    pub grasp: Vec<[f32; 3]>,
    pub dcd: f64,
    pub score: f64,
    pub rmse: f64,
    pub mode: &'static str,
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub squash: f64,
    pub dcd: f64,
    pub score: f64,
}

#[derive(Debug, Serialize)]
pub struct ScoreSurface {
    pub size: usize,
    /// Row-major: row `i` is `t_dropped / t_cycle = i / (size - 1)`,
    /// column `j` is `d = j / (size - 1)`.
    pub partial: Vec<f64>,
    pub successful: Vec<f64>,
}

fn demo_shape(name: &str) -> Result<Shape, String> {
    Ok(match name {
        "box" => Shape::Box { size: [0.055, 0.045, 0.035] },
        "cylinder" => Shape::Cylinder { radius: 0.025, height: 0.055 },
        "sphere" => Shape::Sphere { radius: 0.0275 },
        "spline" => Shape::ExtrudedSpline { width: 0.055, height: 0.055, depth: 0.03, lobes: 4 },
        other => return Err(format!("unknown shape {other:?}")),
    })
}

fn pre_cloud(shape: &str, seed: u64) -> Result<PointCloud, String> {
    let spec = ShapeSpec { shape: demo_shape(shape)?, n_points: DEMO_POINTS, seed };
    sample_shape(&spec).map_err(|e| e.to_string())
}

fn as_f32(c: &PointCloud) -> Vec<[f32; 3]> {
    c.points().iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect()
}

fn mode(name: &str) -> Result<AlignmentMode, String> {
    name.parse()
}

/// Squashes a shape along z, rotates it about z, aligns the original back
/// onto it and scores a successful grasp.
pub fn grasp_view(shape: &str, squash: f64, rotate_deg: f64, alpha: f64, align: &str, seed: u64) -> Result<GraspView, String> {
    let pre = pre_cloud(shape, seed)?;
    let motion = RigidTransform::from_axis_angle(Vector3::z(), rotate_deg.to_radians(), Vector3::new(0.01, 0.0, 0.0));
    let spec = DeformSpec { squash_ratio: squash, rigid_motion: motion, ..Default::default() };
    let (grasp, truth) = deform(&pre, &spec).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        alpha,
        max_correspondence_dist: Some(0.05),
        ..Default::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    // start ICP a few degrees off the true motion, as a kinematic prior would
    let init = truth.compose(&RigidTransform::from_axis_angle(Vector3::x(), 0.05, Vector3::zeros()));
    let eval = evaluate_pair(&pre, &grasp, &init, mode(align)?, &config)?;
    let score = grasp_score(&GraspOutcome::Successful, Some(eval.dcd)).map_err(|e| e.to_string())?;
    Ok(GraspView {
        pre: as_f32(&eval.aligned_pre),
        grasp: as_f32(&grasp),
        dcd: eval.dcd,
        score: score.value(),
        rmse: eval.rmse,
        mode: eval.mode.as_str(),
    })
}

/// Distance and score against squash ratio, from 1 down to `min_squash`.
pub fn squash_curve(shape: &str, alpha: f64, min_squash: f64, steps: usize, seed: u64) -> Result<Vec<CurvePoint>, String> {
    if !(min_squash > 0.0 && min_squash <= 1.0) || steps < 2 {
        return Err("need 0 < min_squash <= 1 and at least two steps".into());
    }
    let pre = pre_cloud(shape, seed)?;
    let config = PipelineConfig { alpha, ..Default::default() };
    config.validate().map_err(|e| e.to_string())?;
    (0..steps)
        .map(|i| {
            let squash = 1.0 - (1.0 - min_squash) * i as f64 / (steps - 1) as f64;
            let spec = DeformSpec { squash_ratio: squash, ..Default::default() };
            let (grasp, truth) = deform(&pre, &spec).map_err(|e| e.to_string())?;
            let eval = evaluate_pair(&pre, &grasp, &truth, AlignmentMode::Icp, &config)?;
            let score = grasp_score(&GraspOutcome::Successful, Some(eval.dcd)).map_err(|e| e.to_string())?;
            Ok(CurvePoint { squash, dcd: eval.dcd, score: score.value() })
        })
        .collect()
}

/// Score over distance and hold fraction for both scored outcomes.
pub fn score_surface(size: usize) -> Result<ScoreSurface, String> {
    if size < 2 {
        return Err("size must be at least 2".into());
    }
    let step = |k: usize| k as f64 / (size - 1) as f64;
    let mut partial = Vec::with_capacity(size * size);
    let mut successful = Vec::with_capacity(size * size);
    for i in 0..size {
        let outcome = GraspOutcome::Partial { t_dropped: step(i), t_cycle: 1.0 };
        for j in 0..size {
            let d = Some(step(j));
            partial.push(grasp_score(&outcome, d).map_err(|e| e.to_string())?.value());
            successful.push(grasp_score(&GraspOutcome::Successful, d).map_err(|e| e.to_string())?.value());
        }
    }
    Ok(ScoreSurface { size, partial, successful })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("serialisable"))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = graspDemo)]
pub fn grasp_demo(shape: &str, squash: f64, rotate_deg: f64, alpha: f64, mode: &str, seed: u32) -> Result<String, JsValue> {
    to_js(grasp_view(shape, squash, rotate_deg, alpha, mode, seed as u64))
}

#[wasm_bindgen(js_name = squashCurve)]
pub fn squash_curve_js(shape: &str, alpha: f64, min_squash: f64, steps: usize, seed: u32) -> Result<String, JsValue> {
    to_js(squash_curve(shape, alpha, min_squash, steps, seed as u64))
}

#[wasm_bindgen(js_name = scoreSurface)]
pub fn score_surface_js(size: usize) -> Result<String, JsValue> {
    to_js(score_surface(size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsquashed_grasp_is_perfect() {
        let v = grasp_view("box", 1.0, 30.0, 100.0, "icp", 1).unwrap();
        assert!(v.dcd < 1e-9, "{}", v.dcd);
        assert!(v.score > 0.999);
        assert_eq!(v.pre.len(), v.grasp.len());
    }

    #[test]
    fn pca_mode_reports_itself() {
        let v = grasp_view("spline", 0.8, 60.0, 100.0, "pca", 2).unwrap();
        assert_eq!(v.mode, "pca");
        assert!(v.dcd > 0.0 && v.dcd < 1.0);
    }

    #[test]
    fn curve_is_monotone() {
        let c = squash_curve("cylinder", 100.0, 0.5, 4, 3).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].squash, 1.0);
        for w in c.windows(2) {
            assert!(w[1].dcd > w[0].dcd);
            assert!(w[1].score < w[0].score);
        }
    }

    #[test]
    fn surface_ranges() {
        let s = score_surface(11).unwrap();
        assert_eq!(s.partial.len(), 121);
        assert!(s.partial.iter().all(|v| (0.0..=0.5).contains(v)));
        assert!(s.successful.iter().all(|v| (0.5..=1.0).contains(v)));
        assert_eq!(s.partial[120], 0.0);
        assert_eq!(s.partial[110], 0.5);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(grasp_view("torus", 1.0, 0.0, 100.0, "icp", 1).is_err());
        assert!(grasp_view("box", 1.0, 0.0, -1.0, "icp", 1).is_err());
        assert!(grasp_view("box", 1.0, 0.0, 100.0, "sift", 1).is_err());
        assert!(squash_curve("box", 100.0, 0.0, 4, 1).is_err());
        assert!(score_surface(1).is_err());
    }
}
