//! Batch evaluation of recorded grasp trials.
//!
//! A manifest lists trials; each is segmented, downsampled, aligned, and
//! scored independently, then scores are grouped per
//! (object, material, gripper) cell.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{apply_transform, icp_align_indexed, pca_align, AlignError, IcpParams, RigidTransform};
use crate::metric::{dcd_indexed, grasp_score, DcdParams, GraspOutcome, MetricError, Score, DEFAULT_ALPHA};
use crate::pointcloud::{load_cloud, segment_by_color, voxel_downsample, CloudError, NnIndex, PointCloud, SegmentationParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate trial_id {0:?}")]
    DuplicateTrial(String),
    #[error("trial {0:?}: grasp_cloud is required unless the outcome is unsuccessful")]
    MissingGraspCloud(String),
    #[error("trial {0:?}: unsuccessful trials must not list a grasp_cloud")]
    UnexpectedGraspCloud(String),
    #[error("trial {trial_id:?}: {source}")]
    Outcome {
        trial_id: String,
        #[source]
        source: MetricError,
    },
    #[error("trial {trial_id:?}: {message}")]
    Trial { trial_id: String, message: String },
    #[error("no trial with id {0:?} in manifest")]
    UnknownTrial(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentMode {
    #[default]
    Icp,
    Pca,
}

impl AlignmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMode::Icp => "icp",
            AlignmentMode::Pca => "pca",
        }
    }
}

impl std::str::FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "icp" => Ok(AlignmentMode::Icp),
            "pca" => Ok(AlignmentMode::Pca),
            other => Err(format!("unknown alignment mode {other:?} (expected icp or pca)")),
        }
    }
}

/// One grasp attempt as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial_id: String,
    pub object_id: String,
    pub material: String,
    pub gripper_id: String,
    #[serde(default)]
    pub repeat: u32,
    pub pre_cloud: PathBuf,
    #[serde(default)]
    pub grasp_cloud: Option<PathBuf>,
    /// Kinematic estimate of the pre-grasp to in-hand motion.
    #[serde(default)]
    pub init_transform: RigidTransform,
    #[serde(default)]
    pub alignment_mode: AlignmentMode,
    pub outcome: GraspOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub trials: Vec<TrialRecord>,
}

impl Manifest {
    /// Checks record invariants and resolves relative cloud paths against
    /// `base_dir`.
    pub fn validate(mut self, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut seen = HashSet::new();
        for t in &mut self.trials {
            if !seen.insert(t.trial_id.clone()) {
                return Err(PipelineError::DuplicateTrial(t.trial_id.clone()));
            }
            t.outcome.validate().map_err(|source| PipelineError::Outcome {
                trial_id: t.trial_id.clone(),
                source,
            })?;
            match (&t.outcome, &t.grasp_cloud) {
                (GraspOutcome::Unsuccessful, Some(_)) => {
                    return Err(PipelineError::UnexpectedGraspCloud(t.trial_id.clone()))
                }
                (GraspOutcome::Partial { .. } | GraspOutcome::Successful, None) => {
                    return Err(PipelineError::MissingGraspCloud(t.trial_id.clone()))
                }
                _ => {}
            }
            t.pre_cloud = base_dir.join(&t.pre_cloud);
            if let Some(g) = &t.grasp_cloud {
                t.grasp_cloud = Some(base_dir.join(g));
            }
        }
        if let Some(a) = self.alpha {
            DcdParams::new(a).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(self)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let raw: Manifest = serde_json::from_str(text).map_err(|source| PipelineError::Manifest {
            path: base_dir.display().to_string(),
            source,
        })?;
        raw.validate(base_dir)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let raw: Manifest = serde_json::from_str(&text).map_err(|source| PipelineError::Manifest {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    raw.validate(base)
}

/// Processing parameters shared by every trial of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub voxel_size: Option<f64>,
    pub segmentation: Option<SegmentationParams>,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    /// Defaults to ten voxels, or 10 mm without downsampling.
    pub max_correspondence_dist: Option<f64>,
    /// Re-align with PCA when ICP ends above `pca_fallback_rmse`.
    pub pca_fallback: bool,
    pub pca_fallback_rmse: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let icp = IcpParams::default();
        Self {
            alpha: DEFAULT_ALPHA,
            voxel_size: None,
            segmentation: None,
            max_iterations: icp.max_iterations,
            convergence_tol: icp.convergence_tol,
            max_correspondence_dist: None,
            pca_fallback: false,
            pca_fallback_rmse: 0.005,
        }
    }
}

impl PipelineConfig {
    pub fn icp_params(&self) -> IcpParams {
        let max_correspondence_dist = self
            .max_correspondence_dist
            .unwrap_or_else(|| self.voxel_size.map_or(0.01, |v| 10.0 * v));
        IcpParams {
            max_iterations: self.max_iterations,
            convergence_tol: self.convergence_tol,
            max_correspondence_dist,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        DcdParams::new(self.alpha).map_err(|e| cfg(e.to_string()))?;
        self.icp_params().validate().map_err(|e| cfg(e.to_string()))?;
        if let Some(v) = self.voxel_size {
            if !(v > 0.0 && v.is_finite()) {
                return Err(cfg(format!("voxel_size must be positive, got {v}")));
            }
        }
        if self.pca_fallback && (self.pca_fallback_rmse.is_nan() || self.pca_fallback_rmse <= 0.0) {
            return Err(cfg("pca_fallback_rmse must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one evaluated trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub trial_id: String,
    pub object_id: String,
    pub material: String,
    pub gripper_id: String,
    pub repeat: u32,
    pub outcome: GraspOutcome,
    pub dcd: Option<f64>,
    pub score: Score,
    pub alignment_mode: AlignmentMode,
    pub alignment_rmse: Option<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialError {
    pub trial_id: String,
    pub message: String,
}

/// Alignment of `pre` onto `grasp` and the resulting distance.
#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub transform: RigidTransform,
    pub mode: AlignmentMode,
    pub rmse: f64,
    pub dcd: f64,
    pub aligned_pre: PointCloud,
}

/// Aligns `pre` onto `grasp` and measures their distance. Clouds are used
/// as given: segmentation and downsampling happen before this.
pub fn evaluate_pair(
    pre: &PointCloud,
    grasp: &PointCloud,
    init: &RigidTransform,
    mode: AlignmentMode,
    config: &PipelineConfig,
) -> Result<PairEvaluation, String> {
    let grasp_index = NnIndex::build(grasp).map_err(|e| e.to_string())?;
    let icp = config.icp_params();

    let pca = |pre: &PointCloud| -> Result<(RigidTransform, f64), String> {
        let t = pca_align(pre, grasp).map_err(|e| e.to_string())?;
        // one-pass RMSE of the PCA pose under the same rejection rule
        let r = icp_align_indexed(pre, &grasp_index, &t, &IcpParams { max_iterations: 1, ..icp })
            .map(|r| r.rmse)
            .map_err(|e: AlignError| e.to_string())?;
        Ok((t, r))
    };

    let (transform, rmse, used) = match mode {
        AlignmentMode::Pca => {
            let (t, r) = pca(pre)?;
            (t, r, AlignmentMode::Pca)
        }
        AlignmentMode::Icp => {
            let r = icp_align_indexed(pre, &grasp_index, init, &icp).map_err(|e| e.to_string())?;
            if config.pca_fallback && r.rmse > config.pca_fallback_rmse {
                let (t, rm) = pca(pre)?;
                (t, rm, AlignmentMode::Pca)
            } else {
                (r.transform, r.rmse, AlignmentMode::Icp)
            }
        }
    };

    let aligned_pre = apply_transform(pre, &transform);
    let aligned_index = NnIndex::build(&aligned_pre).map_err(|e| e.to_string())?;
    let params = DcdParams::new(config.alpha).map_err(|e| e.to_string())?;
    let dcd = dcd_indexed(&aligned_pre, &aligned_index, grasp, &grasp_index, &params)
        .map_err(|e| e.to_string())?;
    Ok(PairEvaluation {
        transform,
        mode: used,
        rmse,
        dcd,
        aligned_pre,
    })
}

/// Applies the configured segmentation and voxel downsampling, in that order.
pub fn prepare_cloud(cloud: PointCloud, config: &PipelineConfig) -> Result<PointCloud, CloudError> {
    let cloud = match &config.segmentation {
        Some(p) => segment_by_color(&cloud, p)?,
        None => cloud,
    };
    match config.voxel_size {
        Some(v) => voxel_downsample(&cloud, v),
        None => Ok(cloud),
    }
}

/// Scores one trial. Unsuccessful trials score 0 without touching any file.
pub fn evaluate_trial(record: &TrialRecord, config: &PipelineConfig) -> Result<ScoreRecord, PipelineError> {
    let fail = |message: String| PipelineError::Trial {
        trial_id: record.trial_id.clone(),
        message,
    };
    let base = |dcd, score, rmse, mode| ScoreRecord {
        trial_id: record.trial_id.clone(),
        object_id: record.object_id.clone(),
        material: record.material.clone(),
        gripper_id: record.gripper_id.clone(),
        repeat: record.repeat,
        outcome: record.outcome,
        dcd,
        score,
        alignment_mode: mode,
        alignment_rmse: rmse,
        alpha: config.alpha,
    };

    if record.outcome == GraspOutcome::Unsuccessful {
        let score = grasp_score(&record.outcome, None).map_err(|e| fail(e.to_string()))?;
        return Ok(base(None, score, None, record.alignment_mode));
    }
    let grasp_path = record
        .grasp_cloud
        .as_ref()
        .ok_or_else(|| PipelineError::MissingGraspCloud(record.trial_id.clone()))?;
    let load = |p: &Path| {
        load_cloud(p)
            .and_then(|c| prepare_cloud(c, config))
            .map_err(|e| fail(e.to_string()))
    };
    let pre = load(&record.pre_cloud)?;
    let grasp = load(grasp_path)?;
    let eval = evaluate_pair(&pre, &grasp, &record.init_transform, record.alignment_mode, config).map_err(fail)?;
    let score = grasp_score(&record.outcome, Some(eval.dcd)).map_err(|e| fail(e.to_string()))?;
    Ok(base(Some(eval.dcd), score, Some(eval.rmse), eval.mode))
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutput {
    /// Successful evaluations in manifest order.
    pub records: Vec<ScoreRecord>,
    pub errors: Vec<TrialError>,
}

/// Evaluates every trial. Failures are collected rather than aborting the
/// run. With the `parallel` feature, trials run on the current rayon pool;
/// results keep manifest order either way.
pub fn run_batch(trials: &[TrialRecord], config: &PipelineConfig) -> BatchOutput {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ScoreRecord, PipelineError>> = {
        use rayon::prelude::*;
        trials.par_iter().map(|t| evaluate_trial(t, config)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ScoreRecord, PipelineError>> =
        trials.iter().map(|t| evaluate_trial(t, config)).collect();

    let mut out = BatchOutput::default();
    for (trial, r) in trials.iter().zip(results) {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => {
                log::warn!("{e}");
                out.errors.push(TrialError {
                    trial_id: trial.trial_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    out
}

/// Mean and population standard deviation of one
/// (object, material, gripper) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateCell {
    pub object_id: String,
    pub material: String,
    pub gripper_id: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(records: &[ScoreRecord], trials: &[TrialRecord]) -> Result<Vec<AggregateCell>, PipelineError> {
    let lookup: HashMap<&str, &TrialRecord> = trials.iter().map(|t| (t.trial_id.as_str(), t)).collect();
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let t = lookup
            .get(r.trial_id.as_str())
            .ok_or_else(|| PipelineError::UnknownTrial(r.trial_id.clone()))?;
        groups
            .entry((t.object_id.clone(), t.material.clone(), t.gripper_id.clone()))
            .or_default()
            .push(r.score.value());
    }
    Ok(groups
        .into_iter()
        .map(|((object_id, material, gripper_id), scores)| {
            let (mean, std) = mean_std(&scores);
            AggregateCell {
                object_id,
                material,
                gripper_id,
                n: scores.len(),
                mean,
                std,
            }
        })
        .collect())
}

/// Population mean and standard deviation. Identical inputs give exactly
/// that value and zero.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return (first, 0.0);
    }
    let n = xs.len() as f64;
    let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
    let mean = (xs.iter().sum::<f64>() / n).clamp(lo, hi);
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub const SCORES_HEADER: [&str; 13] = [
    "trial_id",
    "object_id",
    "material",
    "gripper_id",
    "repeat",
    "outcome",
    "dcd",
    "score",
    "alignment_mode",
    "alignment_rmse",
    "alpha",
    "t_dropped",
    "t_cycle",
];

pub const AGGREGATE_HEADER: [&str; 6] = ["object_id", "material", "gripper_id", "n", "mean", "std"];

fn num(v: f64) -> String {
    // Display is the shortest string that parses back to the same f64
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn scores_csv(records: &[ScoreRecord]) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORES_HEADER)?;
    for r in records {
        let (td, tc) = match r.outcome {
            GraspOutcome::Partial { t_dropped, t_cycle } => (Some(t_dropped), Some(t_cycle)),
            _ => (None, None),
        };
        w.write_record([
            r.trial_id.clone(),
            r.object_id.clone(),
            r.material.clone(),
            r.gripper_id.clone(),
            r.repeat.to_string(),
            r.outcome.label().to_string(),
            opt_num(r.dcd),
            num(r.score.value()),
            r.alignment_mode.as_str().to_string(),
            opt_num(r.alignment_rmse),
            num(r.alpha),
            opt_num(td),
            opt_num(tc),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is utf-8"))
}

pub fn aggregate_csv(cells: &[AggregateCell]) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER)?;
    for c in cells {
        w.write_record([
            c.object_id.clone(),
            c.material.clone(),
            c.gripper_id.clone(),
            c.n.to_string(),
            num(c.mean),
            num(c.std),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is utf-8"))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear red-yellow-green ramp over scores in [0.5, 1].
fn ramp(v: f64) -> (u8, u8, u8) {
    let t = ((v - 0.5) / 0.5).clamp(0.0, 1.0);
    let stops = [(215.0, 48.0, 39.0), (254.0, 224.0, 139.0), (26.0, 152.0, 80.0)];
    let (a, b, f) = if t < 0.5 {
        (stops[0], stops[1], t / 0.5)
    } else {
        (stops[1], stops[2], (t - 0.5) / 0.5)
    };
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Objects as rows, (material, gripper) pairs as columns; each cell shows
/// `mean ± std`.
pub fn heatmap_svg(cells: &[AggregateCell]) -> String {
    let rows: Vec<&str> = cells
        .iter()
        .map(|c| c.object_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cols: Vec<(&str, &str)> = cells
        .iter()
        .map(|c| (c.material.as_str(), c.gripper_id.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup: HashMap<(&str, &str, &str), &AggregateCell> = cells
        .iter()
        .map(|c| ((c.object_id.as_str(), c.material.as_str(), c.gripper_id.as_str()), c))
        .collect();

    let (cw, ch, left, top) = (96.0, 28.0, 64.0, 56.0);
    let width = left + cw * cols.len() as f64 + 8.0;
    let height = top + ch * rows.len() as f64 + 8.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (j, (material, gripper)) in cols.iter().enumerate() {
        let x = left + cw * (j as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{x}" y="20" text-anchor="middle">{}</text>"#, xml_escape(material));
        let _ = writeln!(s, r#"<text x="{x}" y="36" text-anchor="middle">{}</text>"#, xml_escape(gripper));
    }
    for (i, object) in rows.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + ch / 2.0 + 4.0,
            xml_escape(object)
        );
        for (j, (material, gripper)) in cols.iter().enumerate() {
            let x = left + cw * j as f64;
            match lookup.get(&(*object, *material, *gripper)) {
                Some(c) => {
                    let (r, g, b) = ramp(c.mean);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="rgb({r},{g},{b})" stroke="white"/>"#
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle">{:.3} ± {:.3}</text>"#,
                        x + cw / 2.0,
                        y + ch / 2.0 + 4.0,
                        c.mean,
                        c.std
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="rgb(220,220,220)" stroke="white"/>"#
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Run summary written beside the CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport<'a> {
    pub config: &'a PipelineConfig,
    pub icp: IcpParams,
    pub std_convention: &'static str,
    pub n_trials: usize,
    pub n_scored: usize,
    pub n_failed: usize,
    pub errors: &'a [TrialError],
}

/// Writes `scores.csv`, `aggregate.csv`, `heatmap.svg` and `report.json`.
pub fn export_results(
    out: &BatchOutput,
    cells: &[AggregateCell],
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(), PipelineError> {
    let dir = out_dir.as_ref();
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| PipelineError::Write {
            path: path.display().to_string(),
            source,
        })
    };
    fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    write("scores.csv", &scores_csv(&out.records)?)?;
    write("aggregate.csv", &aggregate_csv(cells)?)?;
    write("heatmap.svg", &heatmap_svg(cells))?;
    let report = RunReport {
        config,
        icp: config.icp_params(),
        std_convention: "population",
        n_trials: out.records.len() + out.errors.len(),
        n_scored: out.records.len(),
        n_failed: out.errors.len(),
        errors: &out.errors,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    write("report.json", &(json + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(id: &str, object: &str, outcome: GraspOutcome) -> TrialRecord {
        TrialRecord {
            trial_id: id.into(),
            object_id: object.into(),
            material: "40A".into(),
            gripper_id: "rigid".into(),
            repeat: 0,
            pre_cloud: "pre.ply".into(),
            grasp_cloud: (outcome != GraspOutcome::Unsuccessful).then(|| "grasp.ply".into()),
            init_transform: RigidTransform::identity(),
            alignment_mode: AlignmentMode::Icp,
            outcome,
        }
    }

    fn scored(id: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            trial_id: id.into(),
            object_id: String::new(),
            material: String::new(),
            gripper_id: String::new(),
            repeat: 0,
            outcome: GraspOutcome::Successful,
            dcd: Some(2.0 * (1.0 - score)),
            score: Score(score),
            alignment_mode: AlignmentMode::Icp,
            alignment_rmse: Some(0.0),
            alpha: 100.0,
        }
    }

    #[test]
    fn minimal_manifest() {
        let m = Manifest::from_json(
            r#"{"alpha": 100.0, "trials": [{"trial_id": "t0", "object_id": "B1", "material": "40A",
                "gripper_id": "fin-ray-4", "repeat": 0, "pre_cloud": "a.ply", "grasp_cloud": "b.ply",
                "init_transform": {"rotation": [1,0,0,0,1,0,0,0,1], "translation": [0,0,0.1]},
                "alignment_mode": "icp", "outcome": {"type": "successful"}}]}"#,
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(m.trials.len(), 1);
        assert_eq!(m.trials[0].pre_cloud, PathBuf::from("/data/a.ply"));
        assert_eq!(m.trials[0].grasp_cloud, Some(PathBuf::from("/data/b.ply")));
        assert_eq!(m.alpha, Some(100.0));
    }

    #[test]
    fn manifest_errors() {
        let base = Path::new("/data");
        let partial_missing = r#"{"trials": [{"trial_id": "t0", "object_id": "B1", "material": "40A",
            "gripper_id": "g", "pre_cloud": "a.ply", "grasp_cloud": "b.ply",
            "outcome": {"type": "partial", "t_dropped": 2.0}}]}"#;
        let err = Manifest::from_json(partial_missing, base).unwrap_err();
        assert!(err.to_string().contains("t_cycle"), "{err}");

        let dup = r#"{"trials": [
            {"trial_id": "t0", "object_id": "B1", "material": "40A", "gripper_id": "g", "pre_cloud": "a.ply", "outcome": {"type": "unsuccessful"}},
            {"trial_id": "t0", "object_id": "B1", "material": "40A", "gripper_id": "g", "pre_cloud": "a.ply", "outcome": {"type": "unsuccessful"}}]}"#;
        assert!(matches!(Manifest::from_json(dup, base), Err(PipelineError::DuplicateTrial(_))));

        let missing = r#"{"trials": [{"trial_id": "t0", "object_id": "B1", "material": "40A",
            "gripper_id": "g", "pre_cloud": "a.ply", "outcome": {"type": "successful"}}]}"#;
        assert!(matches!(Manifest::from_json(missing, base), Err(PipelineError::MissingGraspCloud(_))));

        let bad_rot = r#"{"trials": [{"trial_id": "t0", "object_id": "B1", "material": "40A",
            "gripper_id": "g", "pre_cloud": "a.ply", "grasp_cloud": "b.ply",
            "init_transform": {"rotation": [1,0,0,0,1,0,0,0,2], "translation": [0,0,0]},
            "outcome": {"type": "successful"}}]}"#;
        let err = Manifest::from_json(bad_rot, base).unwrap_err();
        assert!(err.to_string().contains("rigid transform"), "{err}");

        let bad_timing = r#"{"trials": [{"trial_id": "t0", "object_id": "B1", "material": "40A",
            "gripper_id": "g", "pre_cloud": "a.ply", "grasp_cloud": "b.ply",
            "outcome": {"type": "partial", "t_dropped": 3.0, "t_cycle": 2.0}}]}"#;
        assert!(matches!(Manifest::from_json(bad_timing, base), Err(PipelineError::Outcome { .. })));
    }

    #[test]
    fn unsuccessful_trial_loads_nothing() {
        let t = trial("t0", "B1", GraspOutcome::Unsuccessful);
        let r = evaluate_trial(&t, &PipelineConfig::default()).unwrap();
        assert_eq!(r.score.value(), 0.0);
        assert_eq!(r.dcd, None);
        assert_eq!(r.alignment_rmse, None);
    }

    #[test]
    fn missing_cloud_is_trial_error() {
        let t = trial("t1", "B1", GraspOutcome::Successful);
        let out = run_batch(&[t, trial("t2", "B1", GraspOutcome::Unsuccessful)], &PipelineConfig::default());
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].trial_id, "t1");
    }

    #[test]
    fn aggregate_identical_scores() {
        let trials: Vec<TrialRecord> =
            (0..5).map(|i| trial(&format!("t{i}"), "B1", GraspOutcome::Successful)).collect();
        let recs: Vec<ScoreRecord> = (0..5).map(|i| scored(&format!("t{i}"), 0.8)).collect();
        let cells = aggregate(&recs, &trials).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].n, cells[0].mean, cells[0].std), (5, 0.8, 0.0));
    }

    #[test]
    fn aggregate_population_std() {
        let trials = vec![
            trial("a", "B1", GraspOutcome::Successful),
            trial("b", "B1", GraspOutcome::Successful),
        ];
        let cells = aggregate(&[scored("a", 0.5), scored("b", 1.0)], &trials).unwrap();
        assert_eq!(cells[0].mean, 0.75);
        assert_eq!(cells[0].std, 0.25);
    }

    #[test]
    fn aggregate_sorted_and_unknown() {
        let trials = vec![
            trial("a", "O1", GraspOutcome::Successful),
            trial("b", "B1", GraspOutcome::Successful),
        ];
        let cells = aggregate(&[scored("a", 0.9), scored("b", 0.6)], &trials).unwrap();
        assert_eq!(cells[0].object_id, "B1");
        assert_eq!(cells[1].object_id, "O1");
        assert!(matches!(
            aggregate(&[scored("zzz", 0.9)], &trials),
            Err(PipelineError::UnknownTrial(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let mut r = scored("t0", 0.9);
        r.outcome = GraspOutcome::Partial { t_dropped: 5.0, t_cycle: 10.0 };
        let text = scores_csv(&[r]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SCORES_HEADER.join(","));
        let row = lines.next().unwrap();
        assert!(row.starts_with("t0,,,,0,partial,"));
        assert!(row.ends_with(",100,5,10"), "{row}");
    }

    #[test]
    fn heatmap_has_cell_text() {
        let cells = vec![AggregateCell {
            object_id: "B1".into(),
            material: "40A".into(),
            gripper_id: "fin-ray-4".into(),
            n: 5,
            mean: 0.8123,
            std: 0.0134,
        }];
        let svg = heatmap_svg(&cells);
        assert!(svg.contains("0.812 ± 0.013"));
        assert!(svg.starts_with("<svg"));
        assert_eq!(ramp(0.5), (215, 48, 39));
        assert_eq!(ramp(1.0), (26, 152, 80));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = PipelineConfig::default();
        assert_eq!(c.icp_params().max_correspondence_dist, 0.01);
        let v = PipelineConfig { voxel_size: Some(0.002), ..Default::default() };
        assert_eq!(v.icp_params().max_correspondence_dist, 0.02);
        assert!(PipelineConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { voxel_size: Some(0.0), ..Default::default() }.validate().is_err());
        let parsed: PipelineConfig = serde_json::from_str(r#"{"alpha": 50}"#).unwrap();
        assert_eq!(parsed.alpha, 50.0);
        assert_eq!(parsed.max_iterations, 50);
    }
}
