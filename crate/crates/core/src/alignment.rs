//! Rigid registration of a pre-grasp cloud onto its in-hand counterpart.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::{centroid_of, covariance_of, CloudError, NnIndex, Point3, PointCloud};

const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("correspondence count mismatch: {src} source vs {dst} target")]
    LengthMismatch { src: usize, dst: usize },
    #[error("degenerate correspondences: points are coincident or collinear")]
    Degenerate,
    #[error("correspondence set empty; increase max_correspondence_dist")]
    NoCorrespondences,
    #[error("degenerate geometry for PCA alignment")]
    DegeneratePca,
    #[error("invalid ICP parameters: {0}")]
    InvalidParams(String),
}

/// Proper rotation plus translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// JSON form: row-major rotation and a translation vector.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = AlignError;

    fn try_from(r: TransformRepr) -> Result<Self, Self::Error> {
        RigidTransform::new(
            Matrix3::from_row_slice(&r.rotation),
            Vector3::from_column_slice(&r.translation),
        )
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Validates orthonormality and `det = +1` to within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, AlignError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(AlignError::InvalidTransform("non-finite entry".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ORTHO_TOL {
            return Err(AlignError::InvalidTransform(format!(
                "rotation not orthonormal (max deviation {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(AlignError::InvalidTransform(format!("rotation determinant {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self {
            rotation: *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Geodesic angle in radians between this rotation and `other`'s.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos is ill-conditioned near zero; use the skew part there
        let skew = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        let sin = skew.norm() / 2.0;
        sin.atan2(cos)
    }
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.map_points(|p| t.apply(p))
}

/// Least-squares rigid fit `dst ≈ R src + t` (Kabsch, no scale).
///
/// Reflections are corrected by flipping the sign of the singular vector
/// with the smallest singular value.
pub fn best_fit_transform(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, AlignError> {
    if src.len() != dst.len() {
        return Err(AlignError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(AlignError::Degenerate);
    }
    let cs = centroid_of(src);
    let cd = centroid_of(dst);

    // Non-collinearity: the source spread must span at least a plane.
    let spread = SymmetricEigen::new(covariance_of(src)).eigenvalues;
    let (lo, hi) = sorted_pair(&spread);
    if hi.is_nan() || hi <= 0.0 || lo <= hi * 1e-12 {
        return Err(AlignError::Degenerate);
    }

    let h = src.iter().zip(dst).fold(Matrix3::zeros(), |acc: Matrix3<f64>, (s, d)| {
        acc + (s - cs) * (d - cd).transpose()
    });
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(AlignError::Degenerate)?;
    let v_t = svd.v_t.ok_or(AlignError::Degenerate)?;
    let v = v_t.transpose();
    let mut rotation = v * u.transpose();
    if rotation.determinant() < 0.0 {
        // nalgebra's SVD leaves singular values unsorted
        let smallest = svd.singular_values.imin();
        let mut flip = Matrix3::identity();
        flip[(smallest, smallest)] = -1.0;
        rotation = v * flip * u.transpose();
    }
    let translation = cd.coords - rotation * cs.coords;
    RigidTransform::new(rotation, translation)
}

/// Second-largest and largest of three eigenvalues.
fn sorted_pair(ev: &Vector3<f64>) -> (f64, f64) {
    let mut v = [ev[0], ev[1], ev[2]];
    v.sort_by(f64::total_cmp);
    (v[1], v[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMSE changes by less than this between iterations (m).
    pub convergence_tol: f64,
    /// Pairs farther apart than this are dropped (m).
    pub max_correspondence_dist: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-6,
            max_correspondence_dist: 0.01,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.max_iterations == 0 {
            return Err(AlignError::InvalidParams("max_iterations must be >= 1".into()));
        }
        for (name, v) in [
            ("convergence_tol", self.convergence_tol),
            ("max_correspondence_dist", self.max_correspondence_dist),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AlignError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// RMSE of the accepted correspondences under `transform`.
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// RMSE measured at the start of every iteration.
    pub rmse_history: Vec<f64>,
}

/// Point-to-point ICP moving `source` onto `target`, starting from `init`.
///
/// Each iteration matches every transformed source point to its nearest
/// target point, drops pairs beyond `max_correspondence_dist`, measures the
/// RMSE, and, unless the RMSE changed by less than `convergence_tol`, refits
/// the whole transform from the original source points.
pub fn icp_align(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, AlignError> {
    params.validate()?;
    source.require_non_empty()?;
    let index = NnIndex::build(target)?;
    icp_align_indexed(source, &index, init, params)
}

/// [`icp_align`] against a prebuilt target index.
pub fn icp_align_indexed(
    source: &PointCloud,
    target: &NnIndex,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, AlignError> {
    params.validate()?;
    source.require_non_empty()?;
    let max_d2 = params.max_correspondence_dist * params.max_correspondence_dist;
    let mut transform = *init;
    let mut history = Vec::new();
    let mut src_pairs = Vec::with_capacity(source.len());
    let mut dst_pairs = Vec::with_capacity(source.len());
    let mut prev_rmse = f64::INFINITY;

    for iteration in 1..=params.max_iterations {
        src_pairs.clear();
        dst_pairs.clear();
        let mut sum_sq = 0.0;
        for p in source.points() {
            let (j, d2) = target.nearest_sq(&transform.apply(p));
            if d2 <= max_d2 {
                src_pairs.push(*p);
                dst_pairs.push(target.points()[j]);
                sum_sq += d2;
            }
        }
        if src_pairs.is_empty() {
            return Err(AlignError::NoCorrespondences);
        }
        let rmse = (sum_sq / src_pairs.len() as f64).sqrt();
        history.push(rmse);
        if rmse == 0.0 || (prev_rmse - rmse).abs() < params.convergence_tol {
            return Ok(IcpResult {
                transform,
                rmse,
                iterations: iteration,
                converged: true,
                rmse_history: history,
            });
        }
        if iteration == params.max_iterations {
            return Ok(IcpResult {
                transform,
                rmse,
                iterations: iteration,
                converged: false,
                rmse_history: history,
            });
        }
        prev_rmse = rmse;
        transform = best_fit_transform(&src_pairs, &dst_pairs)?;
    }
    unreachable!("loop returns on its last iteration")
}

/// Principal axes of a cloud: eigenvalues descending, eigenvectors as
/// columns. Equal eigenvalues are ordered by their eigenvectors'
/// components, each vector first normalised so its largest-magnitude
/// component is positive.
fn principal_axes(points: &[Point3]) -> Result<(Vector3<f64>, Matrix3<f64>), AlignError> {
    let eig = SymmetricEigen::new(covariance_of(points));
    let mut axes: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|k| {
            let mut v: Vector3<f64> = eig.eigenvectors.column(k).into();
            if v[v.iamax()] < 0.0 {
                v = -v;
            }
            (eig.eigenvalues[k], v)
        })
        .collect();
    axes.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| {
            b.1.iter()
                .zip(a.1.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let largest = axes[0].0;
    if largest.is_nan() || largest <= 0.0 || axes[2].0 <= largest * 1e-12 {
        return Err(AlignError::DegeneratePca);
    }
    let values = Vector3::new(axes[0].0, axes[1].0, axes[2].0);
    let vectors = Matrix3::from_columns(&[axes[0].1, axes[1].1, axes[2].1]);
    Ok((values, vectors))
}

/// Aligns centroids and principal axes of `source` onto `target`.
///
/// Of the four axis sign assignments giving a proper rotation, the one with
/// the smallest mean nearest-neighbour distance from the moved source to
/// the target wins; earlier candidates win ties, and the unflipped
/// assignment is tried first.
pub fn pca_align(source: &PointCloud, target: &PointCloud) -> Result<RigidTransform, AlignError> {
    source.require_non_empty()?;
    target.require_non_empty()?;
    let cs = centroid_of(source.points());
    let ct = centroid_of(target.points());
    let (_, es) = principal_axes(source.points())?;
    let (_, et) = principal_axes(target.points())?;

    let index = NnIndex::build(target)?;
    let parity = (et.determinant() * es.determinant()).signum();
    let candidates: [[f64; 3]; 4] = if parity > 0.0 {
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    } else {
        [[1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]]
    };

    let mut best: Option<(f64, RigidTransform)> = None;
    for signs in candidates {
        let flip = Matrix3::from_diagonal(&Vector3::from(signs));
        let rotation = et * flip * es.transpose();
        let translation = ct.coords - rotation * cs.coords;
        let t = RigidTransform::new(rotation, translation)?;
        let mean_nn = source
            .points()
            .iter()
            .map(|p| index.nearest(&t.apply(p)).1)
            .sum::<f64>()
            / source.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| mean_nn < *b) {
            best = Some((mean_nn, t));
        }
    }
    Ok(best.expect("four candidates evaluated").1)
}
