mod common;

use common::*;
use proptest::prelude::*;
use sograb::alignment::apply_transform;
use sograb::metric::{dcd, one_sided_dcd, DcdParams};
use sograb::{NnIndex, Point3, PointCloud};

fn params(alpha: f64) -> DcdParams {
    DcdParams::new(alpha).unwrap()
}

#[test]
fn indexed_matches_brute_force_on_random_clouds() {
    let mut r = rng(21);
    for alpha in [1.0, 10.0, 100.0, 1000.0] {
        let a = random_cloud(&mut r, 200, 0.05);
        let b = random_cloud(&mut r, 200, 0.05);
        let fast = dcd(&a, &b, &params(alpha)).unwrap();
        let slow = brute_dcd(&a, &b, alpha);
        assert!((fast - slow).abs() <= 1e-12, "alpha {alpha}: {fast} vs {slow}");
    }
}

#[test]
fn brute_force_agrees_on_hand_values() {
    let origin = PointCloud::from_xyz(&[[0.0; 3]]).unwrap();
    let unit = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
    assert!((brute_dcd(&origin, &unit, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    let dup = PointCloud::from_xyz(&[[0.0; 3], [0.0; 3]]).unwrap();
    assert_eq!(brute_dcd(&origin, &dup, 5.0), 0.25);
}

#[test]
fn density_penalty_on_clustered_cloud() {
    // every point of a tight cluster maps to one target point
    let cluster: Vec<[f64; 3]> = (0..10).map(|i| [1e-4 * i as f64, 0.0, 0.0]).collect();
    let cluster = PointCloud::from_xyz(&cluster).unwrap();
    let single = PointCloud::from_xyz(&[[0.0; 3]]).unwrap();
    let idx = NnIndex::build(&single).unwrap();
    let one = one_sided_dcd(&cluster, &idx, 100.0).unwrap();
    let expected = brute_one_sided(cluster.points(), single.points(), 100.0);
    assert!((one - expected).abs() < 1e-15);
    // at least 1 - 1/10 per term
    assert!(one >= 0.9);
}

#[test]
fn outlier_far_from_large_cloud_barely_moves_distance() {
    let mut r = rng(22);
    let a = random_cloud(&mut r, 1000, 0.03);
    let b = random_cloud(&mut r, 1000, 0.03);
    let alpha = 100.0;
    let mut with_outlier = b.points().to_vec();
    with_outlier.push(Point3::new(0.03 + 10.0 / alpha, 0.0, 0.0));
    let b2 = PointCloud::new(with_outlier).unwrap();
    let delta = (dcd(&a, &b2, &params(alpha)).unwrap() - dcd(&a, &b, &params(alpha)).unwrap()).abs();
    assert!(delta < 0.01, "{delta}");
}

fn coords() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-0.05f64..0.05, -0.05f64..0.05, -0.05f64..0.05), 1..60)
}

fn to_cloud(c: &[(f64, f64, f64)]) -> PointCloud {
    PointCloud::new(c.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
}

proptest! {
    #[test]
    fn symmetric_bounded_and_matches_oracle(a in coords(), b in coords(), alpha in 0.5f64..2000.0) {
        let (a, b) = (to_cloud(&a), to_cloud(&b));
        let ab = dcd(&a, &b, &params(alpha)).unwrap();
        let ba = dcd(&b, &a, &params(alpha)).unwrap();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - brute_dcd(&a, &b, alpha)).abs() <= 1e-12);
    }

    #[test]
    fn invariant_under_common_rigid_motion(a in coords(), b in coords(), seed in any::<u64>()) {
        let (a, b) = (to_cloud(&a), to_cloud(&b));
        let g = random_motion(&mut rng(seed), std::f64::consts::PI, 0.5);
        let before = dcd(&a, &b, &params(100.0)).unwrap();
        let after = dcd(&apply_transform(&a, &g), &apply_transform(&b, &g), &params(100.0)).unwrap();
        prop_assert!((before - after).abs() <= 1e-9);
    }

    #[test]
    fn single_pair_is_one_minus_exponential(t in 0.0f64..0.2, alpha in 1.0f64..1000.0) {
        let a = PointCloud::from_xyz(&[[0.0; 3]]).unwrap();
        let b = PointCloud::from_xyz(&[[0.0, t, 0.0]]).unwrap();
        let d = dcd(&a, &b, &params(alpha)).unwrap();
        prop_assert!((d - (1.0 - (-alpha * t).exp())).abs() <= 1e-12);
    }
}
