mod common;

use common::*;
use mtensor_core::pcu::*;
use mtensor_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn small_cfg() -> PcuConfig {
    let mut cfg = PcuConfig {
        n_eikonal: 6,
        n_exterior: 6,
        ranks: Some(vec![2, 2, 2]),
        ..PcuConfig::default()
    };
    cfg.net.width = 8;
    cfg.net.depth = 3;
    cfg
}

#[test]
fn sdf_loss_gradient_matches_finite_differences() {
    let cfg = small_cfg();
    let cloud = circle(6, 0.7);
    let mut rng = seeded_rng(31);
    let model = init_sdf(&[2, 2, 2], &cfg.net, &mut rng).unwrap();
    let samples = draw_samples(&cloud, &cfg, &mut rng).unwrap();
    let (_, grad) = sdf_loss(&model, &cloud, &samples, &cfg).unwrap();
    let params = model.params();
    let mut f = |p: &[f64]| {
        let mut m = model.clone();
        m.set_params(p).unwrap();
        sdf_loss(&m, &cloud, &samples, &cfg).unwrap().0.total()
    };
    for _ in 0..20 {
        let k = rng.gen_range(0..params.len());
        let fd = central_diff(&mut f, &params, k, 1e-6);
        assert!(rel_err(grad[k], fd, 1e-6) < 1e-3, "weight {}: {} vs {}", k, grad[k], fd);
    }
}

#[test]
fn three_dimensional_clouds_are_supported() {
    let mut rng = seeded_rng(32);
    let pts: Vec<f64> = (0..30).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let cloud = PointCloud::new(3, pts).unwrap();
    let cfg = small_cfg();
    let model = init_sdf(&[2, 2, 2], &cfg.net, &mut rng).unwrap();
    let samples = draw_samples(&cloud, &cfg, &mut rng).unwrap();
    let (terms, grad) = sdf_loss(&model, &cloud, &samples, &cfg).unwrap();
    assert!(terms.total().is_finite());
    assert_eq!(grad.len(), model.param_count());
}

#[test]
fn malformed_clouds_are_rejected() {
    assert!(PointCloud::new(4, vec![0.0; 8]).is_err());
    assert!(PointCloud::new(2, vec![0.0; 3]).is_err());
    assert!(PointCloud::new(2, vec![0.0, f64::NAN]).is_err());
}

#[test]
fn subsample_keeps_points_of_the_cloud() {
    let dense = circle(320, 1.0);
    let sparse = dense.subsample(0.1, 4).unwrap();
    assert_eq!(sparse.len(), 32);
    for p in sparse.iter() {
        assert!(circle_distance(p, 1.0) < 1e-12);
    }
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(-2.0f64..2.0, 2..40)
        .prop_map(|mut v| {
            if v.len() % 2 == 1 {
                v.pop();
            }
            v
        })
        .prop_filter("nonempty", |v| !v.is_empty())
        .prop_map(|v| PointCloud::new(2, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_is_symmetric_and_nonnegative(p in cloud_strategy(), q in cloud_strategy()) {
        let a = chamfer(&p, &q).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - chamfer(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!(chamfer(&p, &p).unwrap() == 0.0);
    }

    #[test]
    fn f_score_is_rigid_invariant(p in cloud_strategy(), q in cloud_strategy(), angle in 0.0f64..6.3, tx in -5.0f64..5.0, d in 0.05f64..1.0) {
        let (s, c) = angle.sin_cos();
        let move_ = |cl: &PointCloud| cl.map(|a, b| {
            b[0] = c * a[0] - s * a[1] + tx;
            b[1] = s * a[0] + c * a[1] - tx;
        });
        let before = f_score(&p, &q, d).unwrap();
        let after = f_score(&move_(&p), &move_(&q), d).unwrap();
        prop_assert!((0.0..=1.0).contains(&before));
        // Rotation can perturb distances by rounding; only exact ties may flip.
        let tie = nearest_distances(&p, &q).iter().chain(nearest_distances(&q, &p).iter()).any(|&x| (x - d).abs() < 1e-9);
        prop_assert!(tie || (before - after).abs() < 1e-12);
    }
}
