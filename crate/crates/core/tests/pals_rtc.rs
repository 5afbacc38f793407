mod common;

use common::*;
use mtensor_core::neural::MlpConfig;
use mtensor_core::pals::{e_step, pals_run, PalsState};
use mtensor_core::rtc::*;
use mtensor_core::tensor::psnr;
use mtensor_core::{seeded_rng, DenseTensor, PalsConfig, TwoBlockProblem};
use rand::Rng;

fn scalar(v: f64) -> DenseTensor {
    DenseTensor::new(&[1, 1, 1], vec![v]).unwrap()
}

#[test]
fn e_step_matches_grid_search() {
    let mut rng = seeded_rng(21);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = rng.gen_range(-1.0..1.0);
        let m = rng.gen_range(-1.0..1.0);
        let ep = rng.gen_range(-1.0..1.0);
        let gamma = rng.gen_range(0.0..2.0);
        let eta = rng.gen_range(0.1..2.0);
        let observed = rng.gen_bool(0.7);
        let mask = ObservationMask::new(&[1, 1, 1], vec![observed]).unwrap();
        let e = e_step(&scalar(a), &scalar(ep), &scalar(m), &mask, gamma, eta).unwrap();
        let oracle = e_step_grid_search(a, ep, m, observed, gamma, eta);
        worst = worst.max((e.data()[0] - oracle).abs());
    }
    assert!(worst < 1e-4, "{}", worst);
}

#[test]
fn e_step_observed_example() {
    let mask = ObservationMask::full(&[1, 1, 1]);
    let e = e_step(&scalar(0.0), &scalar(0.0), &scalar(1.0), &mask, 0.5, 1.0).unwrap();
    assert!((e.data()[0] - 0.5).abs() < 1e-15);
    assert!((e_step_grid_search(0.0, 0.0, 1.0, true, 0.5, 1.0) - 0.5).abs() < 1e-4);
}

#[test]
fn tv_gradient_matches_finite_differences() {
    let x = random_tensor(&[4, 4, 3], &mut seeded_rng(22));
    let (_, grad) = tv_l1(&x, TV_EPS).unwrap();
    let mut f = |v: &[f64]| tv_l1(&DenseTensor::new(&[4, 4, 3], v.to_vec()).unwrap(), TV_EPS).unwrap().0;
    let fd: Vec<f64> = (0..x.numel()).map(|k| central_diff(&mut f, x.data(), k, 1e-6)).collect();
    // Relative to the largest component: entries that cancel to ~1e-7 sit at
    // central-difference round-off.
    let scale = fd.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    for (k, d) in fd.iter().enumerate() {
        assert!((grad.data()[k] - d).abs() < 1e-5 * scale, "{}: {} vs {}", k, grad.data()[k], d);
    }
}

#[test]
fn tv_is_permutation_covariant() {
    let x = random_tensor(&[3, 4, 2], &mut seeded_rng(23));
    let (v, g) = tv_l1(&x, 1e-3).unwrap();
    let perm = [2, 0, 1];
    let (vp, gp) = tv_l1(&x.permute(&perm).unwrap(), 1e-3).unwrap();
    assert!((v - vp).abs() < 1e-12);
    assert!(g.permute(&perm).unwrap().max_abs_diff(&gp).unwrap() < 1e-12);
}

#[test]
fn sampling_rate_concentrates() {
    let x = DenseTensor::zeros(&[100, 100, 10]);
    let (_, mask) = corrupt(&x, 0.2, 0.0, 24).unwrap();
    assert!((19_000..=21_000).contains(&mask.count()));
    let (m1, k1) = corrupt(&x.map(|_| 0.5), 0.3, 0.5, 25).unwrap();
    let (m2, k2) = corrupt(&x.map(|_| 0.5), 0.3, 0.5, 25).unwrap();
    assert_eq!((m1, k1), (m2, k2));
}

fn tiny_problem(seed: u64, config: PalsConfig) -> RtcProblem {
    let x = DenseTensor::from_fn(&[8, 8, 3], |i| {
        0.5 + 0.3 * ((i[0] as f64) * 0.4).sin() * ((i[1] as f64) * 0.3).cos() + 0.05 * i[2] as f64
    });
    let (m, mask) = corrupt(&x, 0.5, 0.1, seed).unwrap();
    let mut p = RtcProblem::new(m, mask, vec![2, 2, 2], config).unwrap();
    p.net = MlpConfig {
        depth: 3,
        width: 16,
        out_dim: 1,
        omega0: 5.0,
    };
    p
}

#[test]
fn zero_learning_rate_leaves_theta_unchanged() {
    let mut cfg = PalsConfig {
        inner_steps: 5,
        ..PalsConfig::default()
    };
    cfg.adam.lr = 0.0;
    let p = tiny_problem(26, cfg);
    let model = p.init_model().unwrap();
    let mut state = PalsState::new(&p, model.clone(), &cfg).unwrap();
    let (before, after) = state.theta_step(&p, &cfg).unwrap();
    assert_eq!(before, after);
    assert_eq!(state.model, model);
}

#[test]
fn large_eta_shrinks_the_step() {
    let mut steps = Vec::new();
    for eta in [1.0, 1e2, 1e4] {
        let cfg = PalsConfig {
            eta,
            inner_steps: 20,
            ..PalsConfig::default()
        };
        let p = tiny_problem(27, cfg);
        let mut state = PalsState::new(&p, p.init_model().unwrap(), &cfg).unwrap();
        state.theta_step(&p, &cfg).unwrap();
        let a = state.model.eval_grid(p.coords()).unwrap();
        steps.push(a.dist_sq(&state.a_prev).unwrap().sqrt());
    }
    assert!(steps[0] > steps[1] && steps[1] > steps[2], "{:?}", steps);
}

#[test]
fn lyapunov_descends_on_a_small_run() {
    let cfg = PalsConfig {
        inner_steps: 10,
        outer_iters: 15,
        tol: 0.0,
        seed: 3,
        ..PalsConfig::default()
    };
    let p = tiny_problem(28, cfg);
    let out = pals_run(&p, p.init_model().unwrap(), &cfg).unwrap();
    let v0 = out.history[0].v.abs();
    for w in out.history.windows(2) {
        assert!(w[1].v <= w[0].v + 1e-8 * v0, "{:?} -> {:?}", w[0], w[1]);
        assert!(w[1].g <= w[0].g + 1e-8 * v0);
    }
    for (k, r) in out.history.iter().enumerate() {
        assert_eq!(r.iteration, k);
    }
}

#[test]
fn frozen_sparse_block_is_plain_fitting() {
    let cfg = PalsConfig {
        gamma: f64::INFINITY,
        lambda: 0.0,
        inner_steps: 10,
        outer_iters: 5,
        tol: 0.0,
        ..PalsConfig::default()
    };
    let p = tiny_problem(29, cfg);
    let out = pals_run(&p, p.init_model().unwrap(), &cfg).unwrap();
    assert!(out.e.data().iter().all(|&v| v == 0.0));
    assert!(out.history.last().unwrap().g < out.history[0].g);
}

#[test]
fn recovery_output_is_clamped() {
    let cfg = PalsConfig {
        inner_steps: 5,
        outer_iters: 3,
        ..PalsConfig::default()
    };
    let p = tiny_problem(30, cfg);
    let out = rtc_recover(&p).unwrap();
    assert!(out.x_hat.data().iter().all(|&v| (0.0..=PEAK).contains(&v)));
    assert!(psnr(&out.x_hat, &p.m, PEAK).unwrap().is_finite());
}

#[test]
fn invalid_configuration_is_rejected() {
    let x = DenseTensor::zeros(&[2, 2, 2]);
    let mask = ObservationMask::full(&[2, 2, 2]);
    let bad = PalsConfig {
        eta: 0.0,
        ..PalsConfig::default()
    };
    assert!(RtcProblem::new(x.clone(), mask.clone(), vec![1, 1, 1], bad).is_err());
    assert!(RtcProblem::new(x, mask, vec![1, 1], PalsConfig::default()).is_err());
}
