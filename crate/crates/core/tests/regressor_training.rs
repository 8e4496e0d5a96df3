use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segqc_core::metrics::mae;
use segqc_core::regressor::{
    huber_grad, huber_loss, predict, train_regressor, FeatureVector, Network, PairKind, RegressorModel, TrainConfig,
};

const FD_STEP: f64 = 1e-5;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error of the analytic gradient against central differences.
fn gradient_error(net: &Network, xs: &[Vec<f64>], ys: &[f64], delta: f64) -> f64 {
    let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let (_, analytic) = net.objective_and_gradient(&rows, ys, delta);
    let p0 = net.params();
    let mut probe = net.clone();
    let mut numeric = vec![0.0; p0.len()];
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + FD_STEP;
        probe.set_params(&p);
        let up = probe.objective_and_gradient(&rows, ys, delta).0;
        p[i] = p0[i] - FD_STEP;
        probe.set_params(&p);
        let down = probe.objective_and_gradient(&rows, ys, delta).0;
        numeric[i] = (up - down) / (2.0 * FD_STEP);
    }
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric))
}

fn random_point(rng: &mut ChaCha8Rng, input: usize, n: usize) -> (Network, Vec<Vec<f64>>) {
    let net = Network::init(input, 6, rng.gen_range(-0.5..0.5), rng);
    let xs = (0..n).map(|_| (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    (net, xs)
}

#[test]
fn gradient_matches_finite_differences_in_quadratic_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let (net, xs) = random_point(&mut rng, 5, 12);
        let ys: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let delta = 100.0;
        for (x, y) in xs.iter().zip(&ys) {
            assert!((net.forward(x) - y).abs() < delta / 2.0);
        }
        let err = gradient_error(&net, &xs, &ys, delta);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn gradient_matches_finite_differences_in_linear_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10 {
        let (net, xs) = random_point(&mut rng, 5, 12);
        let delta = 0.05;
        // targets far from every output keep all residuals in the linear part
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                net.forward(x) + side * rng.gen_range(3.0..5.0)
            })
            .collect();
        let err = gradient_error(&net, &xs, &ys, delta);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn huber_scalar_derivative() {
    for &(t, p, d) in &[(0.3, 0.5, 1.0), (0.9, 0.1, 0.5), (0.0, 2.0, 1.0), (1.0, -3.0, 0.25)] {
        let fd = (huber_loss(t, p + FD_STEP, d) - huber_loss(t, p - FD_STEP, d)) / (2.0 * FD_STEP);
        assert!((fd - huber_grad(t, p, d)).abs() < 1e-8);
    }
}

fn linear_dataset(rng: &mut ChaCha8Rng, n: usize) -> Vec<(FeatureVector, f64)> {
    (0..n)
        .map(|_| {
            let values: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let dice = (0.2 + 0.6 * values[0]).clamp(0.0, 1.0);
            (FeatureVector::new(PairKind::Uncertainty, values).unwrap(), dice)
        })
        .collect()
}

fn held_out_mae(model: &RegressorModel, test: &[(FeatureVector, f64)]) -> f64 {
    let pred: Vec<f64> = test.iter().map(|(f, _)| predict(model, f).unwrap()).collect();
    let truth: Vec<f64> = test.iter().map(|(_, d)| *d).collect();
    mae(&pred, &truth).unwrap()
}

#[test]
fn learns_a_linear_dice_relation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let train = linear_dataset(&mut rng, 200);
    let test = linear_dataset(&mut rng, 100);
    let cfg = TrainConfig::default();
    let (model, history) = train_regressor(&train, &cfg).unwrap();
    assert_eq!(history.len(), 200);
    assert!(history.last().unwrap() < &history[0]);
    let err = held_out_mae(&model, &test);
    assert!(err <= 0.05, "held-out MAE {err}");
}

#[test]
fn training_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data = linear_dataset(&mut rng, 64);
    let cfg = TrainConfig {
        epochs: 40,
        seed: 99,
        ..TrainConfig::default()
    };
    let (a, ha) = train_regressor(&data, &cfg).unwrap();
    let (b, hb) = train_regressor(&data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), hb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let (c, _) = train_regressor(&data, &TrainConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(a.network, c.network);
}

#[test]
fn model_file_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = linear_dataset(&mut rng, 32);
    let (model, _) = train_regressor(&data, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    model.save(&p).unwrap();
    let back = RegressorModel::load(&p).unwrap();
    assert_eq!(back, model);
    for (f, _) in &data {
        assert_eq!(predict(&back, f).unwrap().to_bits(), predict(&model, f).unwrap().to_bits());
    }
}
