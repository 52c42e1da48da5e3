mod common;

use cascade_lab::kinetic::{kinetic_gradient, kinetic_log_likelihood, transitions};
use cascade_lab::learn::{fit_samples, moments_over, LearnConfig, PenaltyWeights, Samples};
use cascade_lab::model::ModelKind;
use cascade_lab::{NetworkState, Trajectory};
use common::*;
use rand::Rng;

#[test]
fn kinetic_gradient_matches_central_differences() {
    let mut r = rng(21);
    let n = 6;
    let trajs: Vec<Trajectory> = (0..8)
        .map(|k| {
            let mut states = vec![NetworkState::from_failed(n, &[k % n])];
            for _ in 0..r.gen_range(0..4) {
                let mut s = states.last().unwrap().clone();
                s.set_failed(r.gen_range(0..n), true);
                states.push(s);
            }
            Trajectory { seed: k as u64, initial: vec![k % n], states }
        })
        .collect();
    let samples = transitions(&trajs);
    for _ in 0..20 {
        let h: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut j: Vec<f64> = (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect();
        (0..n).for_each(|i| j[i * n + i] = 0.0);
        let (gh, gj) = kinetic_gradient(&h, &j, &samples);
        let eps = 1e-6;
        let mut num_h = vec![0.0; n];
        for i in 0..n {
            let (mut a, mut b) = (h.clone(), h.clone());
            a[i] += eps;
            b[i] -= eps;
            num_h[i] = (kinetic_log_likelihood(&a, &j, &samples) - kinetic_log_likelihood(&b, &j, &samples)) / (2.0 * eps);
        }
        let mut num_j = vec![0.0; n * n];
        for k in 0..n * n {
            if k % (n + 1) == 0 {
                continue;
            }
            let (mut a, mut b) = (j.clone(), j.clone());
            a[k] += eps;
            b[k] -= eps;
            num_j[k] = (kinetic_log_likelihood(&h, &a, &samples) - kinetic_log_likelihood(&h, &b, &samples)) / (2.0 * eps);
        }
        assert!(relative_error(&gh, &num_h) < 1e-6);
        assert!(relative_error(&gj, &num_j) < 1e-6);
    }
}

#[test]
fn planted_kinetic_model_is_recovered() {
    let truth = planted_kinetic(12, 3);
    let pairs = kinetic_pairs(&truth, 200, 250, 4);
    let samples = Samples::from_transitions(12, pairs.iter().map(|(a, b)| (a, b)));
    let config = LearnConfig { lambda: 2e-3, ..LearnConfig::default() };
    let (fit, _) = fit_samples(&samples, &PenaltyWeights::uniform(12), &config, ModelKind::Kinetic).unwrap();
    let (precision, recall, err) = recovery(&truth, &fit);
    assert!(precision >= 0.9 && recall >= 0.9, "precision {precision} recall {recall}");
    assert!(err <= 0.1, "max error {err}");
    let moments = moments_over(&fit, &samples);
    assert!(moments.single_correlation() > 0.99);
}
