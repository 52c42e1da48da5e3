mod common;

use cascade_lab::glauber::{glauber_update, sample_steady_states, size_stats, SamplerConfig};
use cascade_lab::model::{InteractionModel, ModelKind};
use cascade_lab::NetworkState;
use common::*;

fn bits_of(s: &NetworkState) -> usize {
    (0..s.len()).filter(|&k| s.is_failed(k)).map(|k| 1 << k).sum()
}

fn total_variation(model: &InteractionModel, n_samples: usize, chains: usize) -> f64 {
    let n = model.n_lines();
    let exact = gibbs_distribution(model);
    let config = SamplerConfig { warmup: 1000 * n, stride: 2 * n, n_samples, chains, seed: 17 };
    let samples = sample_steady_states(model, &config).unwrap();
    assert_eq!(samples.len(), n_samples);
    let mut counts = vec![0usize; 1 << n];
    for s in &samples {
        counts[bits_of(s)] += 1;
    }
    0.5 * counts.iter().zip(&exact).map(|(&c, &p)| (c as f64 / n_samples as f64 - p).abs()).sum::<f64>()
}

#[test]
fn sampled_distribution_matches_gibbs() {
    for (n, m) in [(4, 200_000), (6, 200_000), (10, 1_000_000)] {
        let model = planted_symmetric(n, 40 + n as u64);
        let tv = total_variation(&model, m, 4);
        assert!(tv <= 0.02, "{n} spins: TV {tv}");
    }
}

#[test]
fn two_spin_update_rates() {
    // Pr(s_0 → +1) = 1 / (1 + e^{-2(h_0 + J s_1)})
    let model = InteractionModel::from_dense(ModelKind::Static, vec![0.2, -0.1], vec![0.0, 0.6, 0.6, 0.0]).unwrap();
    let mut r = rng(2);
    for s1 in [false, true] {
        let s = NetworkState::from_mask(vec![false, s1]);
        let field: f64 = 0.2 + 0.6 * if s1 { 1.0 } else { -1.0 };
        let p = 1.0 / (1.0 + (-2.0 * field).exp());
        let m = 200_000;
        let hits = (0..m).filter(|_| glauber_update(&model, &s, 0, &mut r).is_failed(0)).count();
        let f = hits as f64 / m as f64;
        assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / m as f64).sqrt() + 1e-4, "{f} vs {p}");
        // other coordinates are untouched
        assert_eq!(glauber_update(&model, &s, 0, &mut r).is_failed(1), s1);
    }
}

#[test]
fn sampling_is_deterministic_and_rejects_kinetic_models() {
    let model = planted_symmetric(6, 1);
    let config = SamplerConfig { warmup: 100, stride: 6, n_samples: 50, chains: 3, seed: 4 };
    assert_eq!(sample_steady_states(&model, &config).unwrap(), sample_steady_states(&model, &config).unwrap());
    let mut kinetic = model.clone();
    kinetic.kind = ModelKind::Kinetic;
    assert!(sample_steady_states(&kinetic, &config).is_err());
}

#[test]
fn size_statistics_are_normalized() {
    let sizes = [0, 0, 1, 3, 3, 3, 10, 40, 40];
    let st = size_stats(&sizes, Some(40));
    assert_eq!(st.z_max, 40);
    assert!((st.cdf.last().unwrap() - 1.0).abs() < 1e-12);
    assert!(st.cdf.windows(2).all(|w| w[1] >= w[0]));
    let mass: f64 = st.pdf.iter().sum();
    assert!((mass - 1.0).abs() < 1e-12, "{mass}");
}
