#![allow(dead_code)]

use cascade_lab::model::{InteractionModel, ModelKind};
use cascade_lab::NetworkState;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn state_from_bits(n: usize, bits: usize) -> NetworkState {
    NetworkState::from_mask((0..n).map(|k| bits >> k & 1 == 1).collect())
}

/// `Σ h_i s_i + Σ_{i<j} J_ij s_i s_j` for a symmetric model.
pub fn gibbs_energy(model: &InteractionModel, s: &NetworkState) -> f64 {
    let n = model.n_lines();
    let mut e = 0.0;
    for i in 0..n {
        e += model.h[i] * s.spin(i);
        for j in i + 1..n {
            e += model.coupling(i, j) * s.spin(i) * s.spin(j);
        }
    }
    e
}

/// Exact Gibbs probabilities over all `2^n` states, indexed by bit pattern.
pub fn gibbs_distribution(model: &InteractionModel) -> Vec<f64> {
    let n = model.n_lines();
    let energies: Vec<f64> = (0..1usize << n).map(|b| gibbs_energy(model, &state_from_bits(n, b))).collect();
    let max = energies.iter().cloned().fold(f64::MIN, f64::max);
    let w: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Independent exact draws from a distribution over bit patterns.
pub fn draw_states(n: usize, probs: &[f64], m: usize, seed: u64) -> Vec<NetworkState> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    let mut r = rng(seed);
    (0..m)
        .map(|_| {
            let u = r.gen::<f64>() * acc;
            let b = cdf.partition_point(|&c| c < u).min(probs.len() - 1);
            state_from_bits(n, b)
        })
        .collect()
}

/// Sparse symmetric couplings on a ring plus chords, magnitudes in
/// [0.3, 0.7] with random signs.
pub fn planted_symmetric(n: usize, seed: u64) -> InteractionModel {
    let mut r = rng(seed);
    let mut m = InteractionModel::zeros(ModelKind::Static, n);
    let set = |m: &mut InteractionModel, i: usize, j: usize, v: f64| {
        m.set_coupling(i, j, v);
        m.set_coupling(j, i, v);
    };
    for i in 0..n {
        let v = r.gen_range(0.3..0.7) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        set(&mut m, i, (i + 1) % n, v);
    }
    for i in (0..n).step_by(4) {
        let j = (i + n / 2 + 1) % n;
        let v = r.gen_range(0.3..0.7) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        set(&mut m, i, j, v);
    }
    for i in 0..n {
        m.h[i] = r.gen_range(-0.3..0.3);
    }
    m
}

/// Sparse asymmetric couplings, three per row, magnitudes in [0.4, 0.9].
pub fn planted_kinetic(n: usize, seed: u64) -> InteractionModel {
    let mut r = rng(seed);
    let mut m = InteractionModel::zeros(ModelKind::Kinetic, n);
    for i in 0..n {
        let mut placed = 0;
        while placed < 3 {
            let j = r.gen_range(0..n);
            if j == i || m.coupling(i, j) != 0.0 {
                continue;
            }
            let v = r.gen_range(0.4..0.9) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            m.set_coupling(i, j, v);
            placed += 1;
        }
        m.h[i] = r.gen_range(-0.3..0.3);
    }
    m
}

/// Synchronous kinetic dynamics: `chains` random starts of `steps` steps.
pub fn kinetic_pairs(model: &InteractionModel, chains: usize, steps: usize, seed: u64) -> Vec<(NetworkState, NetworkState)> {
    let n = model.n_lines();
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(chains * steps);
    for _ in 0..chains {
        let mut s = NetworkState::from_mask((0..n).map(|_| r.gen_bool(0.5)).collect());
        for _ in 0..steps {
            let next = NetworkState::from_mask((0..n).map(|i| r.gen::<f64>() < model.failure_probability(i, &s)).collect());
            out.push((s, next.clone()));
            s = next;
        }
    }
    out
}

/// Support precision, recall and max coupling error on the true support.
pub fn recovery(truth: &InteractionModel, fit: &InteractionModel) -> (f64, f64, f64) {
    let n = truth.n_lines();
    let (mut tp, mut fp, mut fneg, mut err) = (0usize, 0usize, 0usize, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (t, f) = (truth.coupling(i, j), fit.coupling(i, j));
            match (t != 0.0, f != 0.0) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
            if t != 0.0 {
                err = err.max((t - f).abs());
            }
        }
    }
    (tp as f64 / (tp + fp).max(1) as f64, tp as f64 / (tp + fneg).max(1) as f64, err)
}

/// Max relative deviation between an analytic and a numeric gradient.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
    analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max)
}

use cascade_lab::grid::{Bus, Generator, Grid, Line};

/// Random connected grid: a random spanning tree plus extra lines, loads and
/// generators with a balanced base dispatch.
pub fn random_grid(n_buses: usize, extra_lines: usize, seed: u64) -> Grid {
    let mut r = rng(seed);
    let mut lines = Vec::new();
    let mut pairs = std::collections::HashSet::new();
    for v in 1..n_buses {
        let u = r.gen_range(0..v);
        pairs.insert((u.min(v), u.max(v)));
        lines.push(Line { from: u, to: v, susceptance: r.gen_range(0.5..20.0), capacity: 1.0 });
    }
    let mut tries = 0;
    while lines.len() < n_buses - 1 + extra_lines && tries < 1000 {
        tries += 1;
        let (u, v) = (r.gen_range(0..n_buses), r.gen_range(0..n_buses));
        if u == v || !pairs.insert((u.min(v), u.max(v))) {
            continue;
        }
        lines.push(Line { from: u, to: v, susceptance: r.gen_range(0.5..20.0), capacity: 1.0 });
    }
    let loads: Vec<f64> = (0..n_buses).map(|_| if r.gen_bool(0.6) { r.gen_range(1.0..50.0) } else { 0.0 }).collect();
    let total: f64 = loads.iter().sum();
    let n_gen = (n_buses / 3).max(1);
    let share: Vec<f64> = (0..n_gen).map(|_| r.gen_range(0.5..1.5)).collect();
    let s: f64 = share.iter().sum();
    let buses = (0..n_buses)
        .map(|i| Bus {
            id: i as u32 + 1,
            load: loads[i],
            generator: (i < n_gen).then(|| {
                let out = total * share[i] / s;
                Generator { output: out, max_output: out * r.gen_range(1.0..2.0) }
            }),
        })
        .collect();
    Grid::new(buses, lines).unwrap()
}

/// Random injections summing to zero.
pub fn balanced_injections(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut p: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    p.iter_mut().for_each(|x| *x -= mean);
    p
}

/// Dense Moore–Penrose flows `b_e (θ_u − θ_v)` with `θ = L⁺ p`.
pub fn pinv_flows(grid: &Grid, active: &[bool], p: &[f64]) -> Vec<f64> {
    let n = grid.n_buses();
    let mut lap = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (e, l) in grid.lines().iter().enumerate() {
        if !active[e] {
            continue;
        }
        let b = l.susceptance;
        lap[(l.from, l.from)] += b;
        lap[(l.to, l.to)] += b;
        lap[(l.from, l.to)] -= b;
        lap[(l.to, l.from)] -= b;
    }
    let pinv = lap.pseudo_inverse(1e-10).unwrap();
    let theta = pinv * nalgebra::DVector::from_column_slice(p);
    grid.lines()
        .iter()
        .enumerate()
        .map(|(e, l)| if active[e] { l.susceptance * (theta[l.from] - theta[l.to]) } else { 0.0 })
        .collect()
}
