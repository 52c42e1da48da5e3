//! Subcommands. Each step writes its artifacts under a name prefix so the
//! figure pipelines can reuse them.

use crate::artifacts::Run;
use crate::InvalidConfig;
use anyhow::{Context, Result};
use cascade_lab::cascade::{generate_dataset, write_dataset, Dataset, DatasetConfig};
use cascade_lab::evaluation::{rollout_roc, static_prediction_experiment, RocCurve, RolloutMode};
use cascade_lab::glauber::{cascade_size_stats, sample_steady_states, CascadeSizeStats, SamplerConfig};
use cascade_lab::inference::{build_flow_graph, cluster_flow_graph, gamma_report, influence_degree, reindexed_couplings, ClusterAssignment};
use cascade_lab::kinetic::{fit_kinetic_model, kinetic_moment_report};
use cascade_lab::learn::{fit_static_model, moment_report, LearnConfig, MomentReport, PenaltyWeights};
use cascade_lab::metrics::{correlation_report, edge_distance, lodf};
use cascade_lab::model::ModelKind;
use cascade_lab::rng::SeedDomain;
use cascade_lab::{Grid, InteractionModel, NetworkState, Variant};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

pub fn parse_domain(s: &str) -> Result<SeedDomain> {
    match s {
        "training" => Ok(SeedDomain::Training),
        "evaluation" => Ok(SeedDomain::Evaluation),
        other => Err(InvalidConfig(format!("unknown dataset domain {other:?}; use training or evaluation")).into()),
    }
}

pub fn simulate_dataset(run: &mut Run, grid: &Grid, variant: Variant, m: usize, domain: SeedDomain, seed: u64) -> Result<Dataset> {
    let config = DatasetConfig { m_target: m, p_f: run.config.p_f_for(grid.n_lines()), variant, seed, domain };
    let data = generate_dataset(grid, &config)?;
    log::info!(
        "{variant}: {} trajectories, {} attempted, {:.1}% propagating",
        data.trajectories.len(),
        data.header.attempted,
        100.0 * data.header.propagation_fraction()
    );
    Ok(data)
}

pub fn write_dataset_file(run: &mut Run, name: &str, data: &Dataset) -> Result<String> {
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, data)?;
    run.write(name, &bytes)?;
    Ok(crate::artifacts::sha256_hex(&bytes))
}

pub fn simulate(run: &mut Run, domain: &str, output: &str) -> Result<()> {
    let domain = parse_domain(domain)?;
    let grid = run.grid()?;
    let (variant, m, seed) = (run.config.variant, run.config.m_target, run.config.seed);
    let data = simulate_dataset(run, &grid, variant, m, domain, seed)?;
    write_dataset_file(run, output, &data)?;
    Ok(())
}

fn learn_config(run: &Run, variant: Variant, m: usize, n_lines: usize) -> LearnConfig {
    LearnConfig {
        lambda: run.config.lambda_for(variant, m, n_lines),
        delta_minus: run.config.delta_minus,
        delta_plus: run.config.delta_plus,
        ..LearnConfig::default()
    }
}

fn penalty_weights(grid: &Grid) -> Result<PenaltyWeights> {
    Ok(PenaltyWeights::from_distances(&edge_distance(grid)?))
}

pub fn fit_static(run: &Run, grid: &Grid, data: &Dataset, hash: &str) -> Result<InteractionModel> {
    let finals = data.unique_final_states();
    let config = learn_config(run, data.header.variant, finals.len(), grid.n_lines());
    let mut fit = fit_static_model(&finals, &penalty_weights(grid)?, &config)?;
    fit.model.meta.dataset_hash = hash.to_string();
    log::info!("static model: λ {:.2e}, sparsity {:.2}%", config.lambda, 100.0 * fit.model.sparsity());
    Ok(fit.model)
}

pub fn fit_kinetic(run: &Run, grid: &Grid, data: &Dataset, hash: &str) -> Result<InteractionModel> {
    let config = learn_config(run, data.header.variant, data.trajectories.len(), grid.n_lines());
    let mut fit = fit_kinetic_model(&data.trajectories, &penalty_weights(grid)?, &config)?;
    fit.model.meta.dataset_hash = hash.to_string();
    log::info!("kinetic model: λ {:.2e}, sparsity {:.2}%", config.lambda, 100.0 * fit.model.sparsity());
    Ok(fit.model)
}

pub fn write_model(run: &mut Run, name: &str, model: &InteractionModel) -> Result<()> {
    let mut bytes = Vec::new();
    model.write_json(&mut bytes)?;
    run.write(name, &bytes)
}

#[derive(Serialize)]
struct SingleRow {
    line: usize,
    data: f64,
    model: f64,
}

#[derive(Serialize)]
struct PairRow {
    i: usize,
    j: usize,
    data: f64,
    model: f64,
}

pub fn write_moments(run: &mut Run, prefix: &str, report: &MomentReport) -> Result<()> {
    run.write_csv(
        &format!("{prefix}moments_single.csv"),
        report.singles.iter().enumerate().map(|(line, &(data, model))| SingleRow { line, data, model }),
    )?;
    run.write_csv(
        &format!("{prefix}moments_pair.csv"),
        report.pairs.iter().map(|&(i, j, data, model)| PairRow { i, j, data, model }),
    )?;
    log::info!(
        "{prefix}moments: r(single) {:.4}, r(pair) {:.4}",
        report.single_correlation(),
        report.pair_correlation()
    );
    Ok(())
}

pub fn learn_static(run: &mut Run, data_path: &Path, output: Option<&str>) -> Result<()> {
    let grid = run.grid()?;
    let (data, hash) = run.dataset(data_path, &grid)?;
    let model = fit_static(run, &grid, &data, &hash)?;
    write_model(run, output.unwrap_or("static_model.json"), &model)?;
    let report = moment_report(&model, &data.unique_final_states())?;
    write_moments(run, "static_", &report)
}

pub fn learn_kinetic(run: &mut Run, data_path: &Path, output: Option<&str>) -> Result<()> {
    let grid = run.grid()?;
    let (data, hash) = run.dataset(data_path, &grid)?;
    let model = fit_kinetic(run, &grid, &data, &hash)?;
    write_model(run, output.unwrap_or("kinetic_model.json"), &model)?;
    let report = kinetic_moment_report(&model, &data.trajectories)?;
    write_moments(run, "kinetic_", &report)
}

fn require_kind(model: &InteractionModel, kind: ModelKind) -> Result<()> {
    if model.kind != kind {
        return Err(InvalidConfig(format!("expected a {kind:?} model, found {:?}", model.kind)).into());
    }
    Ok(())
}

pub fn glauber_samples(run: &mut Run, model: &InteractionModel, n_samples: usize) -> Result<Vec<NetworkState>> {
    let n = model.n_lines();
    let config = SamplerConfig {
        warmup: run.config.warmup_per_line * n,
        stride: run.config.stride_per_line * n,
        n_samples,
        chains: run.config.chains,
        seed: run.config.seed,
    };
    run.record_seed("sampling", config.seed);
    Ok(sample_steady_states(model, &config)?)
}

#[derive(Serialize)]
struct CdfRow<'a> {
    source: &'a str,
    z: usize,
    cdf: f64,
}

#[derive(Serialize)]
struct PdfRow<'a> {
    source: &'a str,
    bin: usize,
    z_low: f64,
    pdf: f64,
}

pub fn write_size_stats(run: &mut Run, prefix: &str, stats: &[(&str, &CascadeSizeStats)]) -> Result<()> {
    let cdf: Vec<CdfRow> = stats
        .iter()
        .flat_map(|(source, s)| s.cdf.iter().enumerate().map(move |(z, &cdf)| CdfRow { source, z, cdf }))
        .collect();
    run.write_csv(&format!("{prefix}cascade_size_cdf.csv"), cdf)?;
    let pdf: Vec<PdfRow> = stats
        .iter()
        .flat_map(|(source, s)| {
            s.pdf.iter().enumerate().map(move |(bin, &pdf)| PdfRow { source, bin, z_low: bin as f64 * s.bin_width, pdf })
        })
        .collect();
    run.write_csv(&format!("{prefix}cascade_size_pdf.csv"), pdf)
}

/// `⟨s_i⟩` and `⟨s_i s_j⟩` (i < j) of a set of states.
fn empirical_moments(states: &[NetworkState]) -> (Vec<f64>, Vec<f64>) {
    let n = states.first().map_or(0, |s| s.len());
    let m = states.len().max(1) as f64;
    let mut single = vec![0.0; n];
    let mut pair = vec![0.0; n * (n.saturating_sub(1)) / 2];
    for s in states {
        let spins: Vec<f64> = (0..n).map(|i| s.spin(i)).collect();
        let mut k = 0;
        for i in 0..n {
            single[i] += spins[i] / m;
            for j in i + 1..n {
                pair[k] += spins[i] * spins[j] / m;
                k += 1;
            }
        }
    }
    (single, pair)
}

/// Moments of model samples against data (no model evaluation involved).
pub fn write_sample_moments(run: &mut Run, prefix: &str, data: &[NetworkState], samples: &[NetworkState]) -> Result<()> {
    let (ds, dp) = empirical_moments(data);
    let (ms, mp) = empirical_moments(samples);
    let report = MomentReport {
        singles: ds.into_iter().zip(ms).collect(),
        pairs: {
            let n = data.first().map_or(0, |s| s.len());
            let idx = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
            idx.zip(dp.into_iter().zip(mp)).map(|((i, j), (d, m))| (i, j, d, m)).collect()
        },
    };
    write_moments(run, prefix, &report)
}

fn write_samples(run: &mut Run, name: &str, samples: &[NetworkState]) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        out += &serde_json::json!({ "failed": s.failed_indices() }).to_string();
        out.push('\n');
    }
    run.write(name, out.as_bytes())
}

pub fn sample(run: &mut Run, model_path: &Path, data_path: Option<&Path>) -> Result<()> {
    let model = run.model(model_path)?;
    require_kind(&model, ModelKind::Static)?;
    let reference = match data_path {
        Some(p) => {
            let grid = run.grid()?;
            Some(run.dataset(p, &grid)?.0.unique_final_states())
        }
        None => None,
    };
    let n_samples = run.config.n_samples.or(reference.as_ref().map(|r| r.len())).unwrap_or(10_000);
    let samples = glauber_samples(run, &model, n_samples)?;
    write_samples(run, "samples.jsonl", &samples)?;
    match reference {
        Some(finals) => {
            let data = cascade_size_stats(&finals, None)?;
            let mc = cascade_size_stats(&samples, Some(data.z_max))?;
            log::info!("cascade size max: data {}, samples {}", data.z_max, mc.z_max);
            write_size_stats(run, "", &[("data", &data), ("mc", &mc)])?;
            write_sample_moments(run, "mc_", &finals, &samples)
        }
        None => write_size_stats(run, "", &[("mc", &cascade_size_stats(&samples, None)?)]),
    }
}

#[derive(Serialize)]
struct ClusterRow {
    line: usize,
    from_bus: u32,
    to_bus: u32,
    cluster: usize,
    influence_degree: usize,
}

#[derive(Serialize)]
struct GammaRow {
    cluster: usize,
    size: usize,
    sample: usize,
    gamma: f64,
}

#[derive(Serialize)]
struct GammaSummaryRow {
    cluster: usize,
    size: usize,
    conditional_mean: f64,
    mean: f64,
    median: f64,
}

pub fn cluster_model(run: &mut Run, prefix: &str, grid: &Grid, model: &InteractionModel) -> Result<ClusterAssignment> {
    let clusters = cluster_flow_graph(&build_flow_graph(model), run.config.teleport, run.config.seed)?;
    run.record_seed("clustering", run.config.seed);
    let degree = influence_degree(model);
    run.write_csv(
        &format!("{prefix}clusters.csv"),
        (0..model.n_lines()).map(|line| {
            let (from_bus, to_bus) = grid.line_label(line);
            ClusterRow { line, from_bus, to_bus, cluster: clusters.cluster[line], influence_degree: degree[line] }
        }),
    )?;
    run.write_matrix(&format!("{prefix}heatmap.csv"), &reindexed_couplings(model, &clusters.order))?;
    run.write_matrix(&format!("{prefix}heatmap_order.csv"), std::slice::from_ref(&clusters.order))?;
    let mut summary = BTreeMap::new();
    summary.insert("n_clusters", serde_json::json!(clusters.n_clusters()));
    summary.insert("clusters_larger_than_2", serde_json::json!(clusters.count_larger_than(2)));
    summary.insert("sizes", serde_json::json!(clusters.sizes));
    summary.insert("codelength", serde_json::json!(clusters.codelength));
    summary.insert("singleton_codelength", serde_json::json!(clusters.singleton_codelength));
    run.write_json(&format!("{prefix}clusters_summary.json"), &summary)?;
    log::info!("{} clusters, {} larger than 2", clusters.n_clusters(), clusters.count_larger_than(2));
    Ok(clusters)
}

pub fn write_gamma(run: &mut Run, prefix: &str, clusters: &ClusterAssignment, finals: &[NetworkState]) -> Result<()> {
    let report = gamma_report(clusters, finals, run.config.n_null, run.config.seed)?;
    run.record_seed("null_sets", run.config.seed);
    run.write_csv(
        &format!("{prefix}gamma.csv"),
        report.clusters.iter().flat_map(|c| {
            c.gamma.iter().enumerate().map(move |(sample, &gamma)| GammaRow { cluster: c.cluster, size: c.size, sample, gamma })
        }),
    )?;
    run.write_csv(
        &format!("{prefix}gamma_summary.csv"),
        report.clusters.iter().map(|c| GammaSummaryRow {
            cluster: c.cluster,
            size: c.size,
            conditional_mean: c.conditional_mean,
            mean: c.mean,
            median: c.median,
        }),
    )
}

pub fn cluster(run: &mut Run, model_path: &Path, data_path: Option<&Path>) -> Result<()> {
    let grid = run.grid()?;
    let model = run.model(model_path)?;
    if model.n_lines() != grid.n_lines() {
        return Err(InvalidConfig("model and grid line counts differ".into()).into());
    }
    let clusters = cluster_model(run, "", &grid, &model)?;
    if let Some(p) = data_path {
        let finals = run.dataset(p, &grid)?.0.unique_final_states();
        write_gamma(run, "", &clusters, &finals)?;
    }
    Ok(())
}

pub fn write_roc(run: &mut Run, name: &str, roc: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &roc.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.write_record(["auc".to_string(), roc.auc.to_string(), String::new()])?;
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
    run.write(name, &bytes)
}

pub fn evaluate_static(run: &mut Run, prefix: &str, grid: &Grid, model: &InteractionModel, test: &Dataset, flips: &[usize]) -> Result<BTreeMap<String, f64>> {
    let distances = edge_distance(grid)?;
    let mut aucs = BTreeMap::new();
    for &k in flips {
        let r = static_prediction_experiment(model, test, k, &distances, run.config.seed)?;
        write_roc(run, &format!("{prefix}roc_static_flip{k}.csv"), &r.roc)?;
        log::info!("static prediction, {k} flipped neighbors: AUC {:.4}", r.roc.auc);
        aucs.insert(format!("static_flip{k}"), r.roc.auc);
    }
    run.record_seed("evaluation", run.config.seed);
    Ok(aucs)
}

pub fn evaluate_rollouts(run: &mut Run, prefix: &str, model: &InteractionModel, tests: &[(RolloutMode, &Dataset)]) -> Result<BTreeMap<String, f64>> {
    let mut aucs = BTreeMap::new();
    for &(mode, test) in tests {
        let name = match mode {
            RolloutMode::MatchedHorizon => "matched",
            RolloutMode::UntilFixedPoint => "fixed_point",
            RolloutMode::LongOnly => "long",
        };
        match rollout_roc(model, test, mode) {
            Ok(ev) => {
                write_roc(run, &format!("{prefix}roc_rollout_{name}.csv"), &ev.roc)?;
                log::info!("rollout {name}: AUC {:.4} over {} trajectories, {} truncated", ev.roc.auc, ev.n_trajectories, ev.truncated);
                aucs.insert(format!("rollout_{name}"), ev.roc.auc);
            }
            Err(cascade_lab::Error::InsufficientSamples(msg)) => log::warn!("rollout {name} skipped: {msg}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(aucs)
}

pub fn evaluate(run: &mut Run, model_path: &Path, test_path: &Path, flips: &[usize]) -> Result<()> {
    let grid = run.grid()?;
    let model = run.model(model_path)?;
    let (test, _) = run.dataset(test_path, &grid)?;
    if test.header.domain != SeedDomain::Evaluation {
        return Err(InvalidConfig(format!("{} is not fresh evaluation data", test_path.display())).into());
    }
    let aucs = match model.kind {
        ModelKind::Static => evaluate_static(run, "", &grid, &model, &test, flips)?,
        ModelKind::Kinetic => {
            let modes = [RolloutMode::MatchedHorizon, RolloutMode::UntilFixedPoint, RolloutMode::LongOnly];
            evaluate_rollouts(run, "", &model, &modes.map(|m| (m, &test)))?
        }
    };
    run.write_json("evaluation.json", &aucs)
}

#[derive(Serialize)]
struct LodfRow {
    target: usize,
    from_bus: u32,
    to_bus: u32,
    lodf: Option<f64>,
}

pub fn metrics(run: &mut Run, outaged: Option<usize>, data_path: Option<&Path>, pair: Option<&[usize]>, given: &[usize]) -> Result<()> {
    let grid = run.grid()?;
    let n = grid.n_lines();
    let d = edge_distance(&grid)?;
    run.write_matrix("edge_distance.csv", &(0..n).map(|e| d.row(e).to_vec()).collect::<Vec<_>>())?;
    if let Some(e) = outaged {
        if e >= n {
            return Err(InvalidConfig(format!("line {e} out of range (grid has {n} lines)")).into());
        }
        let p = grid.injections();
        let rows: Vec<LodfRow> = (0..n)
            .filter(|&t| t != e)
            .map(|t| {
                let (from_bus, to_bus) = grid.line_label(t);
                LodfRow { target: t, from_bus, to_bus, lodf: lodf(&grid, &p, e, t).ok() }
            })
            .collect();
        run.write_csv("lodf.csv", rows)?;
    }
    match (data_path, pair) {
        (Some(path), Some(&[i, j])) => {
            if i >= n || j >= n || given.iter().any(|&k| k >= n) {
                return Err(InvalidConfig("line index out of range".into()).into());
            }
            let finals = run.dataset(path, &grid)?.0.unique_final_states();
            run.write_json("correlations.json", &correlation_report(&finals, i, j, given))?;
        }
        (None, Some(_)) => return Err(InvalidConfig("--pair needs --data".into()).into()),
        _ => {}
    }
    Ok(())
}

/// A dataset with at least `want` trajectories lasting `min_steps` steps,
/// simulated in growing batches.
pub fn long_trajectories(run: &mut Run, grid: &Grid, want: usize, min_steps: usize, seed: u64) -> Result<Dataset> {
    let mut m = want;
    loop {
        let mut data = simulate_dataset(run, grid, Variant::D2, m, SeedDomain::Evaluation, seed)?;
        data.trajectories.retain(|t| t.t_ss() >= min_steps);
        if data.trajectories.len() >= want || m >= 256 * want {
            data.trajectories.truncate(want);
            data.header.m = data.trajectories.len();
            return Ok(data);
        }
        m *= 4;
    }
}

pub fn context_line(grid: &Grid, a: u32, b: u32) -> Result<usize> {
    grid.find_line(a, b).with_context(|| format!("line {a}-{b} not in the grid"))
}
