//! Pipelines producing the data behind each figure of the study.

use crate::artifacts::Run;
use crate::commands::*;
use crate::InvalidConfig;
use anyhow::Result;
use cascade_lab::cascade::{run_trajectory, Dataset};
use cascade_lab::evaluation::{RolloutMode, LONG_TRAJECTORY_STEPS};
use cascade_lab::glauber::cascade_size_stats;
use cascade_lab::kinetic::kinetic_moment_report;
use cascade_lab::learn::moment_report;
use cascade_lab::metrics::pearson;
use cascade_lab::rng::SeedDomain;
use cascade_lab::{Grid, InteractionModel, NetworkState, Variant};
use serde::Serialize;
use std::collections::HashMap;

/// Fresh trajectories for the static prediction experiment.
const STATIC_TEST_SIZE: usize = 5000;
/// Fresh trajectories per rollout experiment.
const ROLLOUT_TEST_SIZE: usize = 1000;

fn parse_name(name: &str) -> Result<(u32, Option<char>)> {
    let bad = || InvalidConfig(format!("unknown figure {name:?}; expected fig1, fig3..fig8 with an optional panel letter"));
    let rest = name.strip_prefix("fig").ok_or_else(bad)?;
    let (digits, panel) = match rest.chars().last() {
        Some(c) if c.is_ascii_lowercase() => (&rest[..rest.len() - 1], Some(c)),
        _ => (rest, None),
    };
    let n: u32 = digits.parse().map_err(|_| bad())?;
    let panels: &[char] = match n {
        1 | 7 | 8 => &['a', 'b'],
        3 | 4 | 6 => &['a', 'b', 'c', 'd'],
        5 => &[],
        2 => return Err(InvalidConfig("fig2 is a diagram without underlying data".into()).into()),
        _ => return Err(bad().into()),
    };
    if let Some(p) = panel {
        if !panels.contains(&p) {
            return Err(bad().into());
        }
    }
    Ok((n, panel))
}

fn prefix(v: Variant) -> String {
    format!("{}_", v.to_string().to_lowercase())
}

/// Datasets and models built on demand, each written once.
struct Pipeline {
    grid: Grid,
    data: HashMap<Variant, (Dataset, String)>,
    statics: HashMap<Variant, InteractionModel>,
    kinetics: HashMap<Variant, InteractionModel>,
    samples: HashMap<Variant, Vec<NetworkState>>,
}

impl Pipeline {
    fn data(&mut self, run: &mut Run, v: Variant) -> Result<&(Dataset, String)> {
        if !self.data.contains_key(&v) {
            let (m, seed) = (run.config.m_target, run.config.seed);
            let data = simulate_dataset(run, &self.grid, v, m, SeedDomain::Training, seed)?;
            let hash = write_dataset_file(run, &format!("{}dataset.jsonl", prefix(v)), &data)?;
            self.data.insert(v, (data, hash));
        }
        Ok(&self.data[&v])
    }

    fn static_model(&mut self, run: &mut Run, v: Variant) -> Result<InteractionModel> {
        if !self.statics.contains_key(&v) {
            let (data, hash) = self.data(run, v)?.clone();
            let model = fit_static(run, &self.grid, &data, &hash)?;
            write_model(run, &format!("{}static_model.json", prefix(v)), &model)?;
            self.statics.insert(v, model);
        }
        Ok(self.statics[&v].clone())
    }

    fn kinetic_model(&mut self, run: &mut Run, v: Variant) -> Result<InteractionModel> {
        if !self.kinetics.contains_key(&v) {
            let (data, hash) = self.data(run, v)?.clone();
            let model = fit_kinetic(run, &self.grid, &data, &hash)?;
            write_model(run, &format!("{}kinetic_model.json", prefix(v)), &model)?;
            self.kinetics.insert(v, model);
        }
        Ok(self.kinetics[&v].clone())
    }

    fn finals(&mut self, run: &mut Run, v: Variant) -> Result<Vec<NetworkState>> {
        Ok(self.data(run, v)?.0.unique_final_states())
    }

    fn glauber(&mut self, run: &mut Run, v: Variant) -> Result<Vec<NetworkState>> {
        if !self.samples.contains_key(&v) {
            let model = self.static_model(run, v)?;
            let n = run.config.n_samples.unwrap_or(self.finals(run, v)?.len());
            let samples = glauber_samples(run, &model, n)?;
            self.samples.insert(v, samples);
        }
        Ok(self.samples[&v].clone())
    }
}

/// Variants covered by a figure panel; `first` lists panels showing D1.
fn variants(panel: Option<char>, first: &[char]) -> Vec<Variant> {
    match panel {
        None => vec![Variant::D1, Variant::D2],
        Some(p) if first.contains(&p) => vec![Variant::D1],
        Some(_) => vec![Variant::D2],
    }
}

#[derive(Serialize)]
struct TripletRow {
    x: String,
    y: String,
    pearson: Option<f64>,
    j_xy: f64,
    j_yx: f64,
}

#[derive(Serialize)]
struct StepRow {
    scenario: &'static str,
    step: usize,
    failed: String,
}

fn fig1(run: &mut Run, p: &mut Pipeline) -> Result<()> {
    let g = p.grid.clone();
    let (i, j, k, k2) = (
        context_line(&g, 26, 25)?,
        context_line(&g, 30, 38)?,
        context_line(&g, 17, 18)?,
        context_line(&g, 18, 19)?,
    );
    let label = |e: usize| {
        let (a, b) = g.line_label(e);
        format!("({a},{b})")
    };
    let labels: HashMap<usize, String> = [i, j, k, k2].iter().map(|&e| (e, label(e))).collect();
    let model = p.static_model(run, Variant::D2)?;
    let finals = p.finals(run, Variant::D2)?;
    let rows: Vec<TripletRow> = [(i, j), (j, k), (i, k), (k, k2)]
        .iter()
        .map(|&(x, y)| TripletRow {
            x: labels[&x].clone(),
            y: labels[&y].clone(),
            pearson: pearson(&finals, x, y).ok(),
            j_xy: model.coupling(x, y),
            j_yx: model.coupling(y, x),
        })
        .collect();
    run.write_csv("fig1_triplet.csv", rows)?;
    let mut steps = Vec::new();
    for (scenario, init) in [("i", vec![i]), ("i_and_k_prime", vec![i, k2])] {
        let t = run_trajectory(&g, &init)?;
        for (step, s) in t.states.iter().enumerate() {
            let failed: Vec<String> = s.failed_indices().iter().map(|&e| label(e)).collect();
            steps.push(StepRow { scenario, step, failed: failed.join(" ") });
        }
    }
    run.write_csv("fig1_trajectories.csv", steps)
}

fn fig3(run: &mut Run, p: &mut Pipeline, v: Variant) -> Result<()> {
    let model = p.static_model(run, v)?;
    let finals = p.finals(run, v)?;
    write_moments(run, &format!("{}static_", prefix(v)), &moment_report(&model, &finals)?)?;
    let samples = p.glauber(run, v)?;
    write_sample_moments(run, &format!("{}mc_", prefix(v)), &finals, &samples)
}

fn fig4(run: &mut Run, p: &mut Pipeline, v: Variant) -> Result<()> {
    let finals = p.finals(run, v)?;
    let samples = p.glauber(run, v)?;
    let data = cascade_size_stats(&finals, None)?;
    let mc = cascade_size_stats(&samples, Some(data.z_max))?;
    log::info!("{v}: cascade size max data {}, samples {}", data.z_max, mc.z_max);
    write_size_stats(run, &prefix(v), &[("data", &data), ("mc", &mc)])?;
    let model = p.static_model(run, v)?;
    let seed = run.config.seed;
    let test = simulate_dataset(run, &p.grid, v, STATIC_TEST_SIZE, SeedDomain::Evaluation, seed)?;
    let aucs = evaluate_static(run, &prefix(v), &p.grid, &model, &test, &[0, 2])?;
    run.write_json(&format!("{}static_evaluation.json", prefix(v)), &aucs)
}

fn fig6(run: &mut Run, p: &mut Pipeline, v: Variant) -> Result<()> {
    let model = p.static_model(run, v)?;
    let clusters = cluster_model(run, &prefix(v), &p.grid, &model)?;
    let finals = p.finals(run, v)?;
    write_gamma(run, &prefix(v), &clusters, &finals)
}

fn fig7(run: &mut Run, p: &mut Pipeline, v: Variant) -> Result<()> {
    let model = p.kinetic_model(run, v)?;
    let report = kinetic_moment_report(&model, &p.data(run, v)?.0.trajectories)?;
    write_moments(run, &format!("{}kinetic_", prefix(v)), &report)
}

fn fig8(run: &mut Run, p: &mut Pipeline) -> Result<()> {
    let model = p.kinetic_model(run, Variant::D2)?;
    let seed = run.config.seed;
    let test = simulate_dataset(run, &p.grid, Variant::D2, ROLLOUT_TEST_SIZE, SeedDomain::Evaluation, seed)?;
    let long = long_trajectories(run, &p.grid, ROLLOUT_TEST_SIZE, LONG_TRAJECTORY_STEPS, seed.wrapping_add(1))?;
    let tests = [
        (RolloutMode::MatchedHorizon, &test),
        (RolloutMode::LongOnly, &long),
        (RolloutMode::UntilFixedPoint, &test),
    ];
    let aucs = evaluate_rollouts(run, "d2_", &model, &tests)?;
    run.write_json("d2_rollout_evaluation.json", &aucs)
}

pub fn figure(run: &mut Run, name: &str) -> Result<()> {
    let (n, panel) = parse_name(name)?;
    let grid = run.grid()?;
    let mut p = Pipeline {
        grid,
        data: HashMap::new(),
        statics: HashMap::new(),
        kinetics: HashMap::new(),
        samples: HashMap::new(),
    };
    match n {
        1 => fig1(run, &mut p),
        3 => variants(panel, &['a', 'b']).into_iter().try_for_each(|v| fig3(run, &mut p, v)),
        4 => variants(panel, &['a', 'b']).into_iter().try_for_each(|v| fig4(run, &mut p, v)),
        5 => {
            let model = p.static_model(run, Variant::D2)?;
            cluster_model(run, "d2_", &p.grid, &model).map(|_| ())
        }
        6 => variants(panel, &['a', 'c']).into_iter().try_for_each(|v| fig6(run, &mut p, v)),
        7 => variants(panel, &['a']).into_iter().try_for_each(|v| fig7(run, &mut p, v)),
        8 => fig8(run, &mut p),
        _ => unreachable!("rejected by parse_name"),
    }
}
