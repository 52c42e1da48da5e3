//! Predictive evaluation: per-line state prediction (static model, with and
//! without perturbed neighbors) and multi-step rollouts (kinetic model).

use crate::cascade::{Dataset, NetworkState, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::EdgeDistanceMatrix;
use crate::model::{failure_probability, InteractionModel, ModelKind};
use crate::rng::{stream, SeedDomain};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ordered by decreasing threshold; starts at (0, 0) and ends at (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    fn from_points(mut points: Vec<RocPoint>) -> Self {
        points.sort_by(|a, b| b.threshold.total_cmp(&a.threshold));
        let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let auc = sorted.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5).sum();
        RocCurve { points, auc }
    }
}

/// Thresholds swept: 101 evenly spaced values in [0, 1], the given
/// scores, and +∞ for the origin.
fn thresholds(extra: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).chain(extra.iter().copied()).collect();
    t.push(f64::INFINITY);
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// ROC of `score ≥ threshold` as a positive prediction.
pub fn roc_from_scores(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { expected: scores.len(), found: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientSamples("ROC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp, mut k) = (0usize, 0usize, 0usize);
    for t in thresholds(scores) {
        while k < idx.len() && scores[idx[k]] >= t {
            if labels[idx[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint { threshold: t, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(RocCurve::from_points(points))
}

/// Probability that a random positive outscores a random negative (ties 1/2).
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let rsum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    (rsum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

/// Model probability that line `i` is failed given the other lines.
pub fn predict_line(model: &InteractionModel, state: &NetworkState, i: usize) -> f64 {
    model.failure_probability(i, state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub roc: RocCurve,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

fn require_fresh(data: &Dataset) -> Result<()> {
    if data.header.domain != SeedDomain::Evaluation {
        return Err(Error::InvalidArgument(format!(
            "evaluation data must come from the evaluation seed domain, found {:?}",
            data.header.domain
        )));
    }
    Ok(())
}

/// For each fresh trajectory, picks failed or surviving with probability
/// 1/2, a random line `i` of that class in the final state, optionally
/// flips `flip_neighbors` neighbors of `i`, and scores `Pr(s_i = +1)`.
/// Neighbors come from the learned support of `i`, or from physically
/// adjacent lines when the support is too small.
pub fn static_prediction_experiment(
    model: &InteractionModel,
    fresh: &Dataset,
    flip_neighbors: usize,
    distances: &EdgeDistanceMatrix,
    seed: u64,
) -> Result<PredictionResult> {
    require_fresh(fresh)?;
    let n = model.n_lines();
    let mut rng = stream(seed, SeedDomain::Evaluation, u64::MAX);
    let mut scores = Vec::with_capacity(fresh.trajectories.len());
    let mut labels = Vec::with_capacity(fresh.trajectories.len());
    for t in &fresh.trajectories {
        let s = t.final_state();
        let failed = s.failed_indices();
        let healthy: Vec<usize> = (0..n).filter(|&e| !s.is_failed(e)).collect();
        let want_failed = rng.gen_bool(0.5);
        let pool = match (want_failed, failed.is_empty(), healthy.is_empty()) {
            (true, false, _) | (false, _, true) => &failed,
            _ => &healthy,
        };
        let i = pool[rng.gen_range(0..pool.len())];
        let mut input = s.clone();
        if flip_neighbors > 0 {
            let mut nb: Vec<usize> = model.support[i].clone();
            if nb.len() < flip_neighbors {
                nb = (0..n).filter(|&e| e != i && distances.get(i, e) == 1).collect();
            }
            let k = flip_neighbors.min(nb.len());
            for p in sample(&mut rng, nb.len(), k) {
                let e = nb[p];
                input.set_failed(e, !input.is_failed(e));
            }
        }
        scores.push(predict_line(model, &input, i));
        labels.push(s.is_failed(i));
    }
    let roc = roc_from_scores(&scores, &labels)?;
    Ok(PredictionResult { roc, scores, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Steps(usize),
    UntilFixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<NetworkState>,
    /// The fixed-point search hit the `4 L` step cap.
    pub truncated: bool,
}

/// Rollout with cached fields; failed lines never recover.
struct Roller<'m> {
    model: &'m InteractionModel,
    cols: Vec<Vec<(usize, f64)>>,
}

impl<'m> Roller<'m> {
    fn new(model: &'m InteractionModel) -> Self {
        let n = model.n_lines();
        let mut cols = vec![Vec::new(); n];
        for i in 0..n {
            for (j, v) in model.row_nonzeros(i) {
                cols[j].push((i, v));
            }
        }
        Roller { model, cols }
    }

    fn run(&self, s0: &NetworkState, threshold: f64, horizon: Horizon) -> Rollout {
        let n = self.model.n_lines();
        let mut fields: Vec<f64> = (0..n).map(|i| self.model.local_field(i, s0)).collect();
        let mut state = s0.clone();
        let mut states = vec![state.clone()];
        let cap = match horizon {
            Horizon::Steps(k) => k,
            Horizon::UntilFixedPoint => 4 * n,
        };
        let mut truncated = matches!(horizon, Horizon::UntilFixedPoint);
        for _ in 0..cap {
            let newly: Vec<usize> = (0..n).filter(|&i| !state.is_failed(i) && failure_probability(fields[i]) >= threshold).collect();
            for &j in &newly {
                state.set_failed(j, true);
                for &(i, v) in &self.cols[j] {
                    fields[i] += 2.0 * v;
                }
            }
            states.push(state.clone());
            if newly.is_empty() && horizon == Horizon::UntilFixedPoint {
                truncated = false;
                break;
            }
        }
        Rollout { states, truncated }
    }
}

/// Iterates the kinetic model deterministically: a surviving line fails
/// when its failure probability reaches `threshold`.
pub fn rollout(model: &InteractionModel, s0: &NetworkState, threshold: f64, horizon: Horizon) -> Result<Rollout> {
    if model.kind != ModelKind::Kinetic {
        return Err(Error::InvalidArgument("rollouts need a kinetic model".into()));
    }
    Ok(Roller::new(model).run(s0, threshold, horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RolloutMode {
    /// Roll out as many steps as the true trajectory took.
    MatchedHorizon,
    /// Roll out until the predicted state stops changing.
    UntilFixedPoint,
    /// Matched horizon on trajectories lasting at least six steps.
    LongOnly,
}

pub const LONG_TRAJECTORY_STEPS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutEvaluation {
    pub roc: RocCurve,
    pub n_trajectories: usize,
    pub truncated: usize,
}

/// Compares predicted final failed sets with the true ones over the lines
/// that were not already failed initially, for a sweep of thresholds.
pub fn rollout_roc(model: &InteractionModel, test: &Dataset, mode: RolloutMode) -> Result<RolloutEvaluation> {
    require_fresh(test)?;
    if model.kind != ModelKind::Kinetic {
        return Err(Error::InvalidArgument("rollouts need a kinetic model".into()));
    }
    let trajs: Vec<&Trajectory> = test
        .trajectories
        .iter()
        .filter(|t| mode != RolloutMode::LongOnly || t.t_ss() >= LONG_TRAJECTORY_STEPS)
        .collect();
    if trajs.is_empty() {
        return Err(Error::InsufficientSamples("no test trajectories for this mode".into()));
    }
    let roller = Roller::new(model);
    let ths = thresholds(&[]);
    let counts: Vec<(usize, usize, usize, usize, usize)> = ths
        .par_iter()
        .map(|&th| {
            let (mut tp, mut fp, mut pos, mut neg, mut trunc) = (0, 0, 0, 0, 0);
            for t in &trajs {
                let s0 = &t.states[0];
                let horizon = match mode {
                    RolloutMode::UntilFixedPoint => Horizon::UntilFixedPoint,
                    _ => Horizon::Steps(t.t_ss()),
                };
                let r = roller.run(s0, th, horizon);
                trunc += usize::from(r.truncated);
                let pred = r.states.last().expect("nonempty rollout");
                let truth = t.final_state();
                for e in 0..s0.len() {
                    if s0.is_failed(e) {
                        continue;
                    }
                    if truth.is_failed(e) {
                        pos += 1;
                        tp += usize::from(pred.is_failed(e));
                    } else {
                        neg += 1;
                        fp += usize::from(pred.is_failed(e));
                    }
                }
            }
            (tp, fp, pos, neg, trunc)
        })
        .collect();
    let (pos, neg) = (counts[0].2, counts[0].3);
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientSamples("rollout ROC needs both failing and surviving lines".into()));
    }
    let points = ths
        .iter()
        .zip(&counts)
        .map(|(&threshold, c)| RocPoint { threshold, fpr: c.1 as f64 / neg as f64, tpr: c.0 as f64 / pos as f64 })
        .collect();
    let truncated = counts.iter().map(|c| c.4).max().unwrap_or(0);
    Ok(RolloutEvaluation { roc: RocCurve::from_points(points), n_trajectories: trajs.len(), truncated })
}
