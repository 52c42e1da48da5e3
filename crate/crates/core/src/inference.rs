//! Structure read off a learned interaction matrix: influence ranking,
//! the odds-ratio flow graph, map-equation clusters and the
//! co-susceptibility ratio γ against random line sets.

use crate::cascade::NetworkState;
use crate::error::{Error, Result};
use crate::infomap::infomap;
use crate::model::{failure_probability, InteractionModel};
use crate::rng::{stream, SeedDomain};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Minimum cluster size considered by [`gamma_report`].
pub const GAMMA_MIN_CLUSTER: usize = 5;

/// For each line `j`, the number of lines `i` with `J_ij ≠ 0`.
pub fn influence_degree(model: &InteractionModel) -> Vec<usize> {
    let n = model.n_lines();
    let mut deg = vec![0; n];
    for i in 0..n {
        for (j, _) in model.row_nonzeros(i) {
            deg[j] += 1;
        }
    }
    deg
}

/// Lines ordered by influence degree, highest first (ties by index).
pub fn influence_ranking(model: &InteractionModel) -> Vec<(usize, usize)> {
    let mut r: Vec<(usize, usize)> = influence_degree(model).into_iter().enumerate().collect();
    r.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    r
}

/// `p+ (1 - p-) / (p- (1 - p+))` where `p±` is the failure probability of
/// line `i` with line `j` forced to `±1` and every other line as in `state`.
pub fn odds_ratio(model: &InteractionModel, i: usize, j: usize, state: &NetworkState) -> f64 {
    let mut s = state.clone();
    s.set_failed(j, true);
    let hp = model.local_field(i, &s);
    s.set_failed(j, false);
    let hm = model.local_field(i, &s);
    let (pp, pm) = (failure_probability(hp), failure_probability(hm));
    (pp * (1.0 - pm)) / (pm * (1.0 - pp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub n_nodes: usize,
    /// `(j, i, e^{4 J_ij})` for every nonzero coupling, sorted.
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn build_flow_graph(model: &InteractionModel) -> FlowGraph {
    let n = model.n_lines();
    let mut edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| model.row_nonzeros(i).into_iter().map(move |(j, v)| (j, i, (4.0 * v).exp())))
        .collect();
    edges.sort_by_key(|e| (e.0, e.1));
    FlowGraph { n_nodes: n, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster id per node; id 0 is the largest cluster.
    pub cluster: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Map-equation codelength in bits.
    pub codelength: f64,
    pub singleton_codelength: f64,
    /// Nodes ordered by cluster, then index (heat-map reindexing).
    pub order: Vec<usize>,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn count_larger_than(&self, size: usize) -> usize {
        self.sizes.iter().filter(|&&s| s > size).count()
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.cluster.len()).filter(|&u| self.cluster[u] == c).collect()
    }

    /// Relabels clusters by size, largest first (ties: smallest member).
    pub fn from_modules(modules: &[usize], codelength: f64, singleton_codelength: f64) -> Self {
        let k = modules.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; k];
        let mut first = vec![usize::MAX; k];
        for (u, &m) in modules.iter().enumerate() {
            sizes[m] += 1;
            first[m] = first[m].min(u);
        }
        let mut ids: Vec<usize> = (0..k).filter(|&m| sizes[m] > 0).collect();
        ids.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first[a].cmp(&first[b])));
        let mut remap = vec![0; k];
        for (new, &old) in ids.iter().enumerate() {
            remap[old] = new;
        }
        let cluster: Vec<usize> = modules.iter().map(|&m| remap[m]).collect();
        let sizes: Vec<usize> = ids.iter().map(|&m| sizes[m]).collect();
        let mut order: Vec<usize> = (0..cluster.len()).collect();
        order.sort_by_key(|&u| (cluster[u], u));
        ClusterAssignment { cluster, sizes, codelength, singleton_codelength, order }
    }
}

/// Two-level map-equation clustering of the flow graph.
pub fn cluster_flow_graph(graph: &FlowGraph, teleport: f64, seed: u64) -> Result<ClusterAssignment> {
    if graph.n_nodes == 0 {
        return Err(Error::InvalidArgument("empty flow graph".into()));
    }
    if !(0.0..1.0).contains(&teleport) || teleport == 0.0 {
        return Err(Error::InvalidArgument(format!("teleport probability {teleport} not in (0, 1)")));
    }
    let p = infomap(graph.n_nodes, &graph.edges, teleport, seed, 10);
    Ok(ClusterAssignment::from_modules(&p.modules, p.codelength, p.singleton_codelength))
}

/// Coupling matrix with rows and columns permuted by `order`.
pub fn reindexed_couplings(model: &InteractionModel, order: &[usize]) -> Vec<Vec<f64>> {
    order.iter().map(|&i| order.iter().map(|&j| model.coupling(i, j)).collect()).collect()
}

/// `E[Z_S | Z_S > 0]` over `states`, where `Z_S` counts failed lines in `S`.
pub fn conditional_mean_size(set: &[usize], states: &[NetworkState]) -> Option<f64> {
    let mut sum = 0usize;
    let mut hits = 0usize;
    for s in states {
        let z = set.iter().filter(|&&e| s.is_failed(e)).count();
        if z > 0 {
            sum += z;
            hits += 1;
        }
    }
    (hits > 0).then(|| sum as f64 / hits as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGamma {
    pub cluster: usize,
    pub size: usize,
    pub conditional_mean: f64,
    pub gamma: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub n_null: usize,
    pub clusters: Vec<ClusterGamma>,
}

impl GammaReport {
    pub fn min_mean(&self) -> Option<f64> {
        self.clusters.iter().map(|c| c.mean).reduce(f64::min)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// γ for a single line set against `n_null` random sets of the same size.
/// Null sets in which no line ever fails are redrawn.
pub fn gamma_for_set(set: &[usize], states: &[NetworkState], n_null: usize, seed: u64, stream_index: u64) -> Result<(f64, Vec<f64>)> {
    let n = states.first().map(|s| s.len()).ok_or_else(|| Error::InsufficientSamples("no states".into()))?;
    let c = conditional_mean_size(set, states).ok_or(Error::ClusterNeverFails(stream_index as usize))?;
    let mut rng = stream(seed, SeedDomain::Null, stream_index);
    let mut out = Vec::with_capacity(n_null);
    let mut attempts = 0;
    while out.len() < n_null {
        attempts += 1;
        if attempts > 100 * n_null + 1000 {
            return Err(Error::InsufficientSamples("random line sets never fail".into()));
        }
        let r: Vec<usize> = sample(&mut rng, n, set.len()).into_vec();
        if let Some(z) = conditional_mean_size(&r, states) {
            out.push(c / z);
        }
    }
    Ok((c, out))
}

/// γ distribution for every cluster with at least [`GAMMA_MIN_CLUSTER`] lines.
pub fn gamma_report(clusters: &ClusterAssignment, states: &[NetworkState], n_null: usize, seed: u64) -> Result<GammaReport> {
    if n_null == 0 {
        return Err(Error::InvalidArgument("n_null must be at least 1".into()));
    }
    if states.is_empty() {
        return Err(Error::InsufficientSamples("no final states".into()));
    }
    let ids: Vec<usize> = (0..clusters.n_clusters()).filter(|&c| clusters.sizes[c] >= GAMMA_MIN_CLUSTER).collect();
    let clusters = ids
        .par_iter()
        .map(|&c| {
            let members = clusters.members(c);
            let (cm, gamma) = gamma_for_set(&members, states, n_null, seed, c as u64).map_err(|e| match e {
                Error::ClusterNeverFails(_) => Error::ClusterNeverFails(c),
                other => other,
            })?;
            let mean = gamma.iter().sum::<f64>() / gamma.len() as f64;
            Ok(ClusterGamma { cluster: c, size: members.len(), conditional_mean: cm, median: median(&gamma), mean, gamma })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaReport { n_null, clusters })
}
