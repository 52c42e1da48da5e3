//! Pairwise line diagnostics: edge distance, line outage distribution
//! factors, and (conditional) Pearson correlations of line states.

use crate::cascade::NetworkState;
use crate::error::{Error, Result};
use crate::grid::{find_islands, solve_flows, Grid};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Edge distances between lines: one plus the smallest hop count between
/// their endpoints, zero on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl EdgeDistanceMatrix {
    /// Wraps a precomputed row-major matrix.
    pub fn from_rows(n: usize, d: Vec<u32>) -> Self {
        assert_eq!(d.len(), n * n);
        EdgeDistanceMatrix { n, d }
    }

    pub fn n_lines(&self) -> usize {
        self.n
    }

    pub fn get(&self, e: usize, f: usize) -> u32 {
        self.d[e * self.n + f]
    }

    pub fn row(&self, e: usize) -> &[u32] {
        &self.d[e * self.n..(e + 1) * self.n]
    }

    pub fn max_off_diagonal(&self) -> u32 {
        (0..self.n)
            .flat_map(|e| (0..self.n).filter(move |&f| f != e).map(move |f| (e, f)))
            .map(|(e, f)| self.get(e, f))
            .max()
            .unwrap_or(0)
    }
}

fn bus_hops(grid: &Grid) -> Result<Vec<Vec<u32>>> {
    let n = grid.n_buses();
    let adj = grid.adjacency(&vec![true; grid.n_lines()]);
    let mut all = Vec::with_capacity(n);
    for src in 0..n {
        let mut dist = vec![u32::MAX; n];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if dist.contains(&u32::MAX) {
            return Err(Error::Disconnected);
        }
        all.push(dist);
    }
    Ok(all)
}

pub fn edge_distance(grid: &Grid) -> Result<EdgeDistanceMatrix> {
    let hops = bus_hops(grid)?;
    let l = grid.n_lines();
    let mut d = vec![0u32; l * l];
    for e in 0..l {
        let le = grid.line(e);
        for f in (e + 1)..l {
            let lf = grid.line(f);
            let m = [le.from, le.to]
                .iter()
                .flat_map(|&x| [lf.from, lf.to].map(|y| hops[x][y]))
                .min()
                .unwrap();
            d[e * l + f] = m + 1;
            d[f * l + e] = m + 1;
        }
    }
    Ok(EdgeDistanceMatrix { n: l, d })
}

/// Outage distribution factor of `target` for the outage of `outaged`:
/// flow change on `target` divided by the pre-outage flow on `outaged`,
/// both with the given balanced injections.
pub fn lodf(grid: &Grid, injections: &[f64], outaged: usize, target: usize) -> Result<f64> {
    let l = grid.n_lines();
    if outaged >= l || target >= l {
        return Err(Error::InvalidArgument("line index out of range".into()));
    }
    let mut active = vec![true; l];
    let before = solve_flows(grid, &active, injections)?;
    let f_e = before.flows[outaged];
    if f_e.abs() < 1e-12 {
        return Err(Error::ZeroFlow(outaged));
    }
    active[outaged] = false;
    if find_islands(grid, &active).len() != before.islands.len() {
        return Err(Error::BridgeRemoval(outaged));
    }
    let after = solve_flows(grid, &active, injections)?;
    Ok((after.flows[target] - before.flows[target]) / f_e)
}

fn spins_of(states: &[NetworkState], i: usize) -> Vec<f64> {
    states.iter().map(|s| s.spin(i)).collect()
}

fn pearson_vec(x: &[f64], y: &[f64], ix: usize, iy: usize) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance(ix));
    }
    if syy <= 0.0 {
        return Err(Error::ZeroVariance(iy));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of the states of lines `i` and `j`.
pub fn pearson(states: &[NetworkState], i: usize, j: usize) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InsufficientSamples("no states".into()));
    }
    pearson_vec(&spins_of(states, i), &spins_of(states, j), i, j)
}

/// Minimum subsample size for a conditional correlation.
pub const MIN_CONDITIONAL_SAMPLES: usize = 30;

/// Pearson correlation of lines `i` and `j` over the states in which line
/// `k` has spin `given` (±1).
pub fn conditional_pearson(states: &[NetworkState], i: usize, j: usize, k: usize, given: i8) -> Result<f64> {
    let want = given == 1;
    let sub: Vec<NetworkState> = states.iter().filter(|s| s.is_failed(k) == want).cloned().collect();
    if sub.len() < MIN_CONDITIONAL_SAMPLES {
        return Err(Error::InsufficientSubsample { found: sub.len(), needed: MIN_CONDITIONAL_SAMPLES });
    }
    pearson(&sub, i, j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEntry {
    pub k: usize,
    pub given: i8,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pair: (usize, usize),
    pub pearson: Option<f64>,
    pub conditional: Vec<ConditionalEntry>,
}

/// Plain and conditional correlations for one pair; entries whose guard
/// fails are reported as `None`.
pub fn correlation_report(states: &[NetworkState], i: usize, j: usize, conditioning: &[usize]) -> CorrelationReport {
    let conditional = conditioning
        .iter()
        .flat_map(|&k| [-1i8, 1].map(|given| (k, given)))
        .map(|(k, given)| ConditionalEntry { k, given, value: conditional_pearson(states, i, j, k, given).ok() })
        .collect();
    CorrelationReport { pair: (i, j), pearson: pearson(states, i, j).ok(), conditional }
}
