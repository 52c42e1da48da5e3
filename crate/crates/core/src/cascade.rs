//! Overload cascades: seeding, synchronous failure steps, trajectories and
//! dataset assembly.

use crate::error::{Error, Result};
use crate::grid::{operating_point, Grid};
use crate::rng::{self, SeedDomain};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};

/// Line states at one time step; `true` means failed (spin +1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetworkState {
    failed: Vec<bool>,
}

impl NetworkState {
    pub fn healthy(n_lines: usize) -> Self {
        NetworkState { failed: vec![false; n_lines] }
    }

    pub fn from_failed(n_lines: usize, failed: &[usize]) -> Self {
        let mut s = Self::healthy(n_lines);
        for &e in failed {
            s.failed[e] = true;
        }
        s
    }

    pub fn from_mask(failed: Vec<bool>) -> Self {
        NetworkState { failed }
    }

    /// Builds a state from a ±1 vector.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        spins
            .iter()
            .map(|&s| match s {
                1 => Ok(true),
                -1 => Ok(false),
                other => Err(Error::Format(format!("spin must be ±1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_mask)
    }

    pub fn len(&self) -> usize {
        self.failed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn is_failed(&self, e: usize) -> bool {
        self.failed[e]
    }

    pub fn set_failed(&mut self, e: usize, failed: bool) {
        self.failed[e] = failed;
    }

    /// Spin of line `e`: +1 failed, −1 working.
    pub fn spin(&self, e: usize) -> f64 {
        if self.failed[e] {
            1.0
        } else {
            -1.0
        }
    }

    pub fn spins(&self) -> Vec<i8> {
        self.failed.iter().map(|&f| if f { 1 } else { -1 }).collect()
    }

    pub fn mask(&self) -> &[bool] {
        &self.failed
    }

    pub fn failed_indices(&self) -> Vec<usize> {
        (0..self.failed.len()).filter(|&e| self.failed[e]).collect()
    }

    /// Mask of working lines.
    pub fn active(&self) -> Vec<bool> {
        self.failed.iter().map(|f| !f).collect()
    }
}

/// Cascade size: number of failed lines.
pub fn cascade_size(state: &NetworkState) -> usize {
    state.failed.iter().filter(|&&f| f).count()
}

/// Draws an initial failure set: every line independently with
/// probability `p_f`, redrawing empty sets.
pub fn seed_failures<R: Rng + ?Sized>(rng: &mut R, n_lines: usize, p_f: f64) -> Vec<usize> {
    assert!(p_f > 0.0 && p_f < 1.0, "p_f must lie in (0, 1)");
    assert!(n_lines > 0);
    loop {
        let set: Vec<usize> = (0..n_lines).filter(|_| rng.gen::<f64>() < p_f).collect();
        if !set.is_empty() {
            return set;
        }
    }
}

/// One synchronous cascade step: rebalance every island, solve flows, and
/// fail every working line whose flow magnitude exceeds its capacity.
pub fn step(grid: &Grid, state: &NetworkState) -> Result<NetworkState> {
    let op = operating_point(grid, &state.active())?;
    let mut next = state.clone();
    for (e, line) in grid.lines().iter().enumerate() {
        if !state.failed[e] && op.solution.flows[e].abs() > line.capacity {
            next.failed[e] = true;
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub initial: Vec<usize>,
    /// `states[0]` is the seeded state, the last entry the steady state.
    pub states: Vec<NetworkState>,
}

impl Trajectory {
    /// Number of propagation steps before the steady state.
    pub fn t_ss(&self) -> usize {
        self.states.len() - 1
    }

    pub fn propagates(&self) -> bool {
        self.states.len() > 1
    }

    pub fn final_state(&self) -> &NetworkState {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn n_lines(&self) -> usize {
        self.states[0].len()
    }
}

/// Steps from the seeded state until no new line fails.
pub fn run_trajectory(grid: &Grid, initial: &[usize]) -> Result<Trajectory> {
    if initial.is_empty() {
        return Err(Error::InvalidArgument("initial failure set is empty".into()));
    }
    let mut initial = initial.to_vec();
    initial.sort_unstable();
    initial.dedup();
    let mut states = vec![NetworkState::from_failed(grid.n_lines(), &initial)];
    loop {
        let next = step(grid, states.last().unwrap())?;
        if &next == states.last().unwrap() {
            break;
        }
        states.push(next);
    }
    Ok(Trajectory { seed: 0, initial, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Unique random initial failures, propagating or not.
    D1,
    /// Only initial failures followed by at least one consecutive failure.
    D2,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D1" | "d1" => Ok(Variant::D1),
            "D2" | "d2" => Ok(Variant::D2),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::D1 => "D1",
            Variant::D2 => "D2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub m_target: usize,
    pub p_f: f64,
    pub variant: Variant,
    pub seed: u64,
    pub domain: SeedDomain,
}

impl DatasetConfig {
    /// Seeding probability 2.5 / L.
    pub fn default_p_f(n_lines: usize) -> f64 {
        2.5 / n_lines as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub grid_hash: String,
    pub n_lines: usize,
    pub p_f: f64,
    pub variant: Variant,
    pub m: usize,
    pub seed: u64,
    pub domain: SeedDomain,
    /// Unique initial-failure sets simulated.
    pub attempted: usize,
    /// How many of those propagated at least one step.
    pub propagating: usize,
}

impl DatasetHeader {
    pub fn propagation_fraction(&self) -> f64 {
        self.propagating as f64 / self.attempted.max(1) as f64
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.m as f64 / self.attempted.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn final_states(&self) -> Vec<NetworkState> {
        self.trajectories.iter().map(|t| t.final_state().clone()).collect()
    }

    /// Final states with duplicates removed, in first-occurrence order.
    pub fn unique_final_states(&self) -> Vec<NetworkState> {
        dedup_states(self.trajectories.iter().map(|t| t.final_state().clone()))
    }
}

pub fn dedup_states(states: impl IntoIterator<Item = NetworkState>) -> Vec<NetworkState> {
    let mut seen = HashSet::new();
    states.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

const BATCH: usize = 256;

/// Simulates candidate trajectories in index order, each with its own
/// random stream, and keeps the first `m_target` accepted ones.
pub fn generate_dataset(grid: &Grid, config: &DatasetConfig) -> Result<Dataset> {
    if config.m_target == 0 {
        return Err(Error::InvalidArgument("m_target must be at least 1".into()));
    }
    if !(config.p_f > 0.0 && config.p_f < 1.0) {
        return Err(Error::InvalidArgument(format!("p_f = {} outside (0, 1)", config.p_f)));
    }
    let l = grid.n_lines();
    let max_candidates = (config.m_target * 1000).max(1_000_000);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut trajectories = Vec::with_capacity(config.m_target);
    let (mut attempted, mut propagating) = (0usize, 0usize);
    let mut next = 0usize;
    while trajectories.len() < config.m_target {
        if next >= max_candidates {
            return Err(Error::InsufficientSamples(format!(
                "only {} of {} trajectories accepted after {next} candidates",
                trajectories.len(),
                config.m_target
            )));
        }
        let batch: Vec<(u64, Vec<usize>)> = (next..next + BATCH)
            .map(|k| {
                let seed = rng::derive_seed(config.seed, config.domain, k as u64);
                let mut r = rng::stream(config.seed, config.domain, k as u64);
                (seed, seed_failures(&mut r, l, config.p_f))
            })
            .collect();
        next += BATCH;
        // Duplicates inside the batch are simulated but dropped below.
        let fresh: Vec<(u64, Vec<usize>)> = batch.into_iter().filter(|(_, init)| !seen.contains(init)).collect();
        let results: Vec<Result<Trajectory>> = fresh
            .par_iter()
            .map(|(seed, init)| {
                run_trajectory(grid, init).map(|mut t| {
                    t.seed = *seed;
                    t
                })
            })
            .collect();
        for t in results {
            let t = t?;
            if !seen.insert(t.initial.clone()) {
                continue;
            }
            attempted += 1;
            if t.propagates() {
                propagating += 1;
            }
            let accept = match config.variant {
                Variant::D1 => true,
                Variant::D2 => t.propagates(),
            };
            if accept {
                trajectories.push(t);
                if trajectories.len() == config.m_target {
                    break;
                }
            }
        }
    }
    Ok(Dataset {
        header: DatasetHeader {
            grid_hash: grid.fingerprint(),
            n_lines: l,
            p_f: config.p_f,
            variant: config.variant,
            m: trajectories.len(),
            seed: config.seed,
            domain: config.domain,
            attempted,
            propagating,
        },
        trajectories,
    })
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    #[serde(rename = "type")]
    kind: String,
    #[serde(flatten)]
    header: DatasetHeader,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    seed: u64,
    initial: Vec<usize>,
    /// Lines failing at each step; the first entry is the seeded set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    new_failures: Option<Vec<Vec<usize>>>,
    /// Alternative encoding: full ±1 vectors per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<Vec<i8>>>,
}

/// Writes the header line followed by one record per trajectory.
pub fn write_dataset<W: Write>(mut w: W, dataset: &Dataset) -> Result<()> {
    let header = HeaderRecord { kind: "header".into(), header: dataset.header.clone() };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &dataset.trajectories {
        let mut steps = Vec::with_capacity(t.states.len());
        let mut prev = NetworkState::healthy(t.n_lines());
        for s in &t.states {
            steps.push((0..s.len()).filter(|&e| s.is_failed(e) && !prev.is_failed(e)).collect());
            prev = s.clone();
        }
        let rec = TrajectoryRecord { seed: t.seed, initial: t.initial.clone(), new_failures: Some(steps), states: None };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Upper bound on the line count accepted from files.
pub const MAX_LINES: usize = 1 << 16;

/// Reads a dataset written by [`write_dataset`]. Records may carry either
/// per-step new-failure lists or ±1 state vectors.
pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))?;
    let head: HeaderRecord = serde_json::from_str(&first?)?;
    if head.kind != "header" {
        return Err(Error::Format(format!("expected header record, found type {:?}", head.kind)));
    }
    let header = head.header;
    let l = header.n_lines;
    if l == 0 || l > MAX_LINES {
        return Err(Error::Format(format!("line count {l} outside 1..={MAX_LINES}")));
    }
    let mut trajectories = Vec::new();
    for (k, line) in lines {
        let rec: TrajectoryRecord = serde_json::from_str(&line?)
            .map_err(|e| Error::Format(format!("record on line {}: {e}", k + 1)))?;
        let states = decode_states(&rec, l).map_err(|e| Error::Format(format!("record on line {}: {e}", k + 1)))?;
        trajectories.push(Trajectory { seed: rec.seed, initial: rec.initial, states });
    }
    if trajectories.len() != header.m {
        return Err(Error::Format(format!("header announces {} trajectories, found {}", header.m, trajectories.len())));
    }
    Ok(Dataset { header, trajectories })
}

fn decode_states(rec: &TrajectoryRecord, l: usize) -> Result<Vec<NetworkState>> {
    if rec.initial.iter().any(|&e| e >= l) {
        return Err(Error::Format("initial failure index out of range".into()));
    }
    let states = match (&rec.new_failures, &rec.states) {
        (Some(steps), None) => {
            let mut cur = NetworkState::healthy(l);
            let mut out = Vec::with_capacity(steps.len());
            for step in steps {
                for &e in step {
                    if e >= l {
                        return Err(Error::Format(format!("line index {e} out of range")));
                    }
                    cur.failed[e] = true;
                }
                out.push(cur.clone());
            }
            out
        }
        (None, Some(spins)) => spins
            .iter()
            .map(|s| {
                if s.len() != l {
                    return Err(Error::Dimension { expected: l, found: s.len() });
                }
                NetworkState::from_spins(s)
            })
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Format("record needs exactly one of new_failures or states".into())),
    };
    if states.is_empty() {
        return Err(Error::Format("trajectory without states".into()));
    }
    if states[0].failed_indices() != rec.initial {
        return Err(Error::Format("initial set does not match the first state".into()));
    }
    for w in states.windows(2) {
        if (0..l).any(|e| w[0].is_failed(e) && !w[1].is_failed(e)) {
            return Err(Error::Format("failures must be monotone".into()));
        }
    }
    Ok(states)
}
