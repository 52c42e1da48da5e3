//! Power network model and the linearized (DC) flow problem.

mod case_file;
mod flow;

pub use case_file::{load_grid, parse_case, CaseFormat};
pub use flow::{
    find_islands, operating_point, rebalance, solve_flows, FlowSolution, OperatingPoint,
    ShedEvent, BALANCE_TOL,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Scheduled output in MW.
    pub output: f64,
    pub max_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Label used in case files and reports.
    pub id: u32,
    /// Demand in MW (nonnegative).
    pub load: f64,
    pub generator: Option<Generator>,
}

impl Bus {
    pub fn is_generator(&self) -> bool {
        self.generator.is_some()
    }

    /// Net injection: generation minus demand.
    pub fn injection(&self) -> f64 {
        self.generator.as_ref().map_or(0.0, |g| g.output) - self.load
    }
}

/// A transmission line between two bus indices. The from/to orientation is
/// arbitrary and only fixes the sign convention of its flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub capacity: f64,
}

/// Generation and demand per bus. Rebalancing works on this split because a
/// bus can host both a generator and a load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub generation: Vec<f64>,
    pub load: Vec<f64>,
}

impl Dispatch {
    pub fn injections(&self) -> Vec<f64> {
        self.generation
            .iter()
            .zip(&self.load)
            .map(|(g, l)| g - l)
            .collect()
    }

    pub fn island_imbalance(&self, island: &[usize]) -> f64 {
        island
            .iter()
            .map(|&i| self.generation[i] - self.load[i])
            .sum()
    }
}

/// Immutable power network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    slack: usize,
}

impl Grid {
    /// Builds a grid and checks its invariants. The slack bus is the
    /// generator bus with the largest maximum output (lowest index on ties).
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        let n = buses.len();
        if n == 0 {
            return Err(Error::InvalidGrid("no buses".into()));
        }
        for (i, b) in buses.iter().enumerate() {
            if !(b.load >= 0.0) || !b.load.is_finite() {
                return Err(Error::InvalidGrid(format!("bus {}: negative load", b.id)));
            }
            if let Some(g) = &b.generator {
                if !(g.max_output >= 0.0) || !g.max_output.is_finite() {
                    return Err(Error::InvalidGrid(format!(
                        "bus {}: invalid generator limit",
                        b.id
                    )));
                }
                if !(g.output >= 0.0 && g.output <= g.max_output) {
                    return Err(Error::InvalidGrid(format!(
                        "bus {}: generator output {} outside [0, {}]",
                        b.id, g.output, g.max_output
                    )));
                }
            }
            if buses[..i].iter().any(|o| o.id == b.id) {
                return Err(Error::InvalidGrid(format!("duplicate bus id {}", b.id)));
            }
        }
        for (e, l) in lines.iter().enumerate() {
            if l.from >= n || l.to >= n {
                return Err(Error::InvalidGrid(format!("line {e}: endpoint out of range")));
            }
            if l.from == l.to {
                return Err(Error::InvalidGrid(format!("line {e}: self-loop")));
            }
            if !(l.susceptance > 0.0) || !l.susceptance.is_finite() {
                return Err(Error::InvalidGrid(format!("line {e}: nonpositive susceptance")));
            }
            if !(l.capacity > 0.0) || !l.capacity.is_finite() {
                return Err(Error::InvalidGrid(format!("line {e}: nonpositive capacity")));
            }
        }
        let slack = buses
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.generator.as_ref().map(|g| (i, g.max_output)))
            .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((i, m)),
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::InvalidGrid("no generator to host the slack bus".into()))?;
        Ok(Grid {
            buses,
            lines,
            slack,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, e: usize) -> &Line {
        &self.lines[e]
    }

    pub fn slack_bus(&self) -> usize {
        self.slack
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Bus labels of a line's endpoints, in file orientation.
    pub fn line_label(&self, e: usize) -> (u32, u32) {
        let l = &self.lines[e];
        (self.buses[l.from].id, self.buses[l.to].id)
    }

    /// Finds the line joining two labelled buses, in either orientation.
    pub fn find_line(&self, a: u32, b: u32) -> Option<usize> {
        (0..self.lines.len()).find(|&e| {
            let (x, y) = self.line_label(e);
            (x, y) == (a, b) || (x, y) == (b, a)
        })
    }

    pub fn base_dispatch(&self) -> Dispatch {
        Dispatch {
            generation: self
                .buses
                .iter()
                .map(|b| b.generator.as_ref().map_or(0.0, |g| g.output))
                .collect(),
            load: self.buses.iter().map(|b| b.load).collect(),
        }
    }

    pub fn injections(&self) -> Vec<f64> {
        self.buses.iter().map(Bus::injection).collect()
    }

    pub fn max_generation(&self, bus: usize) -> f64 {
        self.buses[bus].generator.as_ref().map_or(0.0, |g| g.max_output)
    }

    /// Returns a copy with every line capacity multiplied by `factor`.
    pub fn with_capacity_scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "capacity scale must be positive, got {factor}"
            )));
        }
        let mut g = self.clone();
        for l in &mut g.lines {
            l.capacity *= factor;
        }
        Ok(g)
    }

    /// Bus adjacency lists over the lines marked active.
    pub fn adjacency(&self, active: &[bool]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_buses()];
        for (e, l) in self.lines.iter().enumerate() {
            if active[e] {
                adj[l.from].push(l.to);
                adj[l.to].push(l.from);
            }
        }
        adj
    }

    /// SHA-256 over a canonical rendering of the network data.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for b in &self.buses {
            h.update(b.id.to_le_bytes());
            h.update(b.load.to_le_bytes());
            if let Some(g) = &b.generator {
                h.update(g.output.to_le_bytes());
                h.update(g.max_output.to_le_bytes());
            }
        }
        for l in &self.lines {
            h.update((l.from as u64).to_le_bytes());
            h.update((l.to as u64).to_le_bytes());
            h.update(l.susceptance.to_le_bytes());
            h.update(l.capacity.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// The bundled IEEE 118-bus case.
pub const IEEE118_CASE: &str = include_str!("../../../../data/ieee118.case");

pub fn ieee118() -> Grid {
    parse_case(IEEE118_CASE, std::path::Path::new("ieee118.case"))
        .expect("bundled ieee118.case is valid")
}
