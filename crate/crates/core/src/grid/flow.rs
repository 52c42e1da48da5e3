use super::{Dispatch, Grid};
use crate::error::{Error, Result};
use crate::linalg;
use serde::{Deserialize, Serialize};

/// Largest island power imbalance (MW) accepted by the flow solver.
pub const ISLAND_TOL: f64 = 1e-6;
/// Imbalance below which rebalancing leaves an island untouched.
pub const BALANCE_TOL: f64 = 1e-9;

/// One adjustment made while restoring an island's power balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShedEvent {
    /// Proportional change of a generator's output (signed, MW).
    Ramp { bus: usize, delta: f64 },
    GeneratorTripped { bus: usize, output: f64 },
    LoadShed { bus: usize, amount: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Voltage phases in radians; zero at each island's reference bus.
    pub theta: Vec<f64>,
    /// Flow per line in file orientation; zero for inactive lines.
    pub flows: Vec<f64>,
    pub islands: Vec<Vec<usize>>,
    pub shed_record: Vec<ShedEvent>,
}

/// Dispatch after rebalancing every island, plus the resulting flows.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub dispatch: Dispatch,
    pub solution: FlowSolution,
}

/// Connected components of the bus graph restricted to active lines. Each
/// island is sorted; islands are ordered by their smallest bus.
pub fn find_islands(grid: &Grid, active: &[bool]) -> Vec<Vec<usize>> {
    let n = grid.n_buses();
    let adj = grid.adjacency(active);
    let mut label = vec![usize::MAX; n];
    let mut islands = Vec::new();
    let mut stack = Vec::new();
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        let id = islands.len();
        let mut members = vec![root];
        label[root] = id;
        stack.push(root);
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        islands.push(members);
    }
    islands
}

/// Restores the power balance of one island.
///
/// Surplus is removed by ramping generators down in proportion to their
/// output. A deficit is covered by ramping up in proportion to headroom; if
/// the headroom is too small, loads are shed whole, smallest first, until it
/// suffices. An island without load loses all generation, an island
/// without generation loses all load.
pub fn rebalance(grid: &Grid, island: &[usize], dispatch: &Dispatch) -> (Dispatch, Vec<ShedEvent>) {
    let mut out = dispatch.clone();
    let mut record = Vec::new();
    let gens: Vec<usize> = island
        .iter()
        .copied()
        .filter(|&i| grid.buses()[i].is_generator())
        .collect();
    let imbalance = out.island_imbalance(island);
    if imbalance.abs() <= BALANCE_TOL {
        return (out, record);
    }
    if imbalance > 0.0 {
        ramp_down(&mut out, &gens, imbalance, &mut record);
        return (out, record);
    }

    let mut deficit = -imbalance;
    let headroom: f64 = gens
        .iter()
        .map(|&i| grid.max_generation(i) - out.generation[i])
        .sum();
    if deficit > headroom + BALANCE_TOL {
        let mut loads: Vec<usize> = island.iter().copied().filter(|&i| out.load[i] > 0.0).collect();
        loads.sort_by(|&a, &b| out.load[a].total_cmp(&out.load[b]).then(a.cmp(&b)));
        for i in loads {
            if deficit <= headroom + BALANCE_TOL {
                break;
            }
            let amount = out.load[i];
            out.load[i] = 0.0;
            deficit -= amount;
            record.push(ShedEvent::LoadShed { bus: i, amount });
        }
    }
    if deficit > BALANCE_TOL {
        let scale = deficit / headroom;
        for &i in &gens {
            let delta = (grid.max_generation(i) - out.generation[i]) * scale;
            if delta != 0.0 {
                out.generation[i] += delta;
                record.push(ShedEvent::Ramp { bus: i, delta });
            }
        }
    } else if deficit < -BALANCE_TOL {
        ramp_down(&mut out, &gens, -deficit, &mut record);
    }
    (out, record)
}

fn ramp_down(out: &mut Dispatch, gens: &[usize], surplus: f64, record: &mut Vec<ShedEvent>) {
    let total: f64 = gens.iter().map(|&i| out.generation[i]).sum();
    if surplus >= total - BALANCE_TOL {
        for &i in gens {
            let output = out.generation[i];
            if output > 0.0 {
                out.generation[i] = 0.0;
                record.push(ShedEvent::GeneratorTripped { bus: i, output });
            }
        }
        return;
    }
    let scale = surplus / total;
    for &i in gens {
        let delta = -out.generation[i] * scale;
        if delta != 0.0 {
            out.generation[i] += delta;
            record.push(ShedEvent::Ramp { bus: i, delta });
        }
    }
}

/// DC flows for balanced injections: per island, ground the reference bus
/// (the slack if present, else the smallest bus index) and solve the reduced
/// Laplacian system by Cholesky.
pub fn solve_flows(grid: &Grid, active: &[bool], injections: &[f64]) -> Result<FlowSolution> {
    let n = grid.n_buses();
    if active.len() != grid.n_lines() {
        return Err(Error::Dimension { expected: grid.n_lines(), found: active.len() });
    }
    if injections.len() != n {
        return Err(Error::Dimension { expected: n, found: injections.len() });
    }
    let islands = find_islands(grid, active);
    let mut theta = vec![0.0; n];
    let mut local = vec![usize::MAX; n];
    let mut comp = vec![0usize; n];
    for (c, island) in islands.iter().enumerate() {
        for &i in island {
            comp[i] = c;
        }
    }
    for (c, island) in islands.iter().enumerate() {
        let imbalance: f64 = island.iter().map(|&i| injections[i]).sum();
        if imbalance.abs() > ISLAND_TOL {
            return Err(Error::UnbalancedIsland { bus: island[0], imbalance });
        }
        if island.len() == 1 {
            continue;
        }
        let reference = if comp[grid.slack_bus()] == c { grid.slack_bus() } else { island[0] };
        let mut k = 0;
        for &i in island {
            if i != reference {
                local[i] = k;
                k += 1;
            }
        }
        let mut a = vec![0.0; k * k];
        let mut rhs: Vec<f64> = island
            .iter()
            .filter(|&&i| i != reference)
            .map(|&i| injections[i])
            .collect();
        for (e, l) in grid.lines().iter().enumerate() {
            if !active[e] || comp[l.from] != c {
                continue;
            }
            let (u, v) = (local[l.from], local[l.to]);
            let b = l.susceptance;
            if u != usize::MAX {
                a[u * k + u] += b;
            }
            if v != usize::MAX {
                a[v * k + v] += b;
            }
            if u != usize::MAX && v != usize::MAX {
                a[u * k + v] -= b;
                a[v * k + u] -= b;
            }
        }
        linalg::solve_spd(&mut a, k, &mut rhs)?;
        for &i in island {
            if i != reference {
                theta[i] = rhs[local[i]];
                local[i] = usize::MAX;
            }
        }
    }
    let flows = grid
        .lines()
        .iter()
        .enumerate()
        .map(|(e, l)| if active[e] { l.susceptance * (theta[l.from] - theta[l.to]) } else { 0.0 })
        .collect();
    Ok(FlowSolution { theta, flows, islands, shed_record: Vec::new() })
}

/// Rebalances every island of the active network starting from the base
/// dispatch, then solves the flows.
pub fn operating_point(grid: &Grid, active: &[bool]) -> Result<OperatingPoint> {
    let islands = find_islands(grid, active);
    let mut dispatch = grid.base_dispatch();
    let mut record = Vec::new();
    for island in &islands {
        let (d, r) = rebalance(grid, island, &dispatch);
        dispatch = d;
        record.extend(r);
    }
    let mut solution = solve_flows(grid, active, &dispatch.injections())?;
    solution.shed_record = record;
    Ok(OperatingPoint { dispatch, solution })
}
