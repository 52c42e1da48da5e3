//! Two-level map equation for directed weighted graphs.
//!
//! Visit rates come from PageRank with uniform teleportation. Teleport
//! steps are not encoded: link flow is `p_u w_uv / W_u` and node flow is
//! the flow arriving along links, both normalized to one. The
//! partition is optimized by repeated local moves and aggregation of
//! modules into super-nodes, keeping the best of several seeded trials.

use crate::rng::{stream, SeedDomain};
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Stationary visit rates of the teleporting random walk. Dangling nodes
/// teleport uniformly.
pub fn visit_rates(n: usize, edges: &[(usize, usize, f64)], teleport: f64) -> Vec<f64> {
    let mut out_w = vec![0.0; n];
    for &(u, _, w) in edges {
        out_w[u] += w;
    }
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let dangling: f64 = (0..n).filter(|&u| out_w[u] == 0.0).map(|u| p[u]).sum();
        let base = (teleport + (1.0 - teleport) * dangling) / n as f64;
        let mut next = vec![base; n];
        for &(u, v, w) in edges {
            next[v] += (1.0 - teleport) * p[u] * w / out_w[u];
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let diff: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if diff < 1e-15 {
            break;
        }
    }
    p
}

/// Flow network: node visit rates and directed link flows.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub node_flow: Vec<f64>,
    /// `(from, to, flow)`, no self-loops at the base level.
    pub links: Vec<(usize, usize, f64)>,
}

impl FlowNetwork {
    pub fn new(n: usize, edges: &[(usize, usize, f64)], teleport: f64) -> Self {
        let rank = visit_rates(n, edges, teleport);
        let mut out_w = vec![0.0; n];
        for &(u, _, w) in edges {
            out_w[u] += w;
        }
        // One teleport-free step from the PageRank distribution; node
        // flow is what arrives along links.
        let mut links: Vec<(usize, usize, f64)> =
            edges.iter().filter(|e| e.0 != e.1).map(|&(u, v, w)| (u, v, rank[u] * w / out_w[u])).collect();
        let total: f64 = links.iter().map(|l| l.2).sum();
        let mut node_flow = vec![0.0; n];
        if total > 0.0 {
            for l in &mut links {
                l.2 /= total;
                node_flow[l.1] += l.2;
            }
        } else {
            node_flow = rank;
        }
        FlowNetwork { node_flow, links }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_flow.len()
    }

    /// Two-level codelength (bits) of `modules`.
    pub fn codelength(&self, modules: &[usize]) -> f64 {
        let k = modules.iter().copied().max().map_or(0, |m| m + 1);
        let mut exit = vec![0.0; k];
        let mut flow = vec![0.0; k];
        for (u, &m) in modules.iter().enumerate() {
            flow[m] += self.node_flow[u];
        }
        for &(u, v, f) in &self.links {
            if modules[u] != modules[v] {
                exit[modules[u]] += f;
            }
        }
        let node_term: f64 = self.node_flow.iter().map(|&p| plogp(p)).sum();
        map_equation(&exit, &flow, node_term)
    }
}

fn map_equation(exit: &[f64], flow: &[f64], node_term: f64) -> f64 {
    let q: f64 = exit.iter().sum();
    let a: f64 = exit.iter().map(|&x| plogp(x)).sum();
    let b: f64 = exit.iter().zip(flow).map(|(&x, &p)| plogp(x + p)).sum();
    plogp(q) - 2.0 * a + b - node_term
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Module index per node, numbered `0..n_modules` by first appearance.
    pub modules: Vec<usize>,
    pub codelength: f64,
    /// Codelength of every node in its own module.
    pub singleton_codelength: f64,
    /// Codelength of the single-module partition.
    pub one_module_codelength: f64,
}

/// A level of the hierarchy: nodes are modules of the level below.
struct Level {
    flow: Vec<f64>,
    /// Outgoing and incoming links per node, self-loops excluded.
    out: Vec<Vec<(usize, f64)>>,
    inc: Vec<Vec<(usize, f64)>>,
}

impl Level {
    fn from_links(n: usize, flow: Vec<f64>, links: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut agg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (u, v, f) in links {
            if u != v {
                *agg.entry((u, v)).or_insert(0.0) += f;
            }
        }
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for (&(u, v), &f) in &agg {
            out[u].push((v, f));
            inc[v].push((u, f));
        }
        Level { flow, out, inc }
    }

    fn n(&self) -> usize {
        self.flow.len()
    }
}

struct Optimizer<'a> {
    level: &'a Level,
    module: Vec<usize>,
    exit: Vec<f64>,
    mflow: Vec<f64>,
    members: Vec<usize>,
    node_term: f64,
}

impl<'a> Optimizer<'a> {
    fn new(level: &'a Level, node_term: f64) -> Self {
        let n = level.n();
        let exit = (0..n).map(|u| level.out[u].iter().map(|x| x.1).sum()).collect();
        Optimizer { level, module: (0..n).collect(), exit, mflow: level.flow.clone(), members: vec![1; n], node_term }
    }

    fn codelength(&self) -> f64 {
        map_equation(&self.exit, &self.mflow, self.node_term)
    }

    /// One sweep over nodes in random order; returns the number of moves.
    fn sweep(&mut self, order: &[usize]) -> usize {
        let n = self.level.n();
        let mut moves = 0;
        let q: f64 = self.exit.iter().sum();
        let mut sum_q = q;
        let mut sum_a: f64 = self.exit.iter().map(|&x| plogp(x)).sum();
        let mut sum_b: f64 = self.exit.iter().zip(&self.mflow).map(|(&x, &p)| plogp(x + p)).sum();
        let mut empty: Vec<usize> = (0..n).filter(|&m| self.members[m] == 0).collect();
        for &u in order {
            let a = self.module[u];
            let pu = self.level.flow[u];
            let out_tot: f64 = self.level.out[u].iter().map(|x| x.1).sum();
            let mut to: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for &(v, f) in &self.level.out[u] {
                to.entry(self.module[v]).or_insert((0.0, 0.0)).0 += f;
            }
            for &(v, f) in &self.level.inc[u] {
                to.entry(self.module[v]).or_insert((0.0, 0.0)).1 += f;
            }
            let (oa, ia) = to.get(&a).copied().unwrap_or((0.0, 0.0));
            let qa_new = self.exit[a] - (out_tot - oa) + ia;
            let pa_new = self.mflow[a] - pu;
            let mut candidates: Vec<(usize, f64, f64)> = to.iter().filter(|(&m, _)| m != a).map(|(&m, &(o, i))| (m, o, i)).collect();
            if self.members[a] > 1 {
                if let Some(&e) = empty.last() {
                    candidates.push((e, 0.0, 0.0));
                }
            }
            let current = plogp(sum_q) - 2.0 * sum_a + sum_b;
            let mut best: Option<(usize, f64, f64, f64, f64, f64)> = None;
            for (b, ob, ib) in candidates {
                let qb_new = self.exit[b] + (out_tot - ob) - ib;
                let pb_new = self.mflow[b] + pu;
                let nq = sum_q - self.exit[a] - self.exit[b] + qa_new + qb_new;
                let na = sum_a - plogp(self.exit[a]) - plogp(self.exit[b]) + plogp(qa_new) + plogp(qb_new);
                let nb = sum_b - plogp(self.exit[a] + self.mflow[a]) - plogp(self.exit[b] + self.mflow[b]) + plogp(qa_new + pa_new) + plogp(qb_new + pb_new);
                let delta = plogp(nq) - 2.0 * na + nb - current;
                if delta < -1e-12 && best.is_none_or(|x| delta < x.1) {
                    best = Some((b, delta, qb_new, nq, na, nb));
                }
            }
            if let Some((b, _, qb_new, nq, na, nb)) = best {
                if self.members[b] == 0 {
                    empty.pop();
                }
                self.exit[a] = qa_new.max(0.0);
                self.mflow[a] = pa_new.max(0.0);
                self.exit[b] = qb_new;
                self.mflow[b] += pu;
                self.members[a] -= 1;
                self.members[b] += 1;
                if self.members[a] == 0 {
                    self.exit[a] = 0.0;
                    self.mflow[a] = 0.0;
                    empty.push(a);
                }
                self.module[u] = b;
                sum_q = nq;
                sum_a = na;
                sum_b = nb;
                moves += 1;
            }
        }
        moves
    }
}

fn relabel(modules: &mut [usize]) -> usize {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for m in modules.iter_mut() {
        let id = *map.entry(*m).or_insert_with(|| {
            next += 1;
            next - 1
        });
        *m = id;
    }
    next
}

fn one_trial(net: &FlowNetwork, seed: u64, trial: u64) -> Vec<usize> {
    let n = net.n_nodes();
    let node_term: f64 = net.node_flow.iter().map(|&p| plogp(p)).sum();
    let mut rng = stream(seed, SeedDomain::Clustering, trial);
    // assignment of base nodes to current-level nodes
    let mut assign: Vec<usize> = (0..n).collect();
    let mut level = Level::from_links(n, net.node_flow.clone(), net.links.iter().copied());
    loop {
        let mut opt = Optimizer::new(&level, node_term);
        let mut order: Vec<usize> = (0..level.n()).collect();
        let mut total_moves = 0;
        for _ in 0..200 {
            order.shuffle(&mut rng);
            let moved = opt.sweep(&order);
            total_moves += moved;
            if moved == 0 {
                break;
            }
        }
        let _ = opt.codelength();
        if total_moves == 0 {
            break;
        }
        let mut modules = opt.module.clone();
        let k = relabel(&mut modules);
        for a in assign.iter_mut() {
            *a = modules[*a];
        }
        let mut flow = vec![0.0; k];
        for (u, &m) in modules.iter().enumerate() {
            flow[m] += level.flow[u];
        }
        let links: Vec<(usize, usize, f64)> = (0..level.n())
            .flat_map(|u| level.out[u].iter().map(move |&(v, f)| (u, v, f)).collect::<Vec<_>>())
            .map(|(u, v, f)| (modules[u], modules[v], f))
            .collect();
        level = Level::from_links(k, flow, links);
        if k == 1 {
            break;
        }
    }
    relabel(&mut assign);
    assign
}

/// Minimizes the two-level map equation. Deterministic given `seed`.
pub fn infomap(n: usize, edges: &[(usize, usize, f64)], teleport: f64, seed: u64, trials: usize) -> Partition {
    let net = FlowNetwork::new(n, edges, teleport);
    let singletons: Vec<usize> = (0..n).collect();
    let one = vec![0; n];
    let singleton_codelength = net.codelength(&singletons);
    let one_module_codelength = net.codelength(&one);
    let mut best = (one_module_codelength, one);
    if singleton_codelength < best.0 {
        best = (singleton_codelength, singletons);
    }
    for t in 0..trials.max(1) {
        let modules = one_trial(&net, seed, t as u64);
        let l = net.codelength(&modules);
        if l < best.0 - 1e-12 {
            best = (l, modules);
        }
    }
    Partition { modules: best.1, codelength: best.0, singleton_codelength, one_module_codelength }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visit_rates_are_stationary() {
        let edges = vec![(0, 1, 1.0), (1, 2, 2.0), (2, 0, 1.0), (2, 1, 0.5), (3, 0, 1.0)];
        let tau = 0.15;
        let p = visit_rates(4, &edges, tau);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut out_w = [0.0; 4];
        for &(u, _, w) in &edges {
            out_w[u] += w;
        }
        let mut next = [tau / 4.0; 4];
        for &(u, v, w) in &edges {
            next[v] += (1.0 - tau) * p[u] * w / out_w[u];
        }
        for k in 0..4 {
            assert!((next[k] - p[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn one_module_codelength_is_node_entropy() {
        let edges = vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)];
        let net = FlowNetwork::new(3, &edges, 0.15);
        let h: f64 = -net.node_flow.iter().map(|&p| plogp(p)).sum::<f64>();
        assert!((net.codelength(&[0, 0, 0]) - h).abs() < 1e-12);
    }

    #[test]
    fn disconnected_pairs_split() {
        let edges = vec![(0, 1, 5.0), (1, 0, 5.0), (2, 3, 5.0), (3, 2, 5.0)];
        let p = infomap(4, &edges, 0.15, 1, 5);
        assert_eq!(p.modules[0], p.modules[1]);
        assert_eq!(p.modules[2], p.modules[3]);
        assert_ne!(p.modules[0], p.modules[2]);
        assert!(p.codelength <= p.singleton_codelength);
    }

    #[test]
    fn incremental_deltas_track_the_full_formula() {
        let edges = vec![(0, 1, 2.0), (1, 2, 1.0), (2, 0, 3.0), (3, 4, 1.0), (4, 3, 2.0), (2, 3, 0.2), (4, 1, 0.3)];
        let net = FlowNetwork::new(5, &edges, 0.15);
        let level = Level::from_links(5, net.node_flow.clone(), net.links.iter().copied());
        let node_term: f64 = net.node_flow.iter().map(|&p| plogp(p)).sum();
        let mut opt = Optimizer::new(&level, node_term);
        let before = opt.codelength();
        opt.sweep(&[0, 1, 2, 3, 4]);
        let after = opt.codelength();
        assert!(after <= before);
        assert!((after - net.codelength(&opt.module)).abs() < 1e-10);
    }
}
