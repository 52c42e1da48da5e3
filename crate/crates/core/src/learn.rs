//! Per-line weighted l1-regularized logistic regression (pseudo-likelihood)
//! and the two-stage static model fit.
//!
//! Line `i` is modelled as `Pr(s_i = ±1 | s) = 1 / (1 + exp(∓2 H_i))` with
//! `H_i = h_i + Σ_{j≠i} J_ij s_j`. Stage 1 minimizes the negative mean
//! log-likelihood plus `λ Σ_j d_ij |J_ij|` by monotone accelerated proximal
//! gradient; couplings inside `(-δ_m, δ_p)` are then dropped and stage 2
//! refits the survivors without penalty by Newton's method.
//!
//! Internally the field is written over failure indicators `y_j = (1+s_j)/2`
//! as `H = a + 2 Σ_j J_ij y_j` with `a = h_i - Σ_j J_ij`. The couplings and
//! the penalty are unchanged, but each evaluation only touches failed lines
//! and the intercept decouples from the (mostly −1) spins.

use crate::cascade::{dedup_states, NetworkState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::EdgeDistanceMatrix;
use crate::model::{FitMeta, InteractionModel, ModelKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Field assigned to lines whose state never changes in the data.
pub const FIELD_CLAMP: f64 = 15.0;
/// Bound on refitted couplings; keeps separable rows finite.
pub const COUPLING_CAP: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub lambda: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
    /// Relative objective change that ends stage 1.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig { lambda: 1e-4, delta_minus: 0.1, delta_plus: 0.1, tol: 1e-8, max_iter: 10_000 }
    }
}

/// `prefactor * sqrt(ln(L^2 / ε) / M)`.
pub fn lambda_from_sample_size(m: usize, n_lines: usize, epsilon: f64, prefactor: f64) -> f64 {
    let l2 = (n_lines * n_lines) as f64;
    prefactor * ((l2 / epsilon).ln() / m as f64).sqrt()
}

/// Per-coupling penalty weights `d_ij`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    n: usize,
    w: Vec<f64>,
}

impl PenaltyWeights {
    pub fn uniform(n: usize) -> Self {
        PenaltyWeights { n, w: vec![1.0; n * n] }
    }

    pub fn from_distances(d: &EdgeDistanceMatrix) -> Self {
        let n = d.n_lines();
        let w = (0..n).flat_map(|i| d.row(i).iter().map(|&x| x as f64).collect::<Vec<_>>()).collect();
        PenaltyWeights { n, w }
    }

    pub fn n_lines(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }
}

/// Distinct input states with, per input, its multiplicity and how often
/// each line is failed in the corresponding target state.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n: usize,
    inputs: Vec<Vec<u32>>,
    counts: Vec<f64>,
    /// Sorted `(line, count)` pairs with nonzero failure counts.
    targets: Vec<Vec<(u32, f64)>>,
    /// Per line, the inputs in which it is failed.
    occurs: Vec<Vec<u32>>,
}

impl Samples {
    /// Static samples: each state is both input and target. Repeated
    /// states are grouped and weighted by multiplicity.
    pub fn from_states(states: &[NetworkState]) -> Self {
        let n = states.first().map_or(0, |s| s.len());
        let mut grouped: Vec<(&NetworkState, f64)> = Vec::new();
        let mut sorted: Vec<&NetworkState> = states.iter().collect();
        sorted.sort();
        for s in sorted {
            match grouped.last_mut() {
                Some((last, c)) if *last == s => *c += 1.0,
                _ => grouped.push((s, 1.0)),
            }
        }
        let inputs: Vec<Vec<u32>> =
            grouped.iter().map(|(s, _)| s.failed_indices().into_iter().map(|e| e as u32).collect()).collect();
        let counts: Vec<f64> = grouped.iter().map(|g| g.1).collect();
        let targets = inputs.iter().zip(&counts).map(|(f, &c)| f.iter().map(|&e| (e, c)).collect()).collect();
        Samples::assemble(n, inputs, counts, targets)
    }

    fn assemble(n: usize, inputs: Vec<Vec<u32>>, counts: Vec<f64>, targets: Vec<Vec<(u32, f64)>>) -> Self {
        let mut occurs = vec![Vec::new(); n];
        for (m, f) in inputs.iter().enumerate() {
            for &e in f {
                occurs[e as usize].push(m as u32);
            }
        }
        Samples { n, inputs, counts, targets, occurs }
    }

    /// Transition samples `(s(t), s(t+1))`, grouped by input state.
    pub fn from_transitions<'a>(n: usize, pairs: impl IntoIterator<Item = (&'a NetworkState, &'a NetworkState)>) -> Self {
        use std::collections::HashMap;
        let mut index: HashMap<&NetworkState, usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut counts = Vec::new();
        let mut tallies: Vec<HashMap<u32, f64>> = Vec::new();
        for (prev, next) in pairs {
            let k = *index.entry(prev).or_insert_with(|| {
                inputs.push(prev.failed_indices().into_iter().map(|e| e as u32).collect::<Vec<_>>());
                counts.push(0.0);
                tallies.push(HashMap::new());
                inputs.len() - 1
            });
            counts[k] += 1.0;
            for e in next.failed_indices() {
                *tallies[k].entry(e as u32).or_insert(0.0) += 1.0;
            }
        }
        let targets = tallies
            .into_iter()
            .map(|t| {
                let mut v: Vec<(u32, f64)> = t.into_iter().collect();
                v.sort_unstable_by_key(|p| p.0);
                v
            })
            .collect();
        Samples::assemble(n, inputs, counts, targets)
    }

    pub fn n_lines(&self) -> usize {
        self.n
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Regression problem for line `i`.
    pub fn line_problem<'a>(&'a self, i: usize, penalty: &'a [f64]) -> LineProblem<'a> {
        let mut w_plus = Vec::with_capacity(self.inputs.len());
        let mut w_minus = Vec::with_capacity(self.inputs.len());
        for (t, &c) in self.targets.iter().zip(&self.counts) {
            let p = t.binary_search_by_key(&(i as u32), |x| x.0).map_or(0.0, |k| t[k].1);
            w_plus.push(p);
            w_minus.push(c - p);
        }
        let total = self.total_weight();
        LineProblem { line: i, n: self.n, inputs: &self.inputs, occurs: &self.occurs, w_plus, w_minus, total, penalty }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One line's logistic regression over weighted samples. Parameters are
/// packed as `[a, J_0, ..., J_{n-1}]` with `J_line` pinned at zero.
pub struct LineProblem<'a> {
    line: usize,
    n: usize,
    inputs: &'a [Vec<u32>],
    occurs: &'a [Vec<u32>],
    w_plus: Vec<f64>,
    w_minus: Vec<f64>,
    total: f64,
    penalty: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    pub h: f64,
    /// Dense coupling row (zero at the line itself).
    pub row: Vec<f64>,
    pub support: Vec<usize>,
    pub degenerate: bool,
    /// Stage-1 penalized objective at its optimum.
    pub stage1_objective: f64,
    /// Stage-1 unpenalized loss of the thresholded stage-1 couplings.
    pub stage1_restricted_loss: f64,
    /// Stage-2 unpenalized loss (negative mean log-likelihood).
    pub stage2_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of the proximal stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub params: Vec<f64>,
    pub objective: f64,
    /// Penalized objective after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl<'a> LineProblem<'a> {
    pub fn n_params(&self) -> usize {
        self.n + 1
    }

    pub fn positive_weight(&self) -> f64 {
        self.w_plus.iter().sum()
    }

    pub fn negative_weight(&self) -> f64 {
        self.w_minus.iter().sum()
    }

    pub fn fields(&self, params: &[f64]) -> Vec<f64> {
        let a = params[0];
        let j = &params[1..];
        self.inputs
            .iter()
            .map(|f| {
                a + 2.0 * f.iter().filter(|&&e| e as usize != self.line).map(|&e| j[e as usize]).sum::<f64>()
            })
            .collect()
    }

    /// Negative mean log-likelihood given precomputed fields.
    pub fn loss_from_fields(&self, fields: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((&h, &wp), &wm) in fields.iter().zip(&self.w_plus).zip(&self.w_minus) {
            if wp > 0.0 {
                s += wp * softplus(-2.0 * h);
            }
            if wm > 0.0 {
                s += wm * softplus(2.0 * h);
            }
        }
        s / self.total
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.loss_from_fields(&self.fields(params))
    }

    fn residuals(&self, fields: &[f64]) -> Vec<f64> {
        fields
            .iter()
            .zip(&self.w_plus)
            .zip(&self.w_minus)
            .map(|((&h, &wp), &wm)| (-2.0 * wp * sigmoid(-2.0 * h) + 2.0 * wm * sigmoid(2.0 * h)) / self.total)
            .collect()
    }

    pub fn gradient_from_fields(&self, fields: &[f64]) -> Vec<f64> {
        let r = self.residuals(fields);
        let mut g = vec![0.0; self.n + 1];
        for (f, &rm) in self.inputs.iter().zip(&r) {
            g[0] += rm;
            for &e in f {
                g[1 + e as usize] += 2.0 * rm;
            }
        }
        g[1 + self.line] = 0.0;
        g
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.gradient_from_fields(&self.fields(params))
    }

    pub fn penalty(&self, params: &[f64], lambda: f64) -> f64 {
        lambda * params[1..].iter().zip(self.penalty).map(|(j, w)| (j * w).abs()).sum::<f64>()
    }

    /// Upper estimate of the largest eigenvalue of the design second-moment
    /// matrix, which bounds the Hessian of the loss.
    pub fn lipschitz_estimate(&self) -> f64 {
        let np = self.n + 1;
        let mut v = vec![1.0 / (np as f64).sqrt(); np];
        v[1 + self.line] = 0.0;
        let mut est = 1.0;
        for _ in 0..30 {
            let mut out = vec![0.0; np];
            for ((f, &wp), &wm) in self.inputs.iter().zip(&self.w_plus).zip(&self.w_minus) {
                let w = (wp + wm) / self.total;
                let z = v[0] + 2.0 * f.iter().filter(|&&e| e as usize != self.line).map(|&e| v[1 + e as usize]).sum::<f64>();
                out[0] += w * z;
                for &e in f {
                    if e as usize != self.line {
                        out[1 + e as usize] += 2.0 * w * z;
                    }
                }
            }
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            est = norm;
            v = out.into_iter().map(|x| x / norm).collect();
        }
        est * 1.1
    }

    /// Intercept-only optimum `a = atanh(<s_i>)`.
    pub fn intercept_only(&self) -> f64 {
        let (p, m) = (self.positive_weight(), self.negative_weight());
        (0.5 * (p / m).ln()).clamp(-FIELD_CLAMP, FIELD_CLAMP)
    }

    /// Soft-thresholding step on the couplings; the intercept is free.
    pub fn prox(&self, v: &mut [f64], step: f64, lambda: f64) {
        for (j, (x, w)) in v[1..].iter_mut().zip(self.penalty).enumerate() {
            if j == self.line {
                *x = 0.0;
                continue;
            }
            *x = soft_threshold(*x, step * lambda * w);
        }
    }

    /// Loss, per-input derivative `dloss/dH` and curvature `d²loss/dH²`
    /// in one pass.
    fn evaluate(&self, fields: &[f64], r: &mut [f64], c: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for (m, &h) in fields.iter().enumerate() {
            let (wp, wm) = (self.w_plus[m], self.w_minus[m]);
            let x = 2.0 * h;
            let e = (-x.abs()).exp();
            let l1p = e.ln_1p();
            // sp = softplus(-x), sm = softplus(x); pp = σ(x), pm = σ(-x)
            let (sp, sm, pp, pm) = if x >= 0.0 {
                (l1p, x + l1p, 1.0 / (1.0 + e), e / (1.0 + e))
            } else {
                (l1p - x, l1p, e / (1.0 + e), 1.0 / (1.0 + e))
            };
            loss += wp * sp + wm * sm;
            r[m] = 2.0 * (wm * pp - wp * pm) / self.total;
            c[m] = 4.0 * (wp + wm) * pp * pm / self.total;
        }
        loss / self.total
    }

    /// Proximal Newton: each outer step minimizes a quadratic model of the
    /// loss plus the weighted l1 penalty by cyclic coordinate descent, then
    /// backtracks along the step until the penalized objective decreases
    /// sufficiently. The objective is non-increasing across iterations.
    pub fn minimize_prox_newton(&self, lambda: f64, start: &[f64], tol: f64, max_iter: usize) -> ProxResult {
        let m = self.inputs.len();
        let mut theta = start.to_vec();
        theta[1 + self.line] = 0.0;
        let mut fields = self.fields(&theta);
        let (mut r, mut c) = (vec![0.0; m], vec![0.0; m]);
        let mut f = self.evaluate(&fields, &mut r, &mut c) + self.penalty(&theta, lambda);
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let features: Vec<usize> = (0..self.n).filter(|&j| j != self.line && !self.occurs[j].is_empty()).collect();
        let (mut r_new, mut c_new) = (vec![0.0; m], vec![0.0; m]);
        for _ in 0..max_iter {
            iterations += 1;
            // gradient and diagonal curvature of the quadratic model
            let g0: f64 = r.iter().sum();
            let a0: f64 = c.iter().sum();
            let mut g = vec![0.0; self.n];
            let mut a = vec![0.0; self.n];
            for &j in &features {
                for &k in &self.occurs[j] {
                    g[j] += 2.0 * r[k as usize];
                    a[j] += 4.0 * c[k as usize];
                }
            }
            // Coordinate descent on the quadratic model, with features
            // centered under the curvature weights so that the intercept
            // decouples. The field change is u_m = v_m + o, where v is the
            // sparse feature part and o the shared offset.
            let mut d = vec![0.0; self.n + 1];
            let mut v = vec![0.0; m];
            let mut o = 0.0;
            let mut cv = 0.0; // Σ c_m v_m
            let cx: Vec<f64> = (0..self.n).map(|j| a[j] / 2.0).collect(); // Σ_{m∋j} c_m x_mj
            let xbar: Vec<f64> = cx.iter().map(|&x| if a0 > 0.0 { x / a0 } else { 0.0 }).collect();
            let acen: Vec<f64> = (0..self.n).map(|j| a[j] - cx[j] * xbar[j]).collect();
            if a0 > 0.0 {
                o = -g0 / a0;
            }
            let mut full = true;
            for _ in 0..1000 {
                let mut biggest = 0.0f64;
                for &j in &features {
                    let cur = theta[1 + j] + d[1 + j];
                    if (!full && cur == 0.0) || acen[j] <= 1e-12 * a[j] {
                        continue;
                    }
                    let occ = &self.occurs[j];
                    let grad = g[j] - xbar[j] * g0 + 2.0 * occ.iter().map(|&k| c[k as usize] * v[k as usize]).sum::<f64>()
                        - xbar[j] * cv;
                    let new = soft_threshold(cur - grad / acen[j], lambda * self.penalty[j] / acen[j]);
                    let delta = new - cur;
                    if delta != 0.0 {
                        d[1 + j] += delta;
                        for &k in occ {
                            v[k as usize] += 2.0 * delta;
                        }
                        o -= delta * xbar[j];
                        cv += delta * cx[j];
                        biggest = biggest.max(acen[j] * delta * delta);
                    }
                }
                if biggest < 1e-10 * f.abs().max(1e-12) {
                    if full {
                        break;
                    }
                    full = true;
                } else {
                    full = false;
                }
            }
            d[0] = o;
            let u: Vec<f64> = v.iter().map(|x| x + o).collect();
            // predicted decrease of the penalized objective along d
            let lin: f64 = g0 * d[0] + (0..self.n).map(|j| g[j] * d[1 + j]).sum::<f64>();
            let mut trial: Vec<f64> = theta.iter().zip(&d).map(|(t, x)| t + x).collect();
            let pen_now = self.penalty(&theta, lambda);
            let model_decrease = lin + self.penalty(&trial, lambda) - pen_now;
            if model_decrease >= 0.0 {
                converged = true;
                trace.push(f);
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            let mut trial_fields = vec![0.0; m];
            while step > 1e-10 {
                for k in 0..=self.n {
                    trial[k] = theta[k] + step * d[k];
                }
                for k in 0..m {
                    trial_fields[k] = fields[k] + step * u[k];
                }
                let ft = self.evaluate(&trial_fields, &mut r_new, &mut c_new) + self.penalty(&trial, lambda);
                if ft <= f + 1e-4 * step * model_decrease {
                    accepted = Some(ft);
                    break;
                }
                step *= 0.5;
            }
            let Some(ft) = accepted else {
                converged = true;
                trace.push(f);
                break;
            };
            let decrease = f - ft;
            theta.clone_from(&trial);
            std::mem::swap(&mut fields, &mut trial_fields);
            std::mem::swap(&mut r, &mut r_new);
            std::mem::swap(&mut c, &mut c_new);
            f = ft;
            trace.push(f);
            if decrease <= tol * f.abs() {
                converged = true;
                break;
            }
        }
        ProxResult { params: theta, objective: f, trace, iterations, converged }
    }

    /// Monotone FISTA with backtracking and restart.
    pub fn minimize_penalized(&self, lambda: f64, start: &[f64], tol: f64, max_iter: usize) -> ProxResult {
        let np = self.n + 1;
        let mut x = start.to_vec();
        x[1 + self.line] = 0.0;
        let mut fx = self.loss(&x) + self.penalty(&x, lambda);
        let mut x_prev = x.clone();
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut lip = self.lipschitz_estimate();
        let mut trace = Vec::new();
        let mut converged = false;
        let mut stalled = 0;
        let mut iterations = 0;
        for _ in 0..max_iter {
            iterations += 1;
            let hy = self.fields(&y);
            let fy = self.loss_from_fields(&hy);
            let g = self.gradient_from_fields(&hy);
            let (z, fz) = loop {
                let mut z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b / lip).collect();
                self.prox(&mut z, 1.0 / lip, lambda);
                let fz = self.loss(&z);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for k in 0..np {
                    let d = z[k] - y[k];
                    lin += g[k] * d;
                    sq += d * d;
                }
                if fz <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() || lip > 1e12 {
                    break (z, fz);
                }
                lip *= 2.0;
            };
            let f_new = fz + self.penalty(&z, lambda);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if f_new <= fx {
                let decrease = fx - f_new;
                x_prev = std::mem::replace(&mut x, z.clone());
                fx = f_new;
                trace.push(fx);
                for k in 0..np {
                    y[k] = x[k] + ((t - 1.0) / t_next) * (x[k] - x_prev[k]);
                }
                t = t_next;
                stalled = 0;
                if decrease <= tol * fx.abs() {
                    converged = true;
                    break;
                }
            } else {
                // restart the momentum from the best point
                trace.push(fx);
                y.clone_from(&x);
                x_prev.clone_from(&x);
                t = 1.0;
                stalled += 1;
                if stalled > 3 {
                    converged = true;
                    break;
                }
            }
        }
        ProxResult { params: x, objective: fx, trace, iterations, converged }
    }

    /// Unpenalized Newton refit on the coordinates in `support`, started
    /// from `start`. Returns the parameters and the final loss.
    pub fn refit(&self, support: &[usize], start: &[f64]) -> (Vec<f64>, f64) {
        let k = support.len() + 1;
        let mut pos = vec![usize::MAX; self.n];
        for (p, &j) in support.iter().enumerate() {
            pos[j] = p + 1;
        }
        // Per-input positions of failed support lines.
        let active: Vec<Vec<usize>> = self
            .inputs
            .iter()
            .map(|f| f.iter().map(|&e| pos[e as usize]).filter(|&p| p != usize::MAX).collect())
            .collect();
        let mut theta = vec![0.0; k];
        theta[0] = start[0];
        for (p, &j) in support.iter().enumerate() {
            theta[p + 1] = start[1 + j];
        }
        let field = |th: &[f64], act: &[usize]| th[0] + 2.0 * act.iter().map(|&p| th[p]).sum::<f64>();
        let loss = |th: &[f64]| -> f64 {
            let mut s = 0.0;
            for ((act, &wp), &wm) in active.iter().zip(&self.w_plus).zip(&self.w_minus) {
                let h = field(th, act);
                s += wp * softplus(-2.0 * h) + wm * softplus(2.0 * h);
            }
            s / self.total
        };
        let mut f = loss(&theta);
        for _ in 0..200 {
            let mut g = vec![0.0; k];
            let mut hess = vec![0.0; k * k];
            for ((act, &wp), &wm) in active.iter().zip(&self.w_plus).zip(&self.w_minus) {
                let h = field(&theta, act);
                let (sp, sm) = (sigmoid(2.0 * h), sigmoid(-2.0 * h));
                let r = (-2.0 * wp * sm + 2.0 * wm * sp) / self.total;
                let c = 4.0 * (wp + wm) * sp * sm / self.total;
                g[0] += r;
                hess[0] += c;
                for (ia, &a) in act.iter().enumerate() {
                    g[a] += 2.0 * r;
                    hess[a] += 2.0 * c;
                    hess[a * k] += 2.0 * c;
                    hess[a * k + a] += 4.0 * c;
                    for &b in &act[ia + 1..] {
                        hess[a * k + b] += 4.0 * c;
                        hess[b * k + a] += 4.0 * c;
                    }
                }
            }
            let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if gmax < 1e-11 {
                break;
            }
            let mut dir: Vec<f64> = g.iter().map(|x| -x).collect();
            let mut ridge = 0.0;
            loop {
                let mut a = hess.clone();
                for d in 0..k {
                    a[d * k + d] += ridge;
                }
                let mut rhs = dir.clone();
                if linalg::solve_spd(&mut a, k, &mut rhs).is_ok() {
                    dir = rhs;
                    break;
                }
                ridge = if ridge == 0.0 { 1e-10 } else { ridge * 10.0 };
                if ridge > 1e3 {
                    break;
                }
            }
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-12 {
                let mut cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
                for c in &mut cand[1..] {
                    *c = c.clamp(-COUPLING_CAP, COUPLING_CAP);
                }
                let fc = loss(&cand);
                if fc <= f + 1e-4 * step * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((cand, fc)) => {
                    let done = f - fc <= 1e-16 * f.abs().max(1e-300);
                    theta = cand;
                    f = fc;
                    if done {
                        break;
                    }
                }
                None => break,
            }
        }
        let mut params = vec![0.0; self.n + 1];
        params[0] = theta[0];
        for (p, &j) in support.iter().enumerate() {
            params[1 + j] = theta[p + 1];
        }
        (params, f)
    }

    /// Converts packed parameters to `(h, row)`.
    pub fn unpack(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let row: Vec<f64> = params[1..].to_vec();
        let h = params[0] + row.iter().sum::<f64>();
        (h, row)
    }

    /// Full two-stage fit of this line.
    pub fn fit(&self, config: &LearnConfig) -> LineFit {
        let (p, m) = (self.positive_weight(), self.negative_weight());
        if p == 0.0 || m == 0.0 {
            let h = if p == 0.0 { -FIELD_CLAMP } else { FIELD_CLAMP };
            let mut params = vec![0.0; self.n + 1];
            params[0] = h;
            let loss = self.loss(&params);
            return LineFit {
                h,
                row: vec![0.0; self.n],
                support: Vec::new(),
                degenerate: true,
                stage1_objective: loss,
                stage1_restricted_loss: loss,
                stage2_loss: loss,
                iterations: 0,
                converged: true,
            };
        }
        let mut start = vec![0.0; self.n + 1];
        start[0] = self.intercept_only();
        let stage1 = self.minimize_prox_newton(config.lambda, &start, config.tol, config.max_iter);
        let support = threshold_support(&stage1.params[1..], config.delta_minus, config.delta_plus);
        let mut restricted = vec![0.0; self.n + 1];
        restricted[0] = stage1.params[0];
        for &j in &support {
            restricted[1 + j] = stage1.params[1 + j];
        }
        let restricted_loss = self.loss(&restricted);
        let (params, stage2_loss) = self.refit(&support, &restricted);
        let (h, row) = self.unpack(&params);
        LineFit {
            h,
            row,
            support,
            degenerate: false,
            stage1_objective: stage1.objective,
            stage1_restricted_loss: restricted_loss,
            stage2_loss,
            iterations: stage1.iterations,
            converged: stage1.converged,
        }
    }
}


pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Indices whose coupling is at least `delta_plus` or at most `-delta_minus`.
pub fn threshold_support(row: &[f64], delta_minus: f64, delta_plus: f64) -> Vec<usize> {
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v >= delta_plus || v <= -delta_minus)
        .map(|(j, _)| j)
        .collect()
}

/// Mean log pseudo-likelihood of line `i` over `states`, written directly
/// in spins.
pub fn line_log_likelihood(h_i: f64, row: &[f64], i: usize, inputs: &[NetworkState], targets: &[f64]) -> f64 {
    let m = inputs.len() as f64;
    inputs
        .iter()
        .zip(targets)
        .map(|(s, &y)| {
            let field = crate::model::local_field(h_i, row, i, s);
            -softplus(-2.0 * y * field)
        })
        .sum::<f64>()
        / m
}

/// Gradient of [`line_log_likelihood`] in `(h_i, row)`; the self entry is 0.
pub fn line_log_likelihood_gradient(h_i: f64, row: &[f64], i: usize, inputs: &[NetworkState], targets: &[f64]) -> (f64, Vec<f64>) {
    let m = inputs.len() as f64;
    let mut gh = 0.0;
    let mut gj = vec![0.0; row.len()];
    for (s, &y) in inputs.iter().zip(targets) {
        let field = crate::model::local_field(h_i, row, i, s);
        let r = y - field.tanh();
        gh += r;
        for (j, g) in gj.iter_mut().enumerate() {
            if j != i {
                *g += s.spin(j) * r;
            }
        }
    }
    (gh / m, gj.into_iter().map(|g| g / m).collect())
}

/// Fits one problem per line in parallel and assembles the model.
pub fn fit_samples(samples: &Samples, weights: &PenaltyWeights, config: &LearnConfig, kind: ModelKind) -> Result<(InteractionModel, Vec<LineFit>)> {
    let n = samples.n_lines();
    if weights.n_lines() != n {
        return Err(Error::Dimension { expected: n, found: weights.n_lines() });
    }
    if samples.n_inputs() == 0 {
        return Err(Error::InsufficientSamples("no samples to fit".into()));
    }
    if !(config.lambda >= 0.0) || !(config.delta_minus > 0.0) || !(config.delta_plus > 0.0) {
        return Err(Error::InvalidArgument("need λ ≥ 0 and δ_m, δ_p > 0".into()));
    }
    let fits: Vec<LineFit> = (0..n)
        .into_par_iter()
        .map(|i| samples.line_problem(i, weights.row(i)).fit(config))
        .collect();
    let mut model = InteractionModel::zeros(kind, n);
    for (i, f) in fits.iter().enumerate() {
        model.h[i] = f.h;
        for &j in &f.support {
            if f.row[j] != 0.0 {
                model.set_coupling(i, j, f.row[j]);
            }
        }
        model.support[i] = f.support.clone();
    }
    model.meta = FitMeta {
        lambda: config.lambda,
        delta_minus: config.delta_minus,
        delta_plus: config.delta_plus,
        dataset_hash: String::new(),
        n_samples: samples.n_inputs(),
        objective_stage1: fits.iter().map(|f| f.stage1_objective).sum(),
        objective_stage2: fits.iter().map(|f| f.stage2_loss).sum(),
        sparsity: model.sparsity(),
        degenerate_lines: fits.iter().enumerate().filter(|(_, f)| f.degenerate).map(|(i, _)| i).collect(),
    };
    Ok((model, fits))
}

#[derive(Debug, Clone)]
pub struct StaticFit {
    pub model: InteractionModel,
    pub lines: Vec<LineFit>,
}

/// Two-stage fit of the static model on the distinct steady states.
pub fn fit_static_model(states: &[NetworkState], weights: &PenaltyWeights, config: &LearnConfig) -> Result<StaticFit> {
    let samples = Samples::from_states(&dedup_states(states.iter().cloned()));
    let (model, lines) = fit_samples(&samples, weights, config, ModelKind::Static)?;
    for &i in &model.meta.degenerate_lines {
        log::warn!("line {i} has a constant state in the data; field clamped");
    }
    Ok(StaticFit { model, lines })
}

/// Model against data moments: `<s_i>` vs `<tanh H_i>` and
/// `<s_i s_j>` vs `<s_j tanh H_i>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// `(data, model)` per line.
    pub singles: Vec<(f64, f64)>,
    /// `(i, j, data, model)` for every ordered pair `i ≠ j`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
}

impl MomentReport {
    pub fn single_correlation(&self) -> f64 {
        let (a, b): (Vec<f64>, Vec<f64>) = self.singles.iter().copied().unzip();
        pearson_r(&a, &b)
    }

    pub fn pair_correlation(&self) -> f64 {
        let a: Vec<f64> = self.pairs.iter().map(|p| p.2).collect();
        let b: Vec<f64> = self.pairs.iter().map(|p| p.3).collect();
        pearson_r(&a, &b)
    }
}

pub(crate) fn pearson_r(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Lagged moments over input/target pairs: data `<y_i>`, `<s_j y_i>` and
/// model `<tanh H_i(s)>`, `<s_j tanh H_i(s)>`, all sample weighted.
pub fn moments_over(model: &InteractionModel, samples: &Samples) -> MomentReport {
    let n = model.n_lines();
    let total = samples.total_weight();
    // Work in indicators: <s_j x> = 2 <y_j x> - <x>.
    let mut data_single = vec![0.0; n];
    let mut model_single = vec![0.0; n];
    let mut data_pair = vec![0.0; n * n]; // [i * n + j] = sum y_j(input) * s_i(target)
    let mut model_pair = vec![0.0; n * n];
    let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| model.row_nonzeros(i)).collect();
    let mut spins_in = vec![-1.0; n];
    for ((f, &c), t) in samples.inputs.iter().zip(&samples.counts).zip(&samples.targets) {
        for &e in f {
            spins_in[e as usize] = 1.0;
        }
        // target sum of spins per line: 2 * count_plus - c
        let mut tgt = vec![-c; n];
        for &(e, k) in t {
            tgt[e as usize] += 2.0 * k;
        }
        let th: Vec<f64> = (0..n)
            .map(|i| (model.h[i] + rows[i].iter().map(|&(j, v)| v * spins_in[j]).sum::<f64>()).tanh() * c)
            .collect();
        for i in 0..n {
            data_single[i] += tgt[i];
            model_single[i] += th[i];
        }
        for &e in f {
            let j = e as usize;
            for i in 0..n {
                data_pair[i * n + j] += tgt[i];
                model_pair[i * n + j] += th[i];
            }
        }
        for &e in f {
            spins_in[e as usize] = -1.0;
        }
    }
    let singles = (0..n).map(|i| (data_single[i] / total, model_single[i] / total)).collect();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = (2.0 * data_pair[i * n + j] - data_single[i]) / total;
                let m = (2.0 * model_pair[i * n + j] - model_single[i]) / total;
                pairs.push((i, j, d, m));
            }
        }
    }
    MomentReport { singles, pairs }
}

/// Goodness-of-fit moments over the distinct states.
pub fn moment_report(model: &InteractionModel, states: &[NetworkState]) -> Result<MomentReport> {
    if model.kind != ModelKind::Static {
        return Err(Error::InvalidArgument("moment_report expects a static model".into()));
    }
    Ok(moments_over(model, &Samples::from_states(&dedup_states(states.iter().cloned()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_matches_scalar_minimizer() {
        // argmin_x 0.5 (x - v)^2 + t |x| by dense search
        for &(v, t) in &[(1.0, 0.3), (-0.2, 0.5), (0.4, 0.4), (-2.0, 0.1)] {
            let mut best = (f64::INFINITY, 0.0);
            for k in -40000..=40000 {
                let x = k as f64 * 1e-4;
                let obj = 0.5 * (x - v) * (x - v) + t * x.abs();
                if obj < best.0 {
                    best = (obj, x);
                }
            }
            assert!((soft_threshold(v, t) - best.1).abs() < 2e-4, "v={v} t={t}");
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_support(&[0.15, -0.05, -0.2], 0.1, 0.1), vec![0, 2]);
        assert!(threshold_support(&[0.05, -0.09, 0.0], 0.1, 0.1).is_empty());
    }

    #[test]
    fn lambda_rule() {
        let a = lambda_from_sample_size(1000, 10, 0.01, 1.0);
        assert!((a - ((100.0f64 / 0.01).ln() / 1000.0).sqrt()).abs() < 1e-15);
        let b = lambda_from_sample_size(2000, 10, 0.01, 1.0);
        assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
    }

    fn toy_states() -> Vec<NetworkState> {
        vec![
            NetworkState::from_failed(3, &[0, 1]),
            NetworkState::from_failed(3, &[0]),
            NetworkState::from_failed(3, &[1, 2]),
            NetworkState::from_failed(3, &[2]),
            NetworkState::from_failed(3, &[]),
            NetworkState::from_failed(3, &[0, 1, 2]),
        ]
    }

    #[test]
    fn huge_lambda_gives_intercept_only() {
        let states = toy_states();
        let samples = Samples::from_states(&states);
        let w = PenaltyWeights::uniform(3);
        let cfg = LearnConfig { lambda: 1e3, ..LearnConfig::default() };
        let fit = samples.line_problem(0, w.row(0)).fit(&cfg);
        assert!(fit.support.is_empty());
        assert!(fit.row.iter().all(|&v| v == 0.0));
        let mean: f64 = states.iter().map(|s| s.spin(0)).sum::<f64>() / states.len() as f64;
        assert!((fit.h - mean.atanh()).abs() < 1e-9);
    }

    #[test]
    fn degenerate_line_is_clamped() {
        let states = vec![NetworkState::from_failed(2, &[0]), NetworkState::from_failed(2, &[])];
        let fit = fit_static_model(&states, &PenaltyWeights::uniform(2), &LearnConfig::default()).unwrap();
        assert_eq!(fit.model.h[1], -FIELD_CLAMP);
        assert_eq!(fit.model.meta.degenerate_lines, vec![1]);
    }

    #[test]
    fn intercept_only_refit_matches_mean() {
        let states = toy_states();
        let samples = Samples::from_states(&states);
        let w = PenaltyWeights::uniform(3);
        let p = samples.line_problem(1, w.row(1));
        let (params, _) = p.refit(&[], &[0.0; 4]);
        let (h, _) = p.unpack(&params);
        let mean: f64 = states.iter().map(|s| s.spin(1)).sum::<f64>() / states.len() as f64;
        assert!((h.tanh() - mean).abs() < 1e-6);
    }

    #[test]
    fn sparse_and_dense_losses_agree() {
        let states = toy_states();
        let samples = Samples::from_states(&states);
        let w = PenaltyWeights::uniform(3);
        let p = samples.line_problem(2, w.row(2));
        let params = vec![0.3, -0.4, 0.9, 0.0];
        let (h, row) = p.unpack(&params);
        let targets: Vec<f64> = states.iter().map(|s| s.spin(2)).collect();
        let ll = line_log_likelihood(h, &row, 2, &states, &targets);
        assert!((p.loss(&params) + ll).abs() < 1e-14);
    }
}
