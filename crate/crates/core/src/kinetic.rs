//! Kinetic (time-lagged) model: every line at step `t+1` is conditionally
//! independent given the full state at step `t`. The joint likelihood is a
//! sum over lines, so each row is fitted separately with the same solver as
//! the static model.

use crate::cascade::{NetworkState, Trajectory};
use crate::error::{Error, Result};
use crate::learn::{fit_samples, moments_over, LearnConfig, LineFit, MomentReport, PenaltyWeights, Samples};
use crate::model::{local_field, InteractionModel, ModelKind};

/// Consecutive state pair of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample<'a> {
    pub prev: &'a NetworkState,
    pub next: &'a NetworkState,
}

/// All transitions of the given trajectories, including one repetition of
/// each terminal state (the fixed point maps to itself).
pub fn transitions(trajectories: &[Trajectory]) -> Vec<TransitionSample<'_>> {
    let mut out = Vec::new();
    for t in trajectories {
        for w in t.states.windows(2) {
            out.push(TransitionSample { prev: &w[0], next: &w[1] });
        }
        let last = t.final_state();
        out.push(TransitionSample { prev: last, next: last });
    }
    out
}

fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Mean over transitions of `Σ_i ln Pr(s_i(t+1) | s(t))`. `j` is dense
/// row-major.
pub fn kinetic_log_likelihood(h: &[f64], j: &[f64], samples: &[TransitionSample<'_>]) -> f64 {
    let n = h.len();
    let mut total = 0.0;
    for s in samples {
        for i in 0..n {
            let f = local_field(h[i], &j[i * n..(i + 1) * n], i, s.prev);
            total += log_sigmoid(2.0 * s.next.spin(i) * f);
        }
    }
    total / samples.len() as f64
}

/// Gradient of [`kinetic_log_likelihood`]; the diagonal of the coupling
/// gradient is zero.
pub fn kinetic_gradient(h: &[f64], j: &[f64], samples: &[TransitionSample<'_>]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let mut gh = vec![0.0; n];
    let mut gj = vec![0.0; n * n];
    for s in samples {
        for i in 0..n {
            let f = local_field(h[i], &j[i * n..(i + 1) * n], i, s.prev);
            let r = s.next.spin(i) - f.tanh();
            gh[i] += r;
            for k in 0..n {
                if k != i {
                    gj[i * n + k] += r * s.prev.spin(k);
                }
            }
        }
    }
    let m = samples.len() as f64;
    gh.iter_mut().chain(gj.iter_mut()).for_each(|g| *g /= m);
    (gh, gj)
}

fn grouped(trajectories: &[Trajectory]) -> Result<Samples> {
    let n = trajectories
        .first()
        .map(|t| t.n_lines())
        .ok_or_else(|| Error::InsufficientSamples("no trajectories".into()))?;
    let tr = transitions(trajectories);
    Ok(Samples::from_transitions(n, tr.iter().map(|s| (s.prev, s.next))))
}

#[derive(Debug, Clone)]
pub struct KineticFit {
    pub model: InteractionModel,
    pub lines: Vec<LineFit>,
    pub n_transitions: usize,
}

/// Two-stage fit of the kinetic model on all transitions.
pub fn fit_kinetic_model(trajectories: &[Trajectory], weights: &PenaltyWeights, config: &LearnConfig) -> Result<KineticFit> {
    let samples = grouped(trajectories)?;
    let n_transitions = samples.total_weight() as usize;
    let (mut model, lines) = fit_samples(&samples, weights, config, ModelKind::Kinetic)?;
    model.meta.n_samples = n_transitions;
    Ok(KineticFit { model, lines, n_transitions })
}

/// Lagged moments: `<s_i(t+1)>` vs `<tanh H_i(s(t))>` and
/// `<s_j(t) s_i(t+1)>` vs `<s_j(t) tanh H_i(s(t))>`.
pub fn kinetic_moment_report(model: &InteractionModel, trajectories: &[Trajectory]) -> Result<MomentReport> {
    if model.kind != ModelKind::Kinetic {
        return Err(Error::InvalidArgument("kinetic_moment_report expects a kinetic model".into()));
    }
    Ok(moments_over(model, &grouped(trajectories)?))
}
