//! Single-spin Glauber dynamics on a static model, and cascade-size
//! statistics of the resulting (or simulated) steady states.

use crate::cascade::{cascade_size, NetworkState};
use crate::error::{Error, Result};
use crate::model::{failure_probability, InteractionModel, ModelKind};
use crate::rng::{stream, SeedDomain};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Single-spin updates discarded before the first sample.
    pub warmup: usize,
    /// Single-spin updates between consecutive samples.
    pub stride: usize,
    pub n_samples: usize,
    /// Independent chains; samples are split evenly across them.
    pub chains: usize,
    pub seed: u64,
}

impl SamplerConfig {
    /// Warm-up of `10^3 L` and stride of `20 L` updates.
    pub fn for_lines(n_lines: usize, n_samples: usize, seed: u64) -> Self {
        SamplerConfig { warmup: 1000 * n_lines, stride: 20 * n_lines, n_samples, chains: 1, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.chains == 0 {
            return Err(Error::InvalidArgument("stride and chains must be at least 1".into()));
        }
        Ok(())
    }
}

/// Live chain state with cached local fields, so one update costs
/// `O(out-degree)` instead of `O(L)`.
struct Chain<'m> {
    model: &'m InteractionModel,
    /// `cols[j]` lists `(i, J_ij)`: fields that change when `s_j` flips.
    cols: Vec<Vec<(usize, f64)>>,
    spins: Vec<f64>,
    fields: Vec<f64>,
}

impl<'m> Chain<'m> {
    fn new(model: &'m InteractionModel, spins: Vec<f64>) -> Self {
        let n = model.n_lines();
        let mut cols = vec![Vec::new(); n];
        for i in 0..n {
            for (j, v) in model.row_nonzeros(i) {
                cols[j].push((i, v));
            }
        }
        let fields = (0..n)
            .map(|i| model.h[i] + model.row_nonzeros(i).iter().map(|&(j, v)| v * spins[j]).sum::<f64>())
            .collect();
        Chain { model, cols, spins, fields }
    }

    fn update<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let new = if rng.gen::<f64>() < failure_probability(self.fields[i]) { 1.0 } else { -1.0 };
        if new != self.spins[i] {
            let delta = new - self.spins[i];
            for &(k, v) in &self.cols[i] {
                self.fields[k] += v * delta;
            }
            self.spins[i] = new;
        }
        debug_assert!(self.model.n_lines() == self.spins.len());
    }

    fn state(&self) -> NetworkState {
        NetworkState::from_mask(self.spins.iter().map(|&s| s > 0.0).collect())
    }
}

/// Resamples coordinate `i` from `Pr(s_i = +1) = 1 / (1 + e^{-2 H_i})`.
pub fn glauber_update<R: Rng + ?Sized>(model: &InteractionModel, state: &NetworkState, i: usize, rng: &mut R) -> NetworkState {
    let p = model.failure_probability(i, state);
    let mut out = state.clone();
    out.set_failed(i, rng.gen::<f64>() < p);
    out
}

fn run_chain(model: &InteractionModel, config: &SamplerConfig, chain: usize, n_samples: usize) -> Vec<NetworkState> {
    let n = model.n_lines();
    let mut rng = stream(config.seed, SeedDomain::Sampling, chain as u64);
    let spins: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut c = Chain::new(model, spins);
    for _ in 0..config.warmup {
        let i = rng.gen_range(0..n);
        c.update(i, &mut rng);
    }
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..config.stride {
            let i = rng.gen_range(0..n);
            c.update(i, &mut rng);
        }
        out.push(c.state());
    }
    out
}

/// Draws `n_samples` states by Glauber dynamics from uniform random starts.
/// Chains are independent and their outputs are concatenated in chain order.
pub fn sample_steady_states(model: &InteractionModel, config: &SamplerConfig) -> Result<Vec<NetworkState>> {
    if model.kind != ModelKind::Static {
        return Err(Error::InvalidArgument("Glauber sampling needs a static model".into()));
    }
    config.validate()?;
    if config.n_samples == 0 || model.n_lines() == 0 {
        return Ok(Vec::new());
    }
    let per = config.n_samples / config.chains;
    let extra = config.n_samples % config.chains;
    let chunks: Vec<Vec<NetworkState>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, c, per + usize::from(c < extra)))
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSizeStats {
    pub z_max: usize,
    /// `Pr(Z ≤ z)` for `z = 0..=z_max`.
    pub cdf: Vec<f64>,
    pub bin_width: f64,
    /// Fraction of samples with `floor(Z / bin_width) = k`.
    pub pdf: Vec<f64>,
}

impl CascadeSizeStats {
    /// `log10(max / min)` over the nonzero binned densities.
    pub fn span_decades(&self) -> f64 {
        let nz: Vec<f64> = self.pdf.iter().copied().filter(|&p| p > 0.0).collect();
        if nz.is_empty() {
            return 0.0;
        }
        let max = nz.iter().cloned().fold(f64::MIN, f64::max);
        let min = nz.iter().cloned().fold(f64::MAX, f64::min);
        (max / min).log10()
    }
}

/// CDF and binned density of cascade sizes. `reference_max` sets the bin
/// width `Δz = reference_max / 20` (the data maximum, so model samples
/// can be binned alike); `None` uses the maximum of `states`.
pub fn cascade_size_stats(states: &[NetworkState], reference_max: Option<usize>) -> Result<CascadeSizeStats> {
    if states.is_empty() {
        return Err(Error::InsufficientSamples("no states for cascade-size statistics".into()));
    }
    let sizes: Vec<usize> = states.iter().map(cascade_size).collect();
    Ok(size_stats(&sizes, reference_max))
}

pub fn size_stats(sizes: &[usize], reference_max: Option<usize>) -> CascadeSizeStats {
    let z_max = sizes.iter().copied().max().unwrap_or(0);
    let m = sizes.len() as f64;
    let mut counts = vec![0usize; z_max + 1];
    for &z in sizes {
        counts[z] += 1;
    }
    let mut acc = 0usize;
    let mut cdf: Vec<f64> = counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / m
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    let bin_width = (reference_max.unwrap_or(z_max).max(1) as f64 / 20.0).max(f64::MIN_POSITIVE);
    let n_bins = (z_max as f64 / bin_width).floor() as usize + 1;
    let mut pdf = vec![0.0; n_bins];
    for &z in sizes {
        pdf[(z as f64 / bin_width).floor() as usize] += 1.0 / m;
    }
    CascadeSizeStats { z_max, cdf, bin_width, pdf }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_changes_only_the_target() {
        let model = InteractionModel::from_dense(ModelKind::Static, vec![15.0, 0.0, 0.0], vec![0.0; 9]).unwrap();
        let mut rng = stream(1, SeedDomain::Sampling, 0);
        let s = NetworkState::from_failed(3, &[2]);
        let out = glauber_update(&model, &s, 0, &mut rng);
        assert!(out.is_failed(0));
        assert!(!out.is_failed(1) && out.is_failed(2));
    }

    #[test]
    fn cached_fields_match_direct_evaluation() {
        let h = vec![0.1, -0.3, 0.2];
        let j = vec![0.0, 0.5, -0.4, 0.3, 0.0, 0.2, -0.1, 0.7, 0.0];
        let model = InteractionModel::from_dense(ModelKind::Static, h, j).unwrap();
        let mut rng = stream(3, SeedDomain::Sampling, 0);
        let mut c = Chain::new(&model, vec![1.0, -1.0, 1.0]);
        for _ in 0..1000 {
            let i = rng.gen_range(0..3);
            c.update(i, &mut rng);
        }
        let s = c.state();
        for i in 0..3 {
            assert!((c.fields[i] - model.local_field(i, &s)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_sizes_give_a_step_cdf() {
        let states = vec![NetworkState::from_failed(8, &[0, 1, 2, 3, 4]); 7];
        let st = cascade_size_stats(&states, None).unwrap();
        assert_eq!(st.cdf[4], 0.0);
        assert_eq!(st.cdf[5], 1.0);
        assert!((st.pdf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_samples_requested() {
        let model = InteractionModel::zeros(ModelKind::Static, 4);
        let cfg = SamplerConfig::for_lines(4, 0, 1);
        assert!(sample_steady_states(&model, &cfg).unwrap().is_empty());
    }

    #[test]
    fn kinetic_model_rejected() {
        let model = InteractionModel::zeros(ModelKind::Kinetic, 4);
        assert!(sample_steady_states(&model, &SamplerConfig::for_lines(4, 3, 1)).is_err());
    }
}
