//! Pairwise interaction models `(h, J)` and their file format.

use crate::cascade::NetworkState;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Static,
    Kinetic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitMeta {
    pub lambda: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub dataset_hash: String,
    pub n_samples: usize,
    /// Penalized objective after stage 1, summed over lines.
    pub objective_stage1: f64,
    /// Unpenalized negative log-likelihood after stage 2, summed over lines.
    pub objective_stage2: f64,
    pub sparsity: f64,
    /// Lines whose target never changed in the data.
    pub degenerate_lines: Vec<usize>,
}

/// Local fields `h` and couplings `J` (row `i` holds the influence of every
/// line on line `i`; the diagonal is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModel {
    pub kind: ModelKind,
    n: usize,
    pub h: Vec<f64>,
    j: Vec<f64>,
    pub support: Vec<Vec<usize>>,
    pub meta: FitMeta,
}

/// `H_i = h_i + Σ_{j≠i} J_ij s_j`, with `row` the i-th coupling row.
pub fn local_field(h_i: f64, row: &[f64], i: usize, state: &NetworkState) -> f64 {
    debug_assert_eq!(row[i], 0.0);
    h_i + row
        .iter()
        .enumerate()
        .filter(|&(j, &v)| j != i && v != 0.0)
        .map(|(j, &v)| v * state.spin(j))
        .sum::<f64>()
}

/// Probability that a spin with local field `field` is +1: `1/(1+e^{-2H})`.
pub fn failure_probability(field: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * field).exp())
}

impl InteractionModel {
    pub fn zeros(kind: ModelKind, n: usize) -> Self {
        InteractionModel {
            kind,
            n,
            h: vec![0.0; n],
            j: vec![0.0; n * n],
            support: vec![Vec::new(); n],
            meta: FitMeta::default(),
        }
    }

    /// Builds a model from dense parts; the support is every structural
    /// nonzero.
    pub fn from_dense(kind: ModelKind, h: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        let n = h.len();
        if j.len() != n * n {
            return Err(Error::Dimension { expected: n * n, found: j.len() });
        }
        if (0..n).any(|i| j[i * n + i] != 0.0) {
            return Err(Error::InvalidArgument("couplings must have a zero diagonal".into()));
        }
        let support = (0..n)
            .map(|i| (0..n).filter(|&k| j[i * n + k] != 0.0).collect())
            .collect();
        Ok(InteractionModel { kind, n, h, j, support, meta: FitMeta::default() })
    }

    pub fn n_lines(&self) -> usize {
        self.n
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.j[i * self.n + j]
    }

    /// Sets `J_ij`; a nonzero value also enters the support of row `i`.
    pub fn set_coupling(&mut self, i: usize, j: usize, v: f64) {
        assert_ne!(i, j, "self-coupling is not allowed");
        self.j[i * self.n + j] = v;
        if v != 0.0 {
            if let Err(pos) = self.support[i].binary_search(&j) {
                self.support[i].insert(pos, j);
            }
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.j[i * self.n..(i + 1) * self.n]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.j
    }

    /// Nonzero couplings of row `i` as `(j, J_ij)`.
    pub fn row_nonzeros(&self, i: usize) -> Vec<(usize, f64)> {
        self.row(i).iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(k, &v)| (k, v)).collect()
    }

    pub fn n_nonzero(&self) -> usize {
        self.j.iter().filter(|&&v| v != 0.0).count()
    }

    /// Nonzero couplings over the `L(L-1)` off-diagonal entries.
    pub fn sparsity(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.n_nonzero() as f64 / (self.n * (self.n - 1)) as f64
    }

    pub fn local_field(&self, i: usize, state: &NetworkState) -> f64 {
        local_field(self.h[i], self.row(i), i, state)
    }

    /// Probability that line `i` is failed given the other lines' states.
    pub fn failure_probability(&self, i: usize, state: &NetworkState) -> f64 {
        failure_probability(self.local_field(i, state))
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &ModelFile::from(self))?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let f: ModelFile = serde_json::from_reader(r)?;
        f.try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        f.try_into()
    }
}

/// Largest line count accepted when reading model files.
pub const MAX_MODEL_LINES: usize = 4096;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: ModelKind,
    #[serde(rename = "L")]
    n_lines: usize,
    h: Vec<f64>,
    /// `(i, j, J_ij)` triplets, row-major.
    #[serde(rename = "J")]
    j: Vec<(usize, usize, f64)>,
    support: Vec<Vec<usize>>,
    fit_meta: FitMeta,
}

impl From<&InteractionModel> for ModelFile {
    fn from(m: &InteractionModel) -> Self {
        let j = (0..m.n)
            .flat_map(|i| m.row_nonzeros(i).into_iter().map(move |(k, v)| (i, k, v)))
            .collect();
        ModelFile { kind: m.kind, n_lines: m.n, h: m.h.clone(), j, support: m.support.clone(), fit_meta: m.meta.clone() }
    }
}

impl TryFrom<ModelFile> for InteractionModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let n = f.n_lines;
        if n > MAX_MODEL_LINES {
            return Err(Error::Format(format!("model with {n} lines exceeds {MAX_MODEL_LINES}")));
        }
        if f.h.len() != n {
            return Err(Error::Dimension { expected: n, found: f.h.len() });
        }
        if f.support.len() != n {
            return Err(Error::Dimension { expected: n, found: f.support.len() });
        }
        let mut j = vec![0.0; n.checked_mul(n).ok_or_else(|| Error::Format("model too large".into()))?];
        for &(a, b, v) in &f.j {
            if a >= n || b >= n {
                return Err(Error::Format(format!("coupling ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Format(format!("self-coupling on line {a}")));
            }
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite coupling ({a}, {b})")));
            }
            if v != 0.0 && !f.support.get(a).is_some_and(|s| s.contains(&b)) {
                return Err(Error::Format(format!("coupling ({a}, {b}) outside the support of line {a}")));
            }
            j[a * n + b] = v;
        }
        for (i, s) in f.support.iter().enumerate() {
            if s.iter().any(|&k| k >= n || k == i) {
                return Err(Error::Format(format!("invalid support for line {i}")));
            }
        }
        if f.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite field".into()));
        }
        Ok(InteractionModel { kind: f.kind, n, h: f.h, j, support: f.support, meta: f.fit_meta })
    }
}
