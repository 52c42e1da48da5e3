//! Run configuration: every experiment constant, with validated ranges.

use crate::InvalidConfig;
use anyhow::Result;
use cascade_lab::cascade::Variant;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Regularization strength: fixed, or from the sample-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    /// The per-variant default.
    Default,
    Fixed(f64),
    /// `sqrt(ln(L^2 / ε) / M)` with `M` the number of distinct samples.
    Auto,
}

impl std::str::FromStr for Lambda {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "default" => Ok(Lambda::Default),
            "auto" => Ok(Lambda::Auto),
            v => v.parse().map(Lambda::Fixed).map_err(|_| format!("expected a number, `auto` or `default`, got {v:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Case file; `None` uses the bundled IEEE 118-bus case.
    pub grid: Option<PathBuf>,
    /// Seeding probability; `None` means `2.5 / L`.
    pub p_f: Option<f64>,
    pub m_target: usize,
    pub variant: Variant,
    pub lambda: Lambda,
    pub epsilon: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
    /// Glauber warm-up and stride, in single-spin updates per line.
    pub warmup_per_line: usize,
    pub stride_per_line: usize,
    /// Glauber samples; `None` matches the number of distinct data states.
    pub n_samples: Option<usize>,
    pub chains: usize,
    pub teleport: f64,
    pub n_null: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: None,
            p_f: None,
            m_target: 20_000,
            variant: Variant::D1,
            lambda: Lambda::Default,
            epsilon: 0.01,
            delta_minus: 0.1,
            delta_plus: 0.1,
            warmup_per_line: 1000,
            stride_per_line: 20,
            n_samples: None,
            chains: 1,
            teleport: 0.15,
            n_null: 200,
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

pub fn default_lambda(variant: Variant) -> f64 {
    match variant {
        Variant::D1 => 1e-4,
        Variant::D2 => 5e-4,
    }
}

impl RunConfig {
    /// Reads a configuration file: either a bare config or a run manifest,
    /// whose `config` field is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::read_input(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?;
        let inner = value.get("config").cloned().unwrap_or(value);
        serde_json::from_value(inner).map_err(|e| InvalidConfig(format!("{}: {e}", path.display())).into())
    }

    pub fn p_f_for(&self, n_lines: usize) -> f64 {
        self.p_f.unwrap_or(2.5 / n_lines as f64)
    }

    /// Resolved λ for `variant` given `m` distinct samples over `n_lines`.
    pub fn lambda_for(&self, variant: Variant, m: usize, n_lines: usize) -> f64 {
        match self.lambda {
            Lambda::Default => default_lambda(variant),
            Lambda::Fixed(v) => v,
            Lambda::Auto => cascade_lab::learn::lambda_from_sample_size(m.max(1), n_lines, self.epsilon, 1.0),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), InvalidConfig> {
        let bad = |what: &str| Err(InvalidConfig(what.to_string()));
        if let Some(p) = self.p_f {
            if !(p > 0.0 && p < 1.0) {
                return bad("p_f must lie in (0, 1)");
            }
        }
        if self.m_target == 0 {
            return bad("m_target must be at least 1");
        }
        if let Lambda::Fixed(v) = self.lambda {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("lambda must be a finite number ≥ 0");
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.delta_minus > 0.0 && self.delta_plus > 0.0) || !self.delta_minus.is_finite() || !self.delta_plus.is_finite() {
            return bad("delta thresholds must be positive");
        }
        if self.stride_per_line == 0 || self.chains == 0 {
            return bad("stride and chains must be at least 1");
        }
        if !(self.teleport > 0.0 && self.teleport < 1.0) {
            return bad("teleport must lie in (0, 1)");
        }
        if self.n_null == 0 {
            return bad("n_null must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_frozen_table() {
        let c = RunConfig::default();
        let table = serde_json::json!({
            "grid": null,
            "p_f": null,
            "m_target": 20000,
            "variant": "D1",
            "lambda": "default",
            "epsilon": 0.01,
            "delta_minus": 0.1,
            "delta_plus": 0.1,
            "warmup_per_line": 1000,
            "stride_per_line": 20,
            "n_samples": null,
            "chains": 1,
            "teleport": 0.15,
            "n_null": 200,
            "seed": 1,
            "out": "out",
        });
        assert_eq!(serde_json::to_value(&c).unwrap(), table);
        assert_eq!(c.p_f_for(179), 2.5 / 179.0);
        assert_eq!(default_lambda(Variant::D1), 1e-4);
        assert_eq!(default_lambda(Variant::D2), 5e-4);
        assert_eq!(c.lambda_for(Variant::D2, 100, 179), 5e-4);
        let auto = RunConfig { lambda: Lambda::Auto, ..RunConfig::default() };
        assert_eq!(auto.lambda_for(Variant::D1, 4000, 179), cascade_lab::learn::lambda_from_sample_size(4000, 179, 0.01, 1.0));
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!("auto".parse::<Lambda>().unwrap(), Lambda::Auto);
        assert_eq!("5e-4".parse::<Lambda>().unwrap(), Lambda::Fixed(5e-4));
        assert!("x".parse::<Lambda>().is_err());
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        assert!(RunConfig::default().validate().is_ok());
        for c in [
            RunConfig { p_f: Some(1.0), ..RunConfig::default() },
            RunConfig { m_target: 0, ..RunConfig::default() },
            RunConfig { lambda: Lambda::Fixed(-1.0), ..RunConfig::default() },
            RunConfig { teleport: 0.0, ..RunConfig::default() },
            RunConfig { n_null: 0, ..RunConfig::default() },
            RunConfig { delta_plus: 0.0, ..RunConfig::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
