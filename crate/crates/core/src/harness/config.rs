//! Experiment configuration files (TOML).
//!
//! ```toml
//! [model]
//! k = 1
//! p = [1.0]
//! lambda = [[3.0]]
//! mu = [[1.0]]
//! beta = [[1.0]]
//! gamma = [1.0]
//! kappa_lambda = [[-1.0]]
//! kappa_mu = [[0.0]]
//! kappa_beta = [[0.0]]
//!
//! [experiment]
//! n_list = [1000, 10000]
//! runs_per_n = 200
//! master_seed = 7
//! window = [-2.0, 8.0]
//! grid_step = 0.01
//! ```
//!
//! Matrices may be nested row lists, flat row-major lists of length `k^2`,
//! or a single number for `k = 1`.

use std::path::Path;

use serde::Deserialize;

use crate::params::ModelSpec;
use crate::sim::ModelTag;
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Scalar(f64),
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl MatrixInput {
    fn into_rows(self, k: usize, name: &str) -> Result<Vec<Vec<f64>>> {
        let rows = match self {
            MatrixInput::Scalar(x) if k == 1 => vec![vec![x]],
            MatrixInput::Flat(v) if v.len() == k * k => v.chunks(k).map(<[f64]>::to_vec).collect(),
            MatrixInput::Nested(rows) if rows.len() == k && rows.iter().all(|r| r.len() == k) => rows,
            _ => return Err(Error::Config(format!("`{name}` must be a {k}x{k} matrix"))),
        };
        Ok(rows)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum VectorInput {
    Scalar(f64),
    List(Vec<f64>),
}

impl VectorInput {
    fn into_vec(self, k: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            VectorInput::Scalar(x) if k == 1 => Ok(vec![x]),
            VectorInput::List(v) if v.len() == k => Ok(v),
            _ => Err(Error::Config(format!("`{name}` must have {k} entries"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    k: usize,
    p: Option<VectorInput>,
    lambda: MatrixInput,
    mu: MatrixInput,
    beta: MatrixInput,
    gamma: VectorInput,
    kappa_lambda: MatrixInput,
    kappa_mu: MatrixInput,
    kappa_beta: MatrixInput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    n_list: Option<Vec<u64>>,
    runs_per_n: Option<u64>,
    master_seed: Option<u64>,
    threshold_exponent: Option<f64>,
    pin_level: Option<f64>,
    window: Option<[f64; 2]>,
    grid_step: Option<f64>,
    model: Option<ModelTag>,
    seed_type: Option<usize>,
    max_restarts: Option<u64>,
    limit: Option<LimitSystem>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: ModelSection,
    #[serde(default)]
    experiment: ExperimentSection,
}

/// Which deterministic system the simulations are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitSystem {
    /// Weak ODE if every pair is homogeneous, strong if none is, mixed
    /// otherwise; the renewal solver when some kernel has no ODE form.
    Auto,
    Weak,
    Strong,
    Mixed,
    Renewal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub n_list: Vec<u64>,
    pub runs_per_n: u64,
    pub master_seed: u64,
    pub threshold_exponent: f64,
    pub pin_level: f64,
    pub window: (f64, f64),
    pub grid_step: f64,
    pub model: ModelTag,
    /// Zero-based.
    pub seed_type: usize,
    pub max_restarts: u64,
    pub limit: LimitSystem,
}

impl ExperimentConfig {
    /// Defaults around a given model.
    pub fn new(spec: ModelSpec) -> Self {
        ExperimentConfig {
            spec,
            n_list: vec![1000],
            runs_per_n: 100,
            master_seed: 0,
            threshold_exponent: 17.0 / 24.0,
            pin_level: 0.01,
            window: (-2.0, 8.0),
            grid_step: 0.01,
            model: ModelTag::M3,
            seed_type: 0,
            max_restarts: 1000,
            limit: LimitSystem::Auto,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let m = file.model;
        let k = m.k;
        if k == 0 {
            return Err(Error::Config("`k` must be positive".into()));
        }
        let p = match m.p {
            Some(p) => p.into_vec(k, "p")?,
            None if k == 1 => vec![1.0],
            None => return Err(Error::Config("`p` is required when k > 1".into())),
        };
        let spec = ModelSpec {
            k,
            p,
            lambda_coef: m.lambda.into_rows(k, "lambda")?,
            mu_coef: m.mu.into_rows(k, "mu")?,
            beta_coef: m.beta.into_rows(k, "beta")?,
            gamma: m.gamma.into_vec(k, "gamma")?,
            kappa_lambda: m.kappa_lambda.into_rows(k, "kappa_lambda")?,
            kappa_mu: m.kappa_mu.into_rows(k, "kappa_mu")?,
            kappa_beta: m.kappa_beta.into_rows(k, "kappa_beta")?,
        };
        spec.validate()?;
        let e = file.experiment;
        let d = ExperimentConfig::new(spec);
        let cfg = ExperimentConfig {
            n_list: e.n_list.unwrap_or(d.n_list),
            runs_per_n: e.runs_per_n.unwrap_or(d.runs_per_n),
            master_seed: e.master_seed.unwrap_or(d.master_seed),
            threshold_exponent: e.threshold_exponent.unwrap_or(d.threshold_exponent),
            pin_level: e.pin_level.unwrap_or(d.pin_level),
            window: e.window.map(|[a, b]| (a, b)).unwrap_or(d.window),
            grid_step: e.grid_step.unwrap_or(d.grid_step),
            model: e.model.unwrap_or(d.model),
            seed_type: match e.seed_type {
                Some(0) => return Err(Error::Config("`seed_type` is 1-based".into())),
                Some(t) => t - 1,
                None => d.seed_type,
            },
            max_restarts: e.max_restarts.unwrap_or(d.max_restarts),
            limit: e.limit.unwrap_or(d.limit),
            spec: d.spec,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::Config("`n_list` must hold positive sizes".into()));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("`n_list` must be strictly increasing".into()));
        }
        if self.runs_per_n == 0 {
            return Err(Error::Config("`runs_per_n` must be positive".into()));
        }
        if !(self.threshold_exponent > 0.0 && self.threshold_exponent <= 1.0) {
            return Err(Error::Config("`threshold_exponent` must lie in (0, 1]".into()));
        }
        if !(self.pin_level > 0.0 && self.pin_level < 1.0) {
            return Err(Error::Config("`pin_level` must lie in (0, 1)".into()));
        }
        if !(self.window.0 < self.window.1) || !self.window.0.is_finite() || !self.window.1.is_finite() {
            return Err(Error::Config("`window` must be a nonempty interval".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::Config("`grid_step` must be positive".into()));
        }
        if self.seed_type >= self.spec.k {
            return Err(Error::Config(format!("`seed_type` exceeds k = {}", self.spec.k)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIX_B: &str = r#"
        [model]
        k = 1
        lambda = 3.0
        mu = [[1.0]]
        beta = [1.0]
        gamma = [1.0]
        kappa_lambda = -1.0
        kappa_mu = 0.0
        kappa_beta = 0.0

        [experiment]
        n_list = [1000, 10000]
        runs_per_n = 20
        master_seed = 9
        model = "M1"
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(SIX_B).unwrap();
        assert_eq!(cfg.spec, ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0));
        assert_eq!(cfg.n_list, vec![1000, 10000]);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.model, ModelTag::M1);
        assert_eq!(cfg.pin_level, 0.01);
        assert_eq!(cfg.threshold_exponent, 17.0 / 24.0);
        assert_eq!(cfg.limit, LimitSystem::Auto);
    }

    #[test]
    fn two_type_flat_matrices() {
        let text = r#"
            [model]
            k = 2
            p = [0.4, 0.6]
            lambda = [1, 2, 2, 4]
            mu = [[1, 1], [1, 1]]
            beta = [1, 1, 1, 1]
            gamma = [1, 2]
            kappa_lambda = [0, 0, 0, 0]
            kappa_mu = [0, 0, 0, 0]
            kappa_beta = [-1, -1, -1, -1]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.spec.lambda_coef, vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(cfg.spec.gamma, vec![1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            SIX_B.replace("n_list = [1000, 10000]", "n_list = [10000, 1000]"),
            SIX_B.replace("runs_per_n = 20", "runs_per_n = 0"),
            SIX_B.replace("mu = [[1.0]]", "mu = [[1.0, 2.0]]"),
            SIX_B.replace("model = \"M1\"", "colour = 3"),
            SIX_B.replace("gamma = [1.0]", "gamma = [-1.0]"),
            SIX_B.replace("model = \"M1\"", "window = [1.0, 1.0]"),
        ];
        for text in &bad {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
