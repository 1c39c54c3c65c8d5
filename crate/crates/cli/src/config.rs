//! Workflow configuration: command-line flags merged over an optional JSON
//! config file. The resolved config is echoed into every output.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cig_core::asymptotics::EdgeworthOrder;
use cig_core::expfam::{ExpFamilySpec, NewtonOptions};
use cig_core::mixture::NpmleOptions;
use cig_core::spectrum::{DEFAULT_GROUPING_TOL, DEFAULT_NEAR_REPLICATE_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub grouping: f64,
    pub near_replicate: f64,
    pub newton: f64,
    pub epsilon: f64,
    pub dd_per_n: f64,
    pub prune: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let np = NpmleOptions::default();
        Self {
            grouping: DEFAULT_GROUPING_TOL,
            near_replicate: DEFAULT_NEAR_REPLICATE_TOL,
            newton: NewtonOptions::default().tol,
            epsilon: np.epsilon_target,
            dd_per_n: np.dd_tol_per_n,
            prune: np.prune,
        }
    }
}

impl Tolerances {
    pub fn npmle(&self) -> NpmleOptions {
        NpmleOptions {
            epsilon_target: self.epsilon,
            dd_tol_per_n: self.dd_per_n,
            prune: self.prune,
            ..NpmleOptions::default()
        }
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton,
            ..NewtonOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grouping", self.grouping),
            ("near_replicate", self.near_replicate),
            ("newton", self.newton),
            ("epsilon", self.epsilon),
            ("dd_per_n", self.dd_per_n),
            ("prune", self.prune),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bail!("tolerance {name} must be finite and non-negative, got {v}");
            }
        }
        Ok(())
    }
}

/// Subcommand parameters. Presets are bundles of these; fields given in a
/// config file override the preset field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub with_generators: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<ExpFamilySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub responses: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing_support: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<EdgeworthOrder>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renormalized: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
}

impl Params {
    /// `self` with every field set in `over` replaced.
    pub fn overlay(mut self, over: Params) -> Params {
        if over.model.is_some() {
            self.model = over.model;
        }
        if over.probabilities.is_some() {
            self.probabilities = over.probabilities;
        }
        if over.with_generators.is_some() {
            self.with_generators = over.with_generators;
        }
        if over.family.is_some() {
            self.family = over.family;
        }
        if over.design.is_some() {
            self.design = over.design;
        }
        if over.responses.is_some() {
            self.responses = over.responses;
        }
        if over.counts.is_some() {
            self.counts = over.counts;
        }
        if over.trials.is_some() {
            self.trials = over.trials;
        }
        if over.mixing_support.is_some() {
            self.mixing_support = over.mixing_support;
        }
        if over.mixing_weights.is_some() {
            self.mixing_weights = over.mixing_weights;
        }
        if over.sample_size.is_some() {
            self.sample_size = over.sample_size;
        }
        if over.data.is_some() {
            self.data = over.data;
        }
        if over.censor.is_some() {
            self.censor = over.censor;
        }
        if over.width.is_some() {
            self.width = over.width;
        }
        if over.bins.is_some() {
            self.bins = over.bins;
        }
        if over.interval.is_some() {
            self.interval = over.interval;
        }
        if over.sigma.is_some() {
            self.sigma = over.sigma;
        }
        if over.theta.is_some() {
            self.theta = over.theta;
        }
        if over.theta_grid.is_some() {
            self.theta_grid = over.theta_grid;
        }
        if over.grid_points.is_some() {
            self.grid_points = over.grid_points;
        }
        if over.base.is_some() {
            self.base = over.base;
        }
        if over.statistic.is_some() {
            self.statistic = over.statistic;
        }
        if over.lambda.is_some() {
            self.lambda = over.lambda;
        }
        if over.order.is_some() {
            self.order = over.order;
        }
        if over.renormalized.is_some() {
            self.renormalized = over.renormalized;
        }
        if over.replications.is_some() {
            self.replications = over.replications;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub subcommand: String,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tol: Tolerances,
    #[serde(default)]
    pub params: Params,
}

/// Flags that override config-file values when given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub preset: Option<String>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grouping: Option<f64>,
    pub near_replicate: Option<f64>,
    pub newton: Option<f64>,
    pub epsilon: Option<f64>,
    pub dd_per_n: Option<f64>,
    pub prune: Option<f64>,
}

impl WorkflowConfig {
    pub fn load(subcommand: &str, file: Option<&PathBuf>, o: Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let cfg: WorkflowConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                if cfg.subcommand != subcommand {
                    bail!(
                        "config {} is for subcommand {:?}, not {subcommand:?}",
                        path.display(),
                        cfg.subcommand
                    );
                }
                cfg
            }
            None => WorkflowConfig {
                subcommand: subcommand.to_string(),
                preset: None,
                input: None,
                output: None,
                csv: None,
                seed: 0,
                tol: Tolerances::default(),
                params: Params::default(),
            },
        };
        if o.preset.is_some() {
            cfg.preset = o.preset;
        }
        if o.input.is_some() {
            cfg.input = o.input;
        }
        if o.output.is_some() {
            cfg.output = o.output;
        }
        if o.csv.is_some() {
            cfg.csv = o.csv;
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        let t = &mut cfg.tol;
        for (slot, v) in [
            (&mut t.grouping, o.grouping),
            (&mut t.near_replicate, o.near_replicate),
            (&mut t.newton, o.newton),
            (&mut t.epsilon, o.epsilon),
            (&mut t.dd_per_n, o.dd_per_n),
            (&mut t.prune, o.prune),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        cfg.tol.validate()?;
        if cfg.preset.is_some() && cfg.input.is_some() {
            bail!("give either --preset or --input, not both");
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<WorkflowConfig>(r#"{"subcommand":"spectrum","sede":3}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<WorkflowConfig>(r#"{"subcommand":"spectrum","tol":{"eps":1}}"#);
        assert!(err.is_err());
        let ok: WorkflowConfig = serde_json::from_str(r#"{"subcommand":"spectrum","tol":{"epsilon":0.01}}"#).unwrap();
        assert_eq!(ok.tol.epsilon, 0.01);
        assert_eq!(ok.tol.newton, Tolerances::default().newton);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"subcommand":"fit-mixture","seed":5,"tol":{"epsilon":0.01}}"#).unwrap();
        let o = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let cfg = WorkflowConfig::load("fit-mixture", Some(&path), o).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tol.epsilon, 0.01);
        assert!(WorkflowConfig::load("spectrum", Some(&path), Overrides::default()).is_err());
    }

    #[test]
    fn negative_tolerance_is_rejected() {
        let o = Overrides {
            epsilon: Some(-1.0),
            ..Overrides::default()
        };
        assert!(WorkflowConfig::load("fit-mixture", None, o).is_err());
    }
}
