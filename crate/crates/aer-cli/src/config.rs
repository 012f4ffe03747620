//! JSON experiment configuration: schema, validation, and the built-in
//! example presets.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use aer::asymptotics::PhysicalSetup;
use aer::bounds::ShapeClass;
use aer::source::{build_cumulative, SourceError, SourceFunction, SourceSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    pub setup: SetupConfig,
    pub source: SourceConfig,
    pub grid: GridConfig,
    /// Observation time.
    pub t0: f64,
    /// Relative noise level.
    pub delta: f64,
    pub seed: u64,
    pub constraint_class: ClassConfig,
    pub layer_mode: LayerModeConfig,
    /// Masked x-intervals `[lo, hi]` removed from the observations.
    #[serde(default)]
    pub gaps: Vec<[f64; 2]>,
    pub outputs: OutputConfig,
    /// Calibration constant for the asymptotic part of the admissible-set
    /// radius; defaults to a per-named-source preset.
    #[serde(default)]
    pub radius_c1: Option<f64>,
    /// Whether gradient samples are observed directly (otherwise they are
    /// produced by smoothing the field samples); defaults per named source.
    #[serde(default)]
    pub observed_gradient: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub mu: f64,
    pub k: f64,
    pub u_left: f64,
    pub u_right: f64,
    pub t_final: f64,
    pub x0_init: f64,
}

impl SetupConfig {
    pub fn to_setup(&self) -> PhysicalSetup {
        PhysicalSetup {
            mu: self.mu,
            k: self.k,
            u_left: self.u_left,
            u_right: self.u_right,
            t_final: self.t_final,
            x0_init: self.x0_init,
        }
    }
}

/// Either one of the named closed-form sources or a sampled table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceConfig {
    Named(String),
    Table { xs: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Finite-volume cells on [0, 1].
    pub n_cells: usize,
    /// Observation intervals; samples sit at `x_i = i / n_obs`.
    pub n_obs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassConfig {
    Monotone,
    Convex,
    Concave,
    Unconstrained,
}

impl ClassConfig {
    pub fn to_class(self) -> ShapeClass {
        match self {
            ClassConfig::Monotone => ShapeClass::Monotone,
            ClassConfig::Convex => ShapeClass::Convex,
            ClassConfig::Concave => ShapeClass::Concave,
            ClassConfig::Unconstrained => ShapeClass::Unconstrained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerModeConfig {
    Oracle,
    Data,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default)]
    pub plots: bool,
}

impl ExperimentConfig {
    /// Structural validation; physical admissibility is checked separately.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.t0 > 0.0 && self.t0 <= self.setup.t_final) {
            return Err(format!(
                "t0 = {} outside (0, t_final = {}]",
                self.t0, self.setup.t_final
            ));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(format!("delta = {} outside [0, 1)", self.delta));
        }
        if self.grid.n_cells < 4 {
            return Err(format!("n_cells = {} too small", self.grid.n_cells));
        }
        if self.grid.n_obs < 5 {
            return Err(format!("n_obs = {} too small (need >= 5)", self.grid.n_obs));
        }
        for gap in &self.gaps {
            if !(0.0 <= gap[0] && gap[0] < gap[1] && gap[1] <= 1.0) {
                return Err(format!("bad gap interval [{}, {}]", gap[0], gap[1]));
            }
        }
        match &self.source {
            SourceConfig::Named(name) => {
                if named_source(name).is_none() {
                    return Err(format!(
                        "unknown named source {name:?} (known: ex1, ex2, ex3)"
                    ));
                }
            }
            SourceConfig::Table { xs, values } => {
                if xs.len() != values.len() || xs.len() < 2 {
                    return Err("source table needs matching xs/values, length >= 2".into());
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("source table xs must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    pub fn build_source(&self) -> Result<Arc<SourceFunction>, SourceError> {
        let spec = match &self.source {
            SourceConfig::Named(name) => named_source(name).expect("validated"),
            SourceConfig::Table { xs, values } => SourceSpec::Sampled {
                xs: xs.clone(),
                values: values.clone(),
            },
        };
        Ok(Arc::new(build_cumulative(spec, 4096)?))
    }

    /// Radius calibration constant: explicit override, else a preset tuned
    /// per named source, else 1.
    pub fn c1(&self) -> f64 {
        if let Some(c1) = self.radius_c1 {
            return c1;
        }
        match &self.source {
            SourceConfig::Named(n) if n == "ex1" => 0.8,
            SourceConfig::Named(n) if n == "ex2" => 2.0,
            SourceConfig::Named(n) if n == "ex3" => 50.0,
            _ => 1.0,
        }
    }

    /// Whether gradient samples are taken directly from the field's space
    /// derivative. The dense-sampling scenario (ex3) reconstructs them by
    /// smoothing instead.
    pub fn gradient_observed(&self) -> bool {
        if let Some(v) = self.observed_gradient {
            return v;
        }
        !matches!(&self.source, SourceConfig::Named(n) if n == "ex3")
    }

    /// True source values at `xs`, for error reporting.
    pub fn true_source_at(&self, xs: &[f64]) -> Vec<f64> {
        let spec = match &self.source {
            SourceConfig::Named(name) => named_source(name).expect("validated"),
            SourceConfig::Table { xs, values } => SourceSpec::Sampled {
                xs: xs.clone(),
                values: values.clone(),
            },
        };
        xs.iter().map(|&x| spec.eval(x)).collect()
    }
}

pub fn named_source(name: &str) -> Option<SourceSpec> {
    match name {
        "ex1" => Some(SourceSpec::analytic(|x| x - x * x + x * x * x)),
        "ex2" => Some(SourceSpec::analytic(|x| (x - x * x).max(0.0).sqrt())),
        "ex3" => Some(SourceSpec::analytic(|x| x * (3.0 * PI * x).sin())),
        _ => None,
    }
}

/// Built-in configurations reproducing the three reference experiments.
pub fn example_config(example: u8) -> Option<ExperimentConfig> {
    let (setup, source, n_obs, t0, delta, class) = match example {
        1 => (
            SetupConfig {
                mu: 0.01,
                k: 1.0,
                u_left: -10.0,
                u_right: 5.0,
                t_final: 0.3,
                x0_init: 0.1,
            },
            "ex1",
            20,
            0.2,
            0.01,
            ClassConfig::Monotone,
        ),
        2 => (
            SetupConfig {
                mu: 0.01,
                k: 1.0,
                u_left: -10.0,
                u_right: 5.0,
                t_final: 0.3,
                x0_init: 0.1,
            },
            "ex2",
            20,
            0.01,
            0.01,
            ClassConfig::Concave,
        ),
        3 => (
            SetupConfig {
                mu: 0.01,
                k: 1.0,
                u_left: -8.0,
                u_right: 4.0,
                t_final: 0.2,
                x0_init: 0.1,
            },
            "ex3",
            499,
            0.2,
            0.001,
            ClassConfig::Unconstrained,
        ),
        _ => return None,
    };
    // Example 2 observes at the same time as example 1.
    let t0 = if example == 2 { 0.2 } else { t0 };
    Some(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        setup,
        source: SourceConfig::Named(source.to_string()),
        grid: GridConfig { n_cells: 500, n_obs },
        t0,
        delta,
        seed: 0,
        constraint_class: class,
        layer_mode: LayerModeConfig::Oracle,
        gaps: Vec::new(),
        outputs: OutputConfig {
            directory: PathBuf::from(format!("out/ex{example}")),
            plots: false,
        },
        radius_c1: None,
        observed_gradient: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for ex in 1..=3 {
            let cfg = example_config(ex).unwrap();
            cfg.validate().unwrap();
            cfg.build_source().unwrap();
        }
        assert!(example_config(4).is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut json = serde_json::to_value(example_config(1).unwrap()).unwrap();
        json.as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        assert!(serde_json::from_value::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn missing_required_key_rejected() {
        let mut json = serde_json::to_value(example_config(1).unwrap()).unwrap();
        json.as_object_mut().unwrap().remove("t0");
        assert!(serde_json::from_value::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = example_config(2).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.t0, cfg.t0);
        assert_eq!(back.constraint_class, cfg.constraint_class);
        assert_eq!(back.c1(), 2.0);
    }

    #[test]
    fn structural_validation_catches_bad_values() {
        let mut cfg = example_config(1).unwrap();
        cfg.t0 = 0.9;
        assert!(cfg.validate().is_err());
        let mut cfg = example_config(1).unwrap();
        cfg.gaps = vec![[0.5, 0.4]];
        assert!(cfg.validate().is_err());
        let mut cfg = example_config(1).unwrap();
        cfg.source = SourceConfig::Named("ex9".into());
        assert!(cfg.validate().is_err());
        let mut cfg = example_config(1).unwrap();
        cfg.schema_version = 99;
        assert!(cfg.validate().is_err());
    }
}
