//! Scenario configuration: JSON schema mirrored as serde types, plus the
//! built-in default configs behind each CLI subcommand.

use std::collections::BTreeMap;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicSystem;
use crate::error::{Result, SparseDomError};
use crate::space::Space;
use std::sync::Arc;
use crate::sparse::{AveragesMode, ConstructionParams, CtMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Axioms,
    A2Demo,
    WeightsSweep,
    FractionalDemo,
    FormDemo,
    RmfDemo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub kind: String,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub anisotropy: Vec<f64>,
    #[serde(default)]
    pub points_per_axis: usize,
    #[serde(default = "one_f")]
    pub extent: f64,
    #[serde(default)]
    pub depth: u32,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}

impl SpaceConfig {
    pub fn interval(depth: u32) -> Self {
        SpaceConfig {
            kind: "interval".into(),
            dim: 1,
            anisotropy: vec![1.0],
            points_per_axis: 1 << depth,
            extent: 1.0,
            depth,
        }
    }

    pub fn grid(dim: usize, anisotropy: Vec<f64>, n: usize, extent: f64) -> Self {
        SpaceConfig { kind: "grid".into(), dim, anisotropy, points_per_axis: n, extent, depth: 0 }
    }

    pub fn build(&self) -> Result<Arc<Space>> {
        match self.kind.as_str() {
            "interval" => Space::make_interval_space(self.depth),
            "grid" => {
                let a = if self.anisotropy.is_empty() {
                    vec![1.0; self.dim]
                } else {
                    self.anisotropy.clone()
                };
                Space::make_grid_space(self.dim, &a, self.points_per_axis, self.extent)
            }
            other => Err(SparseDomError::Config(format!("unknown space kind: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub k_min: i32,
    pub k_max: i32,
}

impl SystemConfig {
    pub fn build(&self, space: &Arc<Space>) -> Result<DyadicSystem> {
        DyadicSystem::build_anisotropic_system(space.clone(), self.k_min, self.k_max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_frac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rademacher_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub montecarlo_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtConfig {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default = "default_battery")]
    pub battery: usize,
}

fn default_battery() -> usize {
    32
}

impl CtConfig {
    pub fn to_mode(&self, seed: u64) -> Result<CtMode> {
        match self.mode.as_str() {
            "supplied" => Ok(CtMode::Supplied(self.value.ok_or_else(|| {
                SparseDomError::Config("c_t mode 'supplied' needs a value".into())
            })?)),
            "estimate" => Ok(CtMode::Estimate { battery: self.battery, seed }),
            other => Err(SparseDomError::Config(format!("unknown c_t mode: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    pub p0: f64,
    pub r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub c_t: CtConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_factor_c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_truncation: Option<f64>,
    #[serde(default = "yes")]
    pub adaptive: bool,
    #[serde(default = "dilated")]
    pub mode: String,
}

fn yes() -> bool {
    true
}
fn dilated() -> String {
    "dilated".into()
}

impl ParamsConfig {
    pub fn build(&self, default_alpha: f64, seed: u64) -> Result<ConstructionParams> {
        let mode = match self.mode.as_str() {
            "dilated" => AveragesMode::Dilated,
            "upgraded" => AveragesMode::Upgraded,
            other => return Err(SparseDomError::Config(format!("unknown averages mode: {other}"))),
        };
        Ok(ConstructionParams {
            p0: self.p0,
            r: self.r,
            alpha: self.alpha.unwrap_or(default_alpha),
            c_t: self.c_t.to_mode(seed)?,
            lambda: self.lambda,
            lambda_factor_c1: self.lambda_factor_c1,
            q0: self.q0,
            q_truncation: self.q_truncation,
            adaptive: self.adaptive,
            mode,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub p_values: Vec<f64>,
    #[serde(default)]
    pub r_values: Vec<f64>,
    #[serde(default)]
    pub depths: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub scenario: ScenarioKind,
    pub space: SpaceConfig,
    pub system: SystemConfig,
    pub operator: OperatorConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Every pass/fail tolerance the scenario uses, by name.
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
}

fn default_trials() -> usize {
    16
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        Ok(serde_json::from_str(text)?)
    }
}

fn tol(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
    entries.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn hilbert_op() -> OperatorConfig {
    OperatorConfig {
        kind: "hilbert".into(),
        alpha_frac: None,
        symbol: None,
        rademacher_mode: None,
        montecarlo_samples: None,
    }
}

fn estimate_ct() -> CtConfig {
    CtConfig { mode: "estimate".into(), value: None, battery: 32 }
}

/// Built-in default configs behind the CLI subcommands.
pub fn default_config(kind: ScenarioKind) -> ScenarioConfig {
    match kind {
        ScenarioKind::Axioms => ScenarioConfig {
            name: "axioms".into(),
            scenario: kind,
            space: SpaceConfig::interval(8),
            system: SystemConfig { k_min: 0, k_max: 8 },
            operator: OperatorConfig {
                kind: "none".into(),
                alpha_frac: None,
                symbol: None,
                rademacher_mode: None,
                montecarlo_samples: None,
            },
            params: ParamsConfig {
                p0: 1.0,
                r: 1.0,
                alpha: None,
                c_t: CtConfig { mode: "supplied".into(), value: Some(1.0), battery: 32 },
                lambda: None,
                lambda_factor_c1: None,
                q0: None,
                q_truncation: None,
                adaptive: true,
                mode: "dilated".into(),
            },
            sweep: SweepConfig::default(),
            tolerances: tol(&[("covering_trials", 100.0)]),
            trials: 16,
            seed: 20240611,
        },
        ScenarioKind::A2Demo => ScenarioConfig {
            name: "a2-demo".into(),
            scenario: kind,
            space: SpaceConfig::interval(6),
            system: SystemConfig { k_min: 0, k_max: 6 },
            operator: hilbert_op(),
            params: ParamsConfig {
                p0: 1.0,
                r: 1.0,
                alpha: None,
                c_t: estimate_ct(),
                lambda: None,
                lambda_factor_c1: None,
                q0: None,
                q_truncation: None,
                adaptive: true,
                mode: "dilated".into(),
            },
            sweep: SweepConfig {
                gammas: vec![-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9],
                p_values: vec![2.0],
                r_values: vec![],
                depths: vec![],
            },
            tolerances: tol(&[
                ("max_slope", 1.15),
                ("pointwise_proof_factor", 2.0),
                ("pointwise_functions", 10.0),
            ]),
            trials: 24,
            seed: 20240611,
        },
        ScenarioKind::WeightsSweep => ScenarioConfig {
            name: "weights-sweep".into(),
            scenario: kind,
            space: SpaceConfig::interval(6),
            system: SystemConfig { k_min: 0, k_max: 6 },
            operator: hilbert_op(),
            params: ParamsConfig {
                p0: 1.0,
                r: 1.0,
                alpha: None,
                c_t: estimate_ct(),
                lambda: None,
                lambda_factor_c1: Some(2.5),
                q0: None,
                q_truncation: None,
                adaptive: true,
                mode: "dilated".into(),
            },
            sweep: SweepConfig {
                gammas: vec![-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9],
                p_values: vec![2.0],
                r_values: vec![1.0, 2.0],
                depths: vec![],
            },
            tolerances: tol(&[("slope_margin", 0.1)]),
            trials: 24,
            seed: 20240611,
        },
        ScenarioKind::FractionalDemo => ScenarioConfig {
            name: "fractional-demo".into(),
            scenario: kind,
            space: SpaceConfig::interval(6),
            system: SystemConfig { k_min: 0, k_max: 6 },
            operator: OperatorConfig {
                kind: "riesz".into(),
                alpha_frac: Some(0.5),
                symbol: None,
                rademacher_mode: None,
                montecarlo_samples: None,
            },
            params: ParamsConfig {
                p0: 1.0,
                r: 1.0,
                alpha: None,
                c_t: estimate_ct(),
                lambda: None,
                lambda_factor_c1: Some(2.5),
                q0: Some(2.0),
                q_truncation: None,
                adaptive: true,
                mode: "dilated".into(),
            },
            sweep: SweepConfig { gammas: vec![], p_values: vec![], r_values: vec![], depths: vec![6, 7] },
            tolerances: tol(&[("max_drift", 0.5), ("random_functions", 20.0)]),
            trials: 16,
            seed: 20240611,
        },
        ScenarioKind::FormDemo => ScenarioConfig {
            name: "form-demo".into(),
            scenario: kind,
            space: SpaceConfig::interval(6),
            system: SystemConfig { k_min: 0, k_max: 6 },
            operator: hilbert_op(),
            params: ParamsConfig {
                p0: 1.0,
                r: 2.0,
                alpha: None,
                c_t: estimate_ct(),
                lambda: None,
                lambda_factor_c1: Some(2.5),
                q0: Some(4.0),
                q_truncation: Some(4.0),
                adaptive: true,
                mode: "dilated".into(),
            },
            sweep: SweepConfig::default(),
            tolerances: tol(&[("trial_pairs", 10.0), ("max_constant", 1e4)]),
            trials: 16,
            seed: 20240611,
        },
        ScenarioKind::RmfDemo => ScenarioConfig {
            name: "rmf-demo".into(),
            scenario: kind,
            space: SpaceConfig::interval(10),
            system: SystemConfig { k_min: 0, k_max: 10 },
            operator: OperatorConfig {
                kind: "rademacher".into(),
                alpha_frac: None,
                symbol: None,
                rademacher_mode: Some("chain".into()),
                montecarlo_samples: None,
            },
            params: ParamsConfig {
                p0: 1.0,
                r: 1.5,
                alpha: Some(1.0),
                c_t: estimate_ct(),
                lambda: None,
                lambda_factor_c1: None,
                q0: None,
                q_truncation: None,
                adaptive: true,
                mode: "dilated".into(),
            },
            sweep: SweepConfig {
                gammas: vec![],
                p_values: vec![2.0, 4.0, 8.0, 16.0],
                r_values: vec![1.5],
                depths: vec![],
            },
            tolerances: tol(&[
                ("envelope_r2", 0.9),
                ("min_lp_slope", 0.08),
                ("sharp_truncation_max", 0.0),
            ]),
            trials: 16,
            seed: 20240611,
        },
    }
}
