//! Declarative TOML description of a transfer problem.
//!
//! Shipped benchmarks live in `benchmarks/*.toml` and use the same schema, so
//! a custom system starts as a copy of one of them.

use std::path::Path;

use serde::Deserialize;

use crate::certify::DecreaseCondition;
use crate::error::{Error, Result};
use crate::transfer::TransferConfig;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionDef {
    pub kind: crate::model::RegionKind,
    pub members: Vec<BoxDef>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DynamicsDef {
    Pendulum {
        m: f64,
        l: f64,
        tau: f64,
        g: f64,
    },
    DcMotor {
        r: f64,
        l: f64,
        k: f64,
        j: f64,
        b: f64,
        tau: f64,
    },
    Quadrotor {
        tau: f64,
        sign: f64,
    },
    /// `x⁺ = A x + B u`
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
}

// `deny_unknown_fields` does not combine with `flatten`; typos in the model
// parameters are still caught by the model enum itself.
#[derive(Clone, Debug, Deserialize, PartialEq)]
pub struct SystemDef {
    #[serde(flatten)]
    pub dynamics: DynamicsDef,
    pub input_box: BoxDef,
    /// Missing constants are estimated by sampling.
    pub lip_state: Option<f64>,
    pub lip_input: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerDef {
    pub linear: Vec<Vec<f64>>,
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub saturated: Vec<Vec<f64>>,
    #[serde(default)]
    pub saturation: Vec<f64>,
    #[serde(default)]
    pub profile: crate::model::SaturationProfile,
    /// Overrides the exact constant computed from the gains.
    pub lip: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CertificateDef {
    Polyhedral {
        rows: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        eta: f64,
        lip: Option<f64>,
    },
    Quadratic {
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
        r: f64,
        eta: f64,
        lip: Option<f64>,
    },
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScaleDef {
    pub epsilon: f64,
    /// Per-scale training overrides, merged over the top-level `[transfer]` table.
    #[serde(default)]
    pub transfer: Option<toml::Table>,
}

/// Reference constants for this case study.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PaperAnchor {
    pub lip_b: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub lip_dagger: f64,
    pub mismatch: f64,
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimatorDef {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_pairs() -> usize {
    10_000
}

impl Default for EstimatorDef {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemDef {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub decrease: DecreaseCondition,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub state_box: BoxDef,
    pub source: SystemDef,
    pub target: SystemDef,
    pub initial: RegionDef,
    #[serde(rename = "unsafe")]
    pub unsafe_set: RegionDef,
    pub controller: ControllerDef,
    pub certificate: CertificateDef,
    pub desk: ScaleDef,
    pub paper: ScaleDef,
    #[serde(default)]
    pub transfer: Option<toml::Table>,
    pub paper_anchor: Option<PaperAnchor>,
    #[serde(default)]
    pub estimator: EstimatorDef,
}

fn default_horizon() -> usize {
    500
}

impl ProblemDef {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Training settings: defaults, then `[transfer]`, then the scale's own table.
    pub fn transfer_config(&self, scale_def: &ScaleDef) -> Result<TransferConfig> {
        let mut merged = toml::Table::new();
        for t in [self.transfer.as_ref(), scale_def.transfer.as_ref()].into_iter().flatten() {
            for (k, v) in t {
                merged.insert(k.clone(), v.clone());
            }
        }
        let cfg: TransferConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[transfer]: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
name = "mini"
decrease = "sublevel"
state_box = { lower = [-1.0], upper = [1.0] }

[source]
model = "linear"
a = [[0.5]]
b = [[1.0]]
input_box = { lower = [-1.0], upper = [1.0] }

[target]
model = "linear"
a = [[0.5]]
b = [[-1.0]]
input_box = { lower = [-1.0], upper = [1.0] }
lip_state = 0.5
lip_input = 1.0

[initial]
kind = "box"
members = [{ lower = [-0.1], upper = [0.1] }]

[unsafe]
kind = "complement-of-box"
members = [{ lower = [-0.8], upper = [0.8] }]

[controller]
linear = [[0.0]]

[certificate]
shape = "polyhedral"
rows = [[1.0], [-1.0]]
offsets = [-0.5, -0.5]
eta = 0.05

[desk]
epsilon = 0.01

[paper]
epsilon = 0.001
transfer = { batch_size = 16 }

[transfer]
hidden = [4]
batch_size = 8
"#;

    #[test]
    fn parses_and_merges_transfer_tables() {
        let p = ProblemDef::from_toml_str(MINI).unwrap();
        assert_eq!(p.decrease, DecreaseCondition::Sublevel);
        assert_eq!(p.horizon, 500);
        let desk = p.transfer_config(&p.desk).unwrap();
        assert_eq!(desk.batch_size, 8);
        assert_eq!(desk.hidden, vec![4]);
        let paper = p.transfer_config(&p.paper).unwrap();
        assert_eq!(paper.batch_size, 16);
        assert_eq!(paper.learning_rate, 5e-6);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = MINI.replace("hidden = [4]", "hiden = [4]");
        let p = ProblemDef::from_toml_str(&bad).unwrap();
        assert!(p.transfer_config(&p.desk).is_err());
        assert!(ProblemDef::from_toml_str("name = 3").is_err());
    }
}
