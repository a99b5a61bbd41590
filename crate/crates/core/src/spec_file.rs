//! JSON model files.
//!
//! ```json
//! {
//!   "dimension": 1, "alpha": 1.0, "beta": 2.0, "gamma": 1.0, "drift": [0.0],
//!   "spectral": {"type": "atomic", "directions": [[1.0], [-1.0]], "weights": [0.5, 0.5]},
//!   "profile": {"q": {"family": "one"}, "phi": {"family": "exp", "params": {"lambda": 1.0}}}
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{LevyModel, RadialProfile};
use crate::profile::{make_profile, Params, ProfileFn};
use crate::spectral::{AngularDensity, AngularRule, SpectralForm, SpectralMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dimension: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    pub spectral: SpectralFile,
    pub profile: ProfileFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralFile {
    Atomic {
        directions: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Density {
        g: AngularDensity,
        #[serde(default = "default_rule")]
        rule: AngularRule,
        nodes: usize,
    },
}

fn default_rule() -> AngularRule {
    AngularRule::Sphere
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub q: FamilySpec,
    pub phi: FamilySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default)]
    pub params: Params,
}

impl FamilySpec {
    fn of(p: &dyn ProfileFn) -> Self {
        Self {
            family: p.family().to_string(),
            params: p.params().clone(),
        }
    }
}

impl ModelFile {
    pub fn from_model(model: &LevyModel) -> Self {
        let mu = model.mu();
        let spectral = match mu.form() {
            SpectralForm::Atomic => SpectralFile::Atomic {
                directions: mu.directions().to_vec(),
                weights: mu.weights().to_vec(),
            },
            SpectralForm::Density { g, rule, nodes, .. } => SpectralFile::Density {
                g: g.clone(),
                rule: *rule,
                nodes: *nodes,
            },
        };
        Self {
            dimension: model.dim(),
            alpha: model.alpha(),
            beta: model.beta(),
            gamma: model.gamma(),
            drift: Some(model.drift().to_vec()),
            spectral,
            profile: ProfileFile {
                q: FamilySpec::of(model.profile().q.as_ref()),
                phi: FamilySpec::of(model.profile().phi.as_ref()),
            },
        }
    }

    pub fn to_model(&self) -> Result<LevyModel> {
        let mu = match &self.spectral {
            SpectralFile::Atomic { directions, weights } => {
                SpectralMeasure::atomic(directions.clone(), weights.clone())?
            }
            SpectralFile::Density { g, rule, nodes } => {
                SpectralMeasure::density(self.dimension, g.clone(), *rule, *nodes)?
            }
        };
        if mu.dim() != self.dimension {
            return Err(Error::InvalidModel(format!(
                "dimension is {} but the spectral measure lives in R^{}",
                self.dimension,
                mu.dim()
            )));
        }
        let q = make_profile(&self.profile.q.family, &self.profile.q.params)?;
        let phi = make_profile(&self.profile.phi.family, &self.profile.phi.params)?;
        let drift = self.drift.clone().unwrap_or_else(|| vec![0.0; self.dimension]);
        LevyModel::new(self.alpha, self.beta, self.gamma, drift, mu, RadialProfile::new(q, phi))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn load_model(path: &Path) -> Result<LevyModel> {
    ModelFile::from_json(&std::fs::read_to_string(path)?)?.to_model()
}

pub fn save_model(model: &LevyModel, path: &Path) -> Result<()> {
    std::fs::write(path, ModelFile::from_model(model).to_json()? + "\n")?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the compact JSON form of the model.
pub fn model_hash(model: &LevyModel) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(&ModelFile::from_model(model))?.as_bytes()))
}

/// Hash of the radial law only; tables of the radial symbol depend on nothing else.
pub fn radial_hash(model: &LevyModel) -> Result<String> {
    let key = serde_json::json!({
        "alpha": model.alpha(),
        "q": FamilySpec::of(model.profile().q.as_ref()),
        "phi": FamilySpec::of(model.profile().phi.as_ref()),
    });
    Ok(sha256_hex(serde_json::to_string(&key)?.as_bytes()))
}
