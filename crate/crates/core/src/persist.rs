//! Versioned JSON model files.
//!
//! Every model kind shares one envelope:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model_kind": "mlp",
//!   "features": ["gender", "..."],
//!   "pipeline_fingerprint": "<sha256 of the PipelineParams document>",
//!   "model": { ... }
//! }
//! ```
//!
//! For the network, `model.layers` lists `{inputs, outputs, weights, bias}`
//! with `weights` row-major over `inputs × outputs`. Loading checks the
//! schema version, feature list, shapes and finiteness; the caller checks
//! the fingerprint against the pipeline it intends to use.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    self, BaselineError, Forest, ForestConfig, LinearModel, LogisticConfig, SgdConfig, TreeConfig,
    TreeNode,
};
use crate::matrix::Matrix;
use crate::nn::{self, Dense, MlpParams, NnError, TrainConfig, TrainHistory, ARCHITECTURE};
use crate::pipeline::{EncodedDataset, PipelineParams, FEATURES, NUM_FEATURES};
use crate::seed::{self, Stream};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file rejected: {0}")]
    Invalid(String),
    #[error(
        "model was trained against pipeline {expected}, but the supplied pipeline is {actual}"
    )]
    FingerprintMismatch { expected: String, actual: String },
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Logreg,
    Sgd,
    Tree,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logreg,
        ModelKind::Sgd,
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Logreg => "logreg",
            ModelKind::Sgd => "sgd",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
        }
    }

    /// Human-readable method name used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "MLP",
            ModelKind::Logreg => "LogisticRegression",
            ModelKind::Sgd => "StochasticGradientDescent",
            ModelKind::Tree => "DecisionTreeClassifier",
            ModelKind::Forest => "RandomForestClassifier",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

/// Hyperparameters for every model kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub mlp: TrainConfig,
    pub logistic: LogisticConfig,
    pub sgd: SgdConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Mlp(MlpParams),
    Logreg(LinearModel),
    Sgd(LinearModel),
    Tree(TreeNode),
    Forest(Forest),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Mlp(_) => ModelKind::Mlp,
            TrainedModel::Logreg(_) => ModelKind::Logreg,
            TrainedModel::Sgd(_) => ModelKind::Sgd,
            TrainedModel::Tree(_) => ModelKind::Tree,
            TrainedModel::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, ModelError> {
        if x.cols() != NUM_FEATURES {
            return Err(BaselineError::WidthMismatch {
                expected: NUM_FEATURES,
                got: x.cols(),
            }
            .into());
        }
        Ok(match self {
            TrainedModel::Mlp(p) => nn::predict(p, x)?,
            TrainedModel::Logreg(m) | TrainedModel::Sgd(m) => m.predict(x)?,
            TrainedModel::Tree(t) => t.predict(x),
            TrainedModel::Forest(f) => f.predict(x),
        })
    }
}

/// Fits one model kind. Each kind draws from its own stream of `seed`.
pub fn fit_model(
    kind: ModelKind,
    train: &EncodedDataset,
    settings: &ModelSettings,
    seed: u64,
) -> Result<(TrainedModel, Option<TrainHistory>), ModelError> {
    let (x, y) = (&train.features, train.labels.as_slice());
    Ok(match kind {
        ModelKind::Mlp => {
            let cfg = TrainConfig {
                seed,
                ..settings.mlp
            };
            let (params, history) = nn::train(train, &cfg)?;
            (TrainedModel::Mlp(params), Some(history))
        }
        ModelKind::Logreg => (
            TrainedModel::Logreg(baselines::fit_logistic(x, y, &settings.logistic)?),
            None,
        ),
        ModelKind::Sgd => (
            TrainedModel::Sgd(baselines::fit_sgd_linear(x, y, &settings.sgd, seed)?),
            None,
        ),
        ModelKind::Tree => (
            TrainedModel::Tree(baselines::fit_tree(x, y, &settings.tree)?),
            None,
        ),
        ModelKind::Forest => {
            let forest_seed = seed::derive(seed, Stream::Forest);
            (
                TrainedModel::Forest(baselines::fit_forest(x, y, &settings.forest, forest_seed)?),
                None,
            )
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MlpDoc {
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope {
    schema_version: u32,
    model_kind: ModelKind,
    features: Vec<String>,
    pipeline_fingerprint: String,
    model: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: TrainedModel,
    pub pipeline_fingerprint: String,
}

impl ModelFile {
    pub fn new(model: TrainedModel, pipeline: &PipelineParams) -> ModelFile {
        ModelFile {
            model,
            pipeline_fingerprint: pipeline.fingerprint(),
        }
    }

    pub fn check_pipeline(&self, pipeline: &PipelineParams) -> Result<(), ModelError> {
        let actual = pipeline.fingerprint();
        if actual != self.pipeline_fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: self.pipeline_fingerprint.clone(),
                actual,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let model = match &self.model {
            TrainedModel::Mlp(p) => serde_json::to_value(MlpDoc {
                layers: p
                    .layers
                    .iter()
                    .map(|l| LayerDoc {
                        inputs: l.inputs(),
                        outputs: l.outputs(),
                        weights: l.weights.as_slice().to_vec(),
                        bias: l.bias.clone(),
                    })
                    .collect(),
            }),
            TrainedModel::Logreg(m) | TrainedModel::Sgd(m) => serde_json::to_value(m),
            TrainedModel::Tree(t) => serde_json::to_value(t),
            TrainedModel::Forest(f) => serde_json::to_value(f),
        }
        .expect("models always serialize");
        let envelope = Envelope {
            schema_version: MODEL_SCHEMA_VERSION,
            model_kind: self.model.kind(),
            features: FEATURES.iter().map(|s| s.to_string()).collect(),
            pipeline_fingerprint: self.pipeline_fingerprint.clone(),
            model,
        };
        serde_json::to_string(&envelope).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<ModelFile, ModelError> {
        let env: Envelope = serde_json::from_str(text)?;
        let invalid = |m: String| Err(ModelError::Invalid(m));
        if env.schema_version != MODEL_SCHEMA_VERSION {
            return invalid(format!("schema_version {}", env.schema_version));
        }
        if env.features != FEATURES {
            return invalid("feature list differs from the built-in one".into());
        }
        let model = match env.model_kind {
            ModelKind::Mlp => TrainedModel::Mlp(decode_mlp(serde_json::from_value(env.model)?)?),
            ModelKind::Logreg | ModelKind::Sgd => {
                let m: LinearModel = serde_json::from_value(env.model)?;
                if m.weights.len() != NUM_FEATURES
                    || !m.weights.iter().chain([&m.bias]).all(|v| v.is_finite())
                {
                    return invalid("linear model must have 19 finite weights".into());
                }
                if env.model_kind == ModelKind::Logreg {
                    TrainedModel::Logreg(m)
                } else {
                    TrainedModel::Sgd(m)
                }
            }
            ModelKind::Tree => {
                let t: TreeNode = serde_json::from_value(env.model)?;
                check_tree(&t)?;
                TrainedModel::Tree(t)
            }
            ModelKind::Forest => {
                let f: Forest = serde_json::from_value(env.model)?;
                if f.trees.is_empty() {
                    return invalid("forest has no trees".into());
                }
                f.trees.iter().try_for_each(check_tree)?;
                TrainedModel::Forest(f)
            }
        };
        Ok(ModelFile {
            model,
            pipeline_fingerprint: env.pipeline_fingerprint,
        })
    }
}

fn check_tree(t: &TreeNode) -> Result<(), ModelError> {
    if !t.is_finite() || t.max_feature().is_some_and(|f| f >= NUM_FEATURES) {
        return Err(ModelError::Invalid(
            "tree references an unknown feature or a non-finite threshold".into(),
        ));
    }
    Ok(())
}

fn decode_mlp(doc: MlpDoc) -> Result<MlpParams, ModelError> {
    let invalid = |m: String| ModelError::Invalid(m);
    if doc.layers.len() != ARCHITECTURE.len() - 1 {
        return Err(invalid(format!(
            "expected {} layers, found {}",
            ARCHITECTURE.len() - 1,
            doc.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.into_iter().enumerate() {
        let (want_in, want_out) = (ARCHITECTURE[i], ARCHITECTURE[i + 1]);
        if (l.inputs, l.outputs) != (want_in, want_out)
            || l.weights.len() != want_in * want_out
            || l.bias.len() != want_out
        {
            return Err(invalid(format!(
                "layer {i} does not have shape {want_in}x{want_out}"
            )));
        }
        if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
            return Err(invalid(format!("layer {i} has non-finite entries")));
        }
        layers.push(Dense {
            weights: Matrix::from_vec(want_in, want_out, l.weights),
            bias: l.bias,
        });
    }
    Ok(MlpParams { layers })
}
