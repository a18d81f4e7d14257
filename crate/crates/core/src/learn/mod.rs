//! Classifiers mapping a scan to a command, their file format and the
//! accuracy and fit-time benchmarks.

pub mod forest;
pub mod knn;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, LabeledSample};
use crate::reflex::Command;
use crate::sensor::ScanVector;

pub use forest::{fit_forest, ForestModel, ForestParams};
pub use knn::{fit_knn, KnnModel, DEFAULT_K};
pub use tree::{best_split, fit_tree, gini, Node, Split, TreeModel, TreeParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("training set is empty")]
    Empty,
    #[error("k = {k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Index of the largest count; ties go to the earlier command.
pub(crate) fn majority(counts: &[usize; tree::N_CLASSES]) -> Command {
    let mut best = 0;
    for i in 1..counts.len() {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    Command::ALL[best]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tree,
    Forest,
    Knn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Tree, Algorithm::Forest, Algorithm::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Tree => "tree",
            Algorithm::Forest => "forest",
            Algorithm::Knn => "knn",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Hyperparameters for all three learners plus the forest's master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub k: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            k: DEFAULT_K,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Model::Tree(_) => Algorithm::Tree,
            Model::Forest(_) => Algorithm::Forest,
            Model::Knn(_) => Algorithm::Knn,
        }
    }

    pub fn predict(&self, scan: &ScanVector) -> Command {
        match self {
            Model::Tree(m) => m.predict(scan),
            Model::Forest(m) => m.predict(scan),
            Model::Knn(m) => m.predict(scan),
        }
    }
}

pub fn fit(algorithm: Algorithm, train: &Dataset, cfg: &LearnerConfig) -> Result<Model, FitError> {
    Ok(match algorithm {
        Algorithm::Tree => Model::Tree(fit_tree(train, &cfg.tree)?),
        Algorithm::Forest => Model::Forest(fit_forest(train, &cfg.forest, cfg.seed)?),
        Algorithm::Knn => Model::Knn(fit_knn(train, cfg.k)?),
    })
}

/// Fraction of samples whose label `predict` reproduces.
///
/// Panics on an empty dataset.
pub fn accuracy(predict: impl Fn(&ScanVector) -> Command, ds: &Dataset) -> f64 {
    assert!(!ds.is_empty(), "accuracy of an empty dataset");
    let hits = ds.samples.iter().filter(|s| predict(&s.scan) == s.label).count();
    hits as f64 / ds.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub algorithm: Algorithm,
    pub median_seconds: f64,
    pub model: Model,
}

/// Fits `repetitions` times and reports the median wall-clock duration.
/// Panics if two fits disagree, since fitting must be deterministic.
pub fn benchmark_fit(
    algorithm: Algorithm,
    train: &Dataset,
    cfg: &LearnerConfig,
    repetitions: usize,
) -> Result<BenchResult, FitError> {
    assert!(repetitions >= 1, "at least one repetition");
    let mut times = Vec::with_capacity(repetitions);
    let mut first: Option<Model> = None;
    for _ in 0..repetitions {
        let t0 = Instant::now();
        let m = fit(algorithm, train, cfg)?;
        times.push(t0.elapsed().as_secs_f64());
        match &first {
            None => first = Some(m),
            Some(f) => assert_eq!(f, &m, "{algorithm} fit is not deterministic"),
        }
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok(BenchResult {
        algorithm,
        median_seconds: median,
        model: first.expect("one repetition"),
    })
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
enum ModelBody {
    Tree {
        params: TreeParams,
        nodes: Vec<Node>,
    },
    Forest {
        params: ForestParams,
        trees: Vec<Vec<Node>>,
    },
    Knn {
        params: KnnParams,
        samples: Vec<LabeledSample>,
    },
}

#[derive(Serialize, Deserialize)]
struct KnnParams {
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    body: ModelBody,
    seed: Option<u64>,
    label_order: Vec<Command>,
}

impl Model {
    pub fn to_json(&self) -> String {
        let (body, seed) = match self {
            Model::Tree(t) => (
                ModelBody::Tree {
                    params: t.params,
                    nodes: t.nodes.clone(),
                },
                None,
            ),
            Model::Forest(f) => (
                ModelBody::Forest {
                    params: f.params,
                    trees: f.trees.iter().map(|t| t.nodes.clone()).collect(),
                },
                Some(f.seed),
            ),
            Model::Knn(k) => (
                ModelBody::Knn {
                    params: KnnParams { k: k.k },
                    samples: k.samples.clone(),
                },
                None,
            ),
        };
        let file = ModelFile {
            body,
            seed,
            label_order: Command::ALL.to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Model, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.label_order != Command::ALL {
            return Err(ModelError::Invalid("unsupported label_order".into()));
        }
        let model = match file.body {
            ModelBody::Tree { params, nodes } => {
                let t = TreeModel { params, nodes };
                t.validate().map_err(ModelError::Invalid)?;
                Model::Tree(t)
            }
            ModelBody::Forest { params, trees } => {
                if trees.is_empty() {
                    return Err(ModelError::Invalid("forest has no trees".into()));
                }
                let trees = trees
                    .into_iter()
                    .map(|nodes| {
                        let t = TreeModel {
                            params: params.tree,
                            nodes,
                        };
                        t.validate().map(|_| t)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(ModelError::Invalid)?;
                Model::Forest(ForestModel {
                    params,
                    seed: file.seed.unwrap_or(0),
                    trees,
                })
            }
            ModelBody::Knn { params, samples } => {
                if params.k == 0 || params.k > samples.len() {
                    return Err(ModelError::Invalid(format!(
                        "k = {} with {} samples",
                        params.k,
                        samples.len()
                    )));
                }
                if samples.iter().any(|s| !s.scan.channels().iter().all(|v| v.is_finite())) {
                    return Err(ModelError::Invalid("non-finite sample".into()));
                }
                Model::Knn(KnnModel { k: params.k, samples })
            }
        };
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model, ModelError> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }
}
