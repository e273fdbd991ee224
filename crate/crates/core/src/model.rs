//! A common prediction interface over trees, forests and logistic models.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::Result;
use crate::logit::{fit_logit, relabel_binary, LogitConfig, LogitModel};
use crate::tree::{argmax, fit_forest, fit_tree, ForestModel, TrainConfig, TreeModel};

pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// Class-probability vector summing to 1.
    fn predict_proba(&self, row: &[f64]) -> Vec<f64>;

    fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.predict_proba(row))
    }

    fn predict_cohort(&self, c: &Cohort) -> Vec<usize> {
        (0..c.n_rows()).map(|i| self.predict(c.row(i))).collect()
    }
}

impl Classifier for TreeModel {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        TreeModel::predict_proba(self, row)
    }
}

impl Classifier for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        ForestModel::predict_proba(self, row)
    }
}

impl Classifier for LogitModel {
    fn n_features(&self) -> usize {
        LogitModel::n_features(self)
    }
    fn n_classes(&self) -> usize {
        2
    }
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let p = LogitModel::predict_proba(self, row);
        vec![1.0 - p, p]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Logit(LogitModel),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Forest(_) => "forest",
            Model::Logit(_) => "logit",
        }
    }

    /// Normalized MDI importance; `None` for logistic models.
    pub fn mdi_importance(&self) -> Option<Vec<f64>> {
        match self {
            Model::Tree(t) => Some(t.mdi_importance()),
            Model::Forest(f) => Some(f.mdi_importance()),
            Model::Logit(_) => None,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::Tree(t) => t,
            Model::Forest(f) => f,
            Model::Logit(l) => l,
        }
    }
}

impl Classifier for Model {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        self.inner().predict_proba(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tree,
    Forest,
    Logit,
}

impl std::str::FromStr for ModelKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(ModelKind::Tree),
            "forest" => Ok(ModelKind::Forest),
            "logit" => Ok(ModelKind::Logit),
            other => Err(crate::error::Error::Config(format!("unknown model kind {other}"))),
        }
    }
}

/// Everything needed to (re)fit a model on a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub logit: LogitConfig,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            train: TrainConfig::default(),
            logit: LogitConfig::default(),
        }
    }

    pub fn fit(&self, data: &Cohort) -> Result<Model> {
        Ok(match self.kind {
            ModelKind::Tree => Model::Tree(fit_tree(data, &self.train)?),
            ModelKind::Forest => Model::Forest(fit_forest(data, &self.train)?),
            ModelKind::Logit => Model::Logit(fit_logit(&relabel_binary(data)?, &self.logit)?.0),
        })
    }
}
