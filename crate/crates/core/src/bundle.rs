//! Model bundles: a trained model together with everything needed to serve
//! it, persisted as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{CleanseConfig, Cohort, LabelKind};
use crate::cspp::CsppConfig;
use crate::error::{Error, Result};
use crate::model::{Classifier, Model, ModelSpec};
use crate::schema::FeatureSchema;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config: ModelSpec,
    /// SHA-256 fingerprint of the training cohort.
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model: Model,
    /// Columns a request may carry; risk labels are read from these.
    pub schema: FeatureSchema,
    /// Model input columns, in order, each present in `schema`.
    pub model_features: Vec<String>,
    /// Names of the model's output classes.
    pub class_names: Vec<String>,
    pub cleansing: CleanseConfig,
    pub cspp: CsppConfig,
    pub provenance: Provenance,
    /// Background rows (model input order) for explaining non-tree models.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub background: Vec<Vec<f64>>,
}

impl ModelBundle {
    /// Assemble and check a bundle. `training` is the cohort the model was
    /// fitted on and fixes `model_features` and the fingerprint.
    pub fn new(
        model: Model,
        schema: FeatureSchema,
        training: &Cohort,
        cleansing: CleanseConfig,
        cspp: CsppConfig,
        spec: ModelSpec,
        seed: u64,
    ) -> Result<Self> {
        let class_names = match &model {
            Model::Logit(_) => LabelKind::Binary.class_names(),
            _ => training.require_labels()?.kind.class_names(),
        };
        let b = ModelBundle {
            class_names,
            format_version: FORMAT_VERSION,
            model,
            schema,
            model_features: training.schema().names().iter().map(|s| s.to_string()).collect(),
            cleansing,
            cspp,
            provenance: Provenance {
                seed,
                config: spec,
                data_fingerprint: training.fingerprint(),
            },
            background: Vec::new(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_background(mut self, rows: Vec<Vec<f64>>) -> Result<Self> {
        self.background = rows;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::BundleVersion(self.format_version));
        }
        self.schema.validate()?;
        if self.model_features.len() != self.model.n_features() {
            return Err(Error::Model(format!(
                "model takes {} features, bundle lists {}",
                self.model.n_features(),
                self.model_features.len()
            )));
        }
        if self.class_names.len() != self.model.n_classes() {
            return Err(Error::Model("class name count does not match the model".into()));
        }
        for f in &self.model_features {
            self.schema.require(f)?;
        }
        if self.background.iter().any(|r| r.len() != self.model_features.len()) {
            return Err(Error::Model("background row width mismatch".into()));
        }
        Ok(())
    }

    /// Indices of the model inputs within `schema`.
    pub fn model_columns(&self) -> Result<Vec<usize>> {
        self.model_features.iter().map(|f| self.schema.require(f)).collect()
    }

    pub fn background_cohort(&self) -> Result<Option<Cohort>> {
        if self.background.is_empty() {
            return Ok(None);
        }
        let cols = self.model_columns()?;
        Ok(Some(Cohort::new(self.schema.select(&cols), self.background.clone(), None)?))
    }

    /// Serialized form. Floats are written in shortest round-trip notation,
    /// so save → load → save reproduces the bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::BundleVersion(v as u32)),
            None => return Err(Error::Model("bundle has no format_version".into())),
        }
        let b: ModelBundle = serde_json::from_value(value)?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Labels;
    use crate::model::ModelKind;
    use crate::schema::FeatureSpec;

    fn training() -> Cohort {
        let schema = FeatureSchema::new(vec![
            FeatureSpec::numerical("a", None, None),
            FeatureSpec::categorical("b", 2),
        ])
        .unwrap();
        let rows = (0..40).map(|i| vec![i as f64 * 0.37, (i % 2) as f64]).collect();
        let y = (0..40).map(|i| u32::from(i % 3 == 0)).collect();
        Cohort::new(schema, rows, Some(Labels::new(LabelKind::Binary, y).unwrap())).unwrap()
    }

    fn bundle(kind: ModelKind) -> ModelBundle {
        let c = training();
        let spec = ModelSpec::new(kind);
        let model = spec.fit(&c).unwrap();
        ModelBundle::new(
            model,
            c.schema().clone(),
            &c,
            CleanseConfig::default(),
            CsppConfig::default(),
            spec,
            7,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for kind in [ModelKind::Tree, ModelKind::Forest, ModelKind::Logit] {
            let b = bundle(kind);
            let bytes = b.to_bytes().unwrap();
            let back = ModelBundle::from_bytes(&bytes).unwrap();
            assert_eq!(back, b);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let b = bundle(ModelKind::Tree);
        let text = String::from_utf8(b.to_bytes().unwrap()).unwrap();
        let text = text.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(matches!(ModelBundle::from_bytes(text.as_bytes()), Err(Error::BundleVersion(9))));
    }
}
