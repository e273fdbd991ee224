//! Request handling for the read-only inference service. Handlers are pure
//! functions of an immutable bundle and the request body, so the HTTP layer
//! only moves bytes.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bundle::ModelBundle;
use crate::cohort::{Cohort, MISSING};
use crate::cspp::{label_risk, FactorReader};
use crate::error::Result;
use crate::explain::explain_model;
use crate::model::Classifier;
use crate::schema::FeatureKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceError {
    pub status: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub reason: String,
}

impl ServiceError {
    fn bad(field: Option<&str>, reason: impl Into<String>) -> Self {
        ServiceError {
            status: 400,
            field: field.map(str::to_string),
            reason: reason.into(),
        }
    }

    fn out_of_range(field: &str, reason: String) -> Self {
        ServiceError {
            status: 422,
            field: Some(field.to_string()),
            reason,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub risk_label: String,
    /// Predicted probability of the last model class.
    pub probability: f64,
    /// Schema columns absent, null or -1 in the request, imputed as missing.
    pub missing_imputed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub base_value: f64,
    pub contributions: Vec<Contribution>,
}

/// A parsed request: one value per schema column.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub row: Vec<f64>,
    pub missing_imputed: Vec<String>,
}

pub struct Service {
    bundle: ModelBundle,
    model_columns: Vec<usize>,
    reader: FactorReader,
    background: Option<Cohort>,
}

impl Service {
    pub fn new(bundle: ModelBundle) -> Result<Self> {
        bundle.validate()?;
        Ok(Service {
            model_columns: bundle.model_columns()?,
            reader: FactorReader::new(&bundle.schema, &bundle.cspp),
            background: bundle.background_cohort()?,
            bundle,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    fn target_class(&self) -> usize {
        self.bundle.model.n_classes() - 1
    }

    pub fn schema(&self) -> Value {
        let b = &self.bundle;
        json!({
            "features": b.schema.features,
            "model_kind": b.model.kind_name(),
            "model_features": b.model_features,
            "classes": b.class_names,
            "probability_of": b.class_names[self.target_class()],
            "missing_sentinel": MISSING,
            "cspp": {
                "factor_columns": b.cspp.factor_columns,
                "bmi_column": b.cspp.bmi_column,
                "overweight_bmi": b.cspp.overweight_bmi,
                "high": "at least 3 of the first 8 factors, or prior stroke, or prior TIA",
                "medium": "1 or 2 of the first 8 factors including hypertension, diabetes or heart disease",
            },
        })
    }

    pub fn parse(&self, payload: &Value) -> std::result::Result<Request, ServiceError> {
        let obj: &Map<String, Value> = payload
            .as_object()
            .ok_or_else(|| ServiceError::bad(None, "body must be a JSON object of feature values"))?;
        let schema = &self.bundle.schema;
        for key in obj.keys() {
            if schema.index_of(key).is_none() {
                return Err(ServiceError::bad(Some(key), "unknown feature"));
            }
        }
        let mut row = Vec::with_capacity(schema.len());
        let mut missing_imputed = Vec::new();
        for spec in &schema.features {
            let name = spec.name.as_str();
            let v = match obj.get(name) {
                None | Some(Value::Null) => None,
                Some(Value::Number(n)) => Some(
                    n.as_f64()
                        .ok_or_else(|| ServiceError::bad(Some(name), "number not representable"))?,
                ),
                Some(Value::Bool(b)) if spec.kind == FeatureKind::Categorical => Some(f64::from(u8::from(*b))),
                Some(_) => return Err(ServiceError::bad(Some(name), "expected a number or null")),
            };
            let v = match v {
                Some(x) if x != MISSING => x,
                _ => {
                    missing_imputed.push(name.to_string());
                    row.push(MISSING);
                    continue;
                }
            };
            match spec.kind {
                FeatureKind::Categorical => {
                    if v.fract() != 0.0 {
                        return Err(ServiceError::bad(Some(name), "categorical code must be an integer"));
                    }
                    let k = spec.categories.unwrap_or(0);
                    if v < 0.0 || (k > 0 && v >= k as f64) {
                        return Err(ServiceError::out_of_range(
                            name,
                            format!("code {v} outside 0..{k}"),
                        ));
                    }
                }
                FeatureKind::Numerical => {
                    if let Some([lo, hi]) = spec.range {
                        if !(lo..=hi).contains(&v) {
                            return Err(ServiceError::out_of_range(
                                name,
                                format!("{v} outside [{lo}, {hi}]"),
                            ));
                        }
                    }
                }
            }
            row.push(v);
        }
        Ok(Request { row, missing_imputed })
    }

    fn model_row(&self, req: &Request) -> Vec<f64> {
        self.model_columns.iter().map(|&j| req.row[j]).collect()
    }

    pub fn predict(&self, payload: &Value) -> std::result::Result<PredictResponse, ServiceError> {
        let req = self.parse(payload)?;
        let reading = self.reader.read(&req.row);
        let probability = self.bundle.model.predict_proba(&self.model_row(&req))[self.target_class()];
        Ok(PredictResponse {
            risk_label: label_risk(&reading.factors).as_str().to_string(),
            probability,
            missing_imputed: req.missing_imputed,
        })
    }

    pub fn explain(&self, payload: &Value) -> std::result::Result<ExplainResponse, ServiceError> {
        let req = self.parse(payload)?;
        let e = explain_model(
            &self.bundle.model,
            &self.model_row(&req),
            self.target_class(),
            self.background.as_ref(),
        )
        .map_err(|e| ServiceError {
            status: 500,
            field: None,
            reason: e.to_string(),
        })?;
        Ok(ExplainResponse {
            base_value: e.base_value,
            contributions: self
                .bundle
                .model_features
                .iter()
                .zip(e.contributions)
                .map(|(f, value)| Contribution {
                    feature: f.clone(),
                    value,
                })
                .collect(),
        })
    }

    /// Route one request. Returns the status code and JSON body.
    pub fn handle(&self, method: &str, path: &str, body: &[u8]) -> (u16, String) {
        let parse_body = || -> std::result::Result<Value, ServiceError> {
            serde_json::from_slice(body).map_err(|e| ServiceError::bad(None, format!("invalid JSON: {e}")))
        };
        let result = match (method, path) {
            ("GET", "/schema") => Ok(self.schema().to_string()),
            ("POST", "/predict") => parse_body()
                .and_then(|v| self.predict(&v))
                .map(|r| serde_json::to_string(&r).expect("serializable")),
            ("POST", "/explain") => parse_body()
                .and_then(|v| self.explain(&v))
                .map(|r| serde_json::to_string(&r).expect("serializable")),
            (_, "/schema" | "/predict" | "/explain") => Err(ServiceError {
                status: 405,
                field: None,
                reason: format!("method {method} not allowed"),
            }),
            _ => Err(ServiceError {
                status: 404,
                field: None,
                reason: format!("no route {path}"),
            }),
        };
        match result {
            Ok(body) => (200, body),
            Err(e) => (e.status, e.to_json()),
        }
    }
}
