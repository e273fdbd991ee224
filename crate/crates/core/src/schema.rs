//! Feature schema: the ordered list of cohort columns.
//!
//! Column order is fixed by the schema and defines the column index used by
//! every model, explanation and export downstream.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Valid `[min, max]` for numerical features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Number of category codes (`0..categories`) for categorical features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<u32>,
}

impl FeatureSpec {
    pub fn categorical(name: &str, categories: u32) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            unit: None,
            range: None,
            categories: Some(categories),
        }
    }

    pub fn numerical(name: &str, unit: Option<&str>, range: Option<[f64; 2]>) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Numerical,
            unit: unit.map(str::to_string),
            range,
            categories: None,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.kind == FeatureKind::Numerical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = FeatureSchema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {}", f.name)));
            }
            match f.kind {
                FeatureKind::Numerical => {
                    if let Some([lo, hi]) = f.range {
                        if !(lo < hi) {
                            return Err(Error::Schema(format!(
                                "{}: range min {lo} must be below max {hi}",
                                f.name
                            )));
                        }
                    }
                }
                FeatureKind::Categorical => {
                    if f.range.is_some() {
                        return Err(Error::Schema(format!(
                            "{}: categorical features take `categories`, not `range`",
                            f.name
                        )));
                    }
                    if f.categories == Some(0) {
                        return Err(Error::Schema(format!("{}: zero categories", f.name)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::ColumnAbsent(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// Sub-schema with the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> FeatureSchema {
        FeatureSchema {
            features: columns.iter().map(|&i| self.features[i].clone()).collect(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: FeatureSchema =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The resident survey schema that survives cleansing: lifestyle,
    /// demographic, medical measurement and "8+2" factor columns.
    pub fn resident_survey() -> Self {
        use FeatureSpec as F;
        let features = vec![
            F::categorical(col::FAVOR, 3),
            F::categorical(col::ALCOHOL, 2),
            F::categorical(col::VEGETABLE_FREQUENCY, 4),
            F::categorical(col::FRUIT_FREQUENCY, 4),
            F::categorical(col::MEAT_AND_VEGETABLES, 3),
            F::categorical(col::MEDICAL_PAYMENT, 4),
            F::categorical(col::SEX, 2),
            F::numerical(col::AGE, Some("years"), Some([18.0, 110.0])),
            F::numerical(col::BMI, Some("kg/m2"), Some([10.0, 60.0])),
            F::categorical(col::RETIRE, 2),
            F::numerical(col::HEIGHT, Some("cm"), Some([120.0, 220.0])),
            F::numerical(col::WEIGHT, Some("kg"), Some([25.0, 250.0])),
            F::categorical(col::ETHNICITY, 2),
            F::categorical(col::OCCUPATION, 5),
            F::categorical(col::MARITAL_STATUS, 4),
            F::categorical(col::EDUCATION, 5),
            F::numerical(col::TC, Some("mmol/L"), Some([1.0, 15.0])),
            F::numerical(col::TG, Some("mmol/L"), Some([0.1, 20.0])),
            F::numerical(col::HDL, Some("mmol/L"), Some([0.1, 5.0])),
            F::numerical(col::LDL, Some("mmol/L"), Some([0.1, 10.0])),
            F::numerical(col::HCY, Some("umol/L"), Some([1.0, 100.0])),
            F::numerical(col::FBG, Some("mmol/L"), Some([1.0, 35.0])),
            F::numerical(col::PULSE, Some("bpm"), Some([30.0, 200.0])),
            F::numerical(col::SYSTOLIC_BP, Some("mmHg"), Some([60.0, 260.0])),
            F::numerical(col::DIASTOLIC_BP, Some("mmHg"), Some([30.0, 160.0])),
            F::categorical(col::SMOKING, 2),
            F::categorical(col::PHYSICAL_INACTIVITY, 2),
            F::categorical(col::HEART_DISEASE, 2),
            F::categorical(col::HYPERTENSION, 2),
            F::categorical(col::HYPERLIPIDEMIA, 2),
            F::categorical(col::HISTORY_OF_STROKE, 2),
            F::categorical(col::DIABETES, 2),
            F::categorical(col::FAMILY_HISTORY, 2),
            F::categorical(col::HISTORY_OF_TIA, 2),
        ];
        FeatureSchema { features }
    }
}

/// Column names of the resident survey schema.
pub mod col {
    pub const FAVOR: &str = "Favor";
    pub const ALCOHOL: &str = "Alcohol";
    pub const VEGETABLE_FREQUENCY: &str = "VegetableFrequency";
    pub const FRUIT_FREQUENCY: &str = "FruitFrequency";
    pub const MEAT_AND_VEGETABLES: &str = "MeatAndVegetables";
    pub const MEDICAL_PAYMENT: &str = "MedicalPaymentMethod";
    pub const SEX: &str = "Sex";
    pub const AGE: &str = "Age";
    pub const BMI: &str = "BMI";
    pub const RETIRE: &str = "Retire";
    pub const HEIGHT: &str = "Height";
    pub const WEIGHT: &str = "Weight";
    pub const ETHNICITY: &str = "Ethnicity";
    pub const OCCUPATION: &str = "Occupation";
    pub const MARITAL_STATUS: &str = "MaritalStatus";
    pub const EDUCATION: &str = "EducationLevel";
    pub const TC: &str = "TC";
    pub const TG: &str = "TG";
    pub const HDL: &str = "HDL";
    pub const LDL: &str = "LDL";
    pub const HCY: &str = "HCY";
    pub const FBG: &str = "FBG";
    pub const PULSE: &str = "Pulse";
    pub const SYSTOLIC_BP: &str = "SystolicBP";
    pub const DIASTOLIC_BP: &str = "DiastolicBP";
    pub const SMOKING: &str = "Smoking";
    pub const PHYSICAL_INACTIVITY: &str = "PhysicalInactivity";
    pub const HEART_DISEASE: &str = "HeartDisease";
    pub const HYPERTENSION: &str = "Hypertension";
    pub const HYPERLIPIDEMIA: &str = "Hyperlipidemia";
    pub const HISTORY_OF_STROKE: &str = "HistoryOfStroke";
    pub const DIABETES: &str = "Diabetes";
    pub const FAMILY_HISTORY: &str = "FamilyHistoryOfStroke";
    pub const HISTORY_OF_TIA: &str = "HistoryOfTIA";
    /// Not part of the surveyed schema; overweight is derived from BMI
    /// unless a cohort carries this column explicitly.
    pub const OVERWEIGHT: &str = "Overweight";
}
