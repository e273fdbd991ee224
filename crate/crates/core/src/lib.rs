//! Stroke risk stratification toolkit.
//!
//! The crate covers the whole screening pipeline: schema-typed cohort
//! ingestion and cleansing, the CSPP "8+2" rule labeler, CART trees and
//! random forests with impurity importance, logistic regression with Wald
//! inference, model explanations (permutation importance, exact Shapley
//! values, path-dependent TreeSHAP), evaluation experiments, a calibrated
//! synthetic cohort generator, and the model bundle / inference handlers
//! behind the command-line tool and JSON service.

pub mod bundle;
pub mod cohort;
pub mod cspp;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod logit;
pub mod model;
pub mod rng;
pub mod schema;
pub mod service;
pub mod synth;
pub mod tree;

pub use cohort::{Cohort, LabelKind, Labels, MISSING};
pub use cspp::{RiskFactors, RiskLabel};
pub use error::{Error, Result};
pub use model::{Classifier, Model};
pub use schema::{FeatureKind, FeatureSchema, FeatureSpec};
