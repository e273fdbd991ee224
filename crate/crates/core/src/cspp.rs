//! CSPP "8+2" risk factors, the three-level risk rule, and cohort-level
//! exposure statistics.

use serde::{Deserialize, Serialize};

use crate::cohort::{is_missing, Cohort, LabelKind, Labels};
use crate::error::{Error, Result};
use crate::schema::{col, FeatureSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLabel {
    Low,
    Medium,
    High,
}

impl RiskLabel {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<RiskLabel> {
        match code {
            0 => Some(RiskLabel::Low),
            1 => Some(RiskLabel::Medium),
            2 => Some(RiskLabel::High),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::Low => "Low",
            RiskLabel::Medium => "Medium",
            RiskLabel::High => "High",
        }
    }
}

/// The ten screening factors, in CSPP numbering: eight chronic/lifestyle
/// factors followed by prior stroke and prior TIA.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RiskFactors {
    pub hypertension: bool,
    pub diabetes: bool,
    pub heart_disease: bool,
    pub hyperlipidemia: bool,
    pub family_history: bool,
    pub overweight: bool,
    pub smoking: bool,
    pub physical_inactivity: bool,
    pub history_stroke: bool,
    pub history_tia: bool,
}

pub const FACTOR_NAMES: [&str; 10] = [
    "Hypertension",
    "Diabetes",
    "HeartDisease",
    "Hyperlipidemia",
    "FamilyHistoryOfStroke",
    "Overweight",
    "Smoking",
    "PhysicalInactivity",
    "HistoryOfStroke",
    "HistoryOfTIA",
];

impl RiskFactors {
    pub fn to_array(self) -> [bool; 10] {
        [
            self.hypertension,
            self.diabetes,
            self.heart_disease,
            self.hyperlipidemia,
            self.family_history,
            self.overweight,
            self.smoking,
            self.physical_inactivity,
            self.history_stroke,
            self.history_tia,
        ]
    }

    pub fn from_array(a: [bool; 10]) -> Self {
        RiskFactors {
            hypertension: a[0],
            diabetes: a[1],
            heart_disease: a[2],
            hyperlipidemia: a[3],
            family_history: a[4],
            overweight: a[5],
            smoking: a[6],
            physical_inactivity: a[7],
            history_stroke: a[8],
            history_tia: a[9],
        }
    }

    /// Bit `k` set means factor `k` (in CSPP order) is present.
    pub fn from_bits(bits: u16) -> Self {
        let mut a = [false; 10];
        for (k, flag) in a.iter_mut().enumerate() {
            *flag = bits & (1 << k) != 0;
        }
        Self::from_array(a)
    }

    /// Number of factors present among the eight chronic/lifestyle factors.
    pub fn chronic_count(&self) -> usize {
        self.to_array()[..8].iter().filter(|&&f| f).count()
    }
}

pub fn label_risk(f: &RiskFactors) -> RiskLabel {
    let count = f.chronic_count();
    if count >= 3 || f.history_stroke || f.history_tia {
        RiskLabel::High
    } else if count >= 1 && (f.hypertension || f.diabetes || f.heart_disease) {
        RiskLabel::Medium
    } else {
        RiskLabel::Low
    }
}

/// Column bindings and thresholds used to read factors from cohort rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsppConfig {
    /// Factor column names in CSPP order.
    pub factor_columns: [String; 10],
    /// BMI column used when the overweight column is absent.
    pub bmi_column: String,
    pub overweight_bmi: f64,
}

impl Default for CsppConfig {
    fn default() -> Self {
        CsppConfig {
            factor_columns: [
                col::HYPERTENSION,
                col::DIABETES,
                col::HEART_DISEASE,
                col::HYPERLIPIDEMIA,
                col::FAMILY_HISTORY,
                col::OVERWEIGHT,
                col::SMOKING,
                col::PHYSICAL_INACTIVITY,
                col::HISTORY_OF_STROKE,
                col::HISTORY_OF_TIA,
            ]
            .map(str::to_string),
            bmi_column: col::BMI.to_string(),
            overweight_bmi: 24.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSource {
    /// Read from the factor's own column.
    Column,
    /// Overweight derived from BMI.
    BmiThreshold,
    /// The cell was missing; the factor counts as absent.
    ImputedFalse,
    /// Neither the column nor a derivation source exists in the schema.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReading {
    pub factors: RiskFactors,
    pub sources: [FactorSource; 10],
}

impl FactorReading {
    /// Names of factors whose value was imputed as absent.
    pub fn imputed(&self) -> Vec<&'static str> {
        self.sources
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, FactorSource::ImputedFalse | FactorSource::Unavailable))
            .map(|(k, _)| FACTOR_NAMES[k])
            .collect()
    }
}

/// Resolved column indices for repeated factor reads against one schema.
#[derive(Debug, Clone)]
pub struct FactorReader {
    columns: [Option<usize>; 10],
    bmi: Option<usize>,
    overweight_bmi: f64,
}

impl FactorReader {
    pub fn new(schema: &FeatureSchema, cfg: &CsppConfig) -> Self {
        let mut columns = [None; 10];
        for (k, name) in cfg.factor_columns.iter().enumerate() {
            columns[k] = schema.index_of(name);
        }
        FactorReader {
            columns,
            bmi: schema.index_of(&cfg.bmi_column),
            overweight_bmi: cfg.overweight_bmi,
        }
    }

    pub fn read(&self, row: &[f64]) -> FactorReading {
        let mut flags = [false; 10];
        let mut sources = [FactorSource::Unavailable; 10];
        for k in 0..10 {
            let (col, threshold) = match (self.columns[k], k) {
                (Some(c), _) => (Some(c), None),
                (None, 5) => (self.bmi, Some(self.overweight_bmi)),
                (None, _) => (None, None),
            };
            let Some(c) = col else { continue };
            let v = row[c];
            if is_missing(v) {
                sources[k] = FactorSource::ImputedFalse;
                continue;
            }
            match threshold {
                Some(t) => {
                    flags[k] = v >= t;
                    sources[k] = FactorSource::BmiThreshold;
                }
                None => {
                    flags[k] = v > 0.0;
                    sources[k] = FactorSource::Column;
                }
            }
        }
        FactorReading {
            factors: RiskFactors::from_array(flags),
            sources,
        }
    }
}

pub fn derive_factors(row: &[f64], schema: &FeatureSchema, cfg: &CsppConfig) -> FactorReading {
    FactorReader::new(schema, cfg).read(row)
}

/// Label every row of a cohort with its CSPP risk level.
pub fn label_cohort(c: &Cohort, cfg: &CsppConfig) -> Result<Cohort> {
    let reader = FactorReader::new(c.schema(), cfg);
    let values = c
        .rows()
        .take(c.n_rows())
        .map(|r| label_risk(&reader.read(r).factors).code())
        .collect();
    c.with_labels(Some(Labels::new(LabelKind::Risk, values)?))
}

/// Build a ten-column 0/1 cohort of the derived factors (missing → 0),
/// keeping the source labels.
pub fn factor_cohort(c: &Cohort, cfg: &CsppConfig) -> Result<Cohort> {
    let reader = FactorReader::new(c.schema(), cfg);
    let schema = FeatureSchema::new(
        FACTOR_NAMES
            .iter()
            .map(|n| crate::schema::FeatureSpec::categorical(n, 2))
            .collect(),
    )?;
    let mut data = Vec::with_capacity(c.n_rows() * 10);
    for i in 0..c.n_rows() {
        let f = reader.read(c.row(i)).factors;
        data.extend(f.to_array().iter().map(|&b| b as u8 as f64));
    }
    Cohort::from_flat(schema, data, c.labels().cloned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStat {
    pub factor: String,
    pub exposure_rate: f64,
    /// `None` where undefined (history factors, or zero reference incidence).
    pub risk_attribution: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub rows: usize,
    pub factors: Vec<FactorStat>,
}

/// Exposure rate per factor, and risk attribution: a factor's incidence
/// among residents with stroke history over its incidence among the rest.
pub fn cohort_stats(c: &Cohort, cfg: &CsppConfig) -> Result<CohortStats> {
    let n = c.n_rows();
    if n == 0 {
        return Err(Error::EmptyCohort);
    }
    let reader = FactorReader::new(c.schema(), cfg);
    let readings: Vec<[bool; 10]> = (0..n).map(|i| reader.read(c.row(i)).factors.to_array()).collect();
    let with_history: Vec<bool> = readings.iter().map(|f| f[8]).collect();
    let n_hist = with_history.iter().filter(|&&h| h).count();
    let n_rest = n - n_hist;

    let factors = (0..10)
        .map(|k| {
            let exposed = readings.iter().filter(|f| f[k]).count();
            let risk_attribution = if k >= 8 || n_hist == 0 || n_rest == 0 {
                None
            } else {
                let in_hist = readings
                    .iter()
                    .zip(&with_history)
                    .filter(|(f, &h)| h && f[k])
                    .count() as f64
                    / n_hist as f64;
                let in_rest = readings
                    .iter()
                    .zip(&with_history)
                    .filter(|(f, &h)| !h && f[k])
                    .count() as f64
                    / n_rest as f64;
                (in_rest > 0.0).then(|| in_hist / in_rest)
            };
            FactorStat {
                factor: FACTOR_NAMES[k].to_string(),
                exposure_rate: exposed as f64 / n as f64,
                risk_attribution,
            }
        })
        .collect();
    Ok(CohortStats { rows: n, factors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::MISSING;
    use crate::schema::FeatureSpec;

    fn with(flags: &[usize]) -> RiskFactors {
        let mut a = [false; 10];
        for &k in flags {
            a[k] = true;
        }
        RiskFactors::from_array(a)
    }

    #[test]
    fn three_chronic_factors_is_high() {
        // hypertension, diabetes, smoking
        assert_eq!(label_risk(&with(&[0, 1, 6])), RiskLabel::High);
    }

    #[test]
    fn hypertension_alone_is_medium() {
        assert_eq!(label_risk(&with(&[0])), RiskLabel::Medium);
    }

    #[test]
    fn nothing_is_low() {
        assert_eq!(label_risk(&RiskFactors::default()), RiskLabel::Low);
    }

    #[test]
    fn tia_alone_is_high() {
        assert_eq!(label_risk(&with(&[9])), RiskLabel::High);
    }

    #[test]
    fn two_lifestyle_factors_stay_low() {
        assert_eq!(label_risk(&with(&[5, 6])), RiskLabel::Low);
    }

    fn factor_schema(with_overweight: bool) -> FeatureSchema {
        let mut f: Vec<FeatureSpec> = CsppConfig::default()
            .factor_columns
            .iter()
            .filter(|n| with_overweight || n.as_str() != col::OVERWEIGHT)
            .map(|n| FeatureSpec::categorical(n, 2))
            .collect();
        f.push(FeatureSpec::numerical(col::BMI, None, None));
        FeatureSchema::new(f).unwrap()
    }

    #[test]
    fn reads_hypertension_column() {
        let schema = factor_schema(false);
        let mut row = vec![0.0; schema.len()];
        row[0] = 1.0;
        *row.last_mut().unwrap() = 21.0;
        let r = derive_factors(&row, &schema, &CsppConfig::default());
        assert_eq!(r.factors, with(&[0]));
        assert!(r.imputed().is_empty());
    }

    #[test]
    fn overweight_from_bmi_when_column_absent() {
        let schema = factor_schema(false);
        let mut row = vec![0.0; schema.len()];
        *row.last_mut().unwrap() = 27.0;
        let r = derive_factors(&row, &schema, &CsppConfig::default());
        assert!(r.factors.overweight);
        assert_eq!(r.sources[5], FactorSource::BmiThreshold);

        *row.last_mut().unwrap() = 23.9;
        assert!(!derive_factors(&row, &schema, &CsppConfig::default()).factors.overweight);
        // exactly at the cutoff counts as overweight
        *row.last_mut().unwrap() = 24.0;
        assert!(derive_factors(&row, &schema, &CsppConfig::default()).factors.overweight);
    }

    #[test]
    fn explicit_overweight_column_wins() {
        let schema = factor_schema(true);
        let mut row = vec![0.0; schema.len()];
        *row.last_mut().unwrap() = 30.0;
        let r = derive_factors(&row, &schema, &CsppConfig::default());
        assert!(!r.factors.overweight);
        assert_eq!(r.sources[5], FactorSource::Column);
    }

    #[test]
    fn missing_smoking_is_imputed_false() {
        let schema = factor_schema(false);
        let mut row = vec![0.0; schema.len()];
        let smoking = schema.index_of(col::SMOKING).unwrap();
        row[smoking] = MISSING;
        *row.last_mut().unwrap() = 20.0;
        let r = derive_factors(&row, &schema, &CsppConfig::default());
        assert!(!r.factors.smoking);
        assert_eq!(r.sources[6], FactorSource::ImputedFalse);
        assert_eq!(r.imputed(), vec!["Smoking"]);
    }

    fn stats_cohort(rows: Vec<Vec<f64>>) -> Cohort {
        Cohort::new(factor_schema(false), rows, None).unwrap()
    }

    #[test]
    fn exposure_is_a_ratio() {
        let schema = factor_schema(false);
        let rows = (0..10)
            .map(|i| {
                let mut r = vec![0.0; schema.len()];
                r[0] = (i < 5) as u8 as f64;
                *r.last_mut().unwrap() = 20.0;
                r
            })
            .collect();
        let s = cohort_stats(&stats_cohort(rows), &CsppConfig::default()).unwrap();
        assert_eq!(s.factors[0].exposure_rate, 0.5);
        assert!(s.factors.iter().all(|f| f.risk_attribution.is_none()));
    }

    #[test]
    fn risk_attribution_ratio() {
        let schema = factor_schema(false);
        let hist = schema.index_of(col::HISTORY_OF_STROKE).unwrap();
        // 4 history rows, 2 hypertensive; 6 other rows, 1 hypertensive
        let rows = (0..10)
            .map(|i| {
                let mut r = vec![0.0; schema.len()];
                r[hist] = (i < 4) as u8 as f64;
                r[0] = matches!(i, 0 | 1 | 4) as u8 as f64;
                *r.last_mut().unwrap() = 20.0;
                r
            })
            .collect();
        let s = cohort_stats(&stats_cohort(rows), &CsppConfig::default()).unwrap();
        let ra = s.factors[0].risk_attribution.unwrap();
        assert!((ra - (0.5 / (1.0 / 6.0))).abs() < 1e-12);
        assert!(s.factors[8].risk_attribution.is_none());
        assert!(s.factors[9].risk_attribution.is_none());
        // diabetes absent everywhere: reference incidence 0
        assert!(s.factors[1].risk_attribution.is_none());
    }

    #[test]
    fn empty_cohort_stats_is_an_error() {
        assert!(matches!(
            cohort_stats(&stats_cohort(vec![]), &CsppConfig::default()),
            Err(Error::EmptyCohort)
        ));
    }
}
