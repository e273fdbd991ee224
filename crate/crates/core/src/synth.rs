//! Seedable synthetic resident cohorts calibrated to published factor
//! exposure rates.
//!
//! Everything beyond the exposure rates is synthetic construction: the
//! factor couplings of the numeric measurements, the prior-stroke model and
//! the latent stroke outcome are defaults chosen so that blood pressure
//! dominates risk and HDL is protective. None of it is survey data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{Cohort, LabelKind, Labels, MISSING};
use crate::cspp::{label_risk, RiskFactors, FACTOR_NAMES};
use crate::error::{Error, Result};
use crate::logit::sigmoid;
use crate::rng::{derive_seed, rng_from_seed};
use crate::schema::{col, FeatureKind, FeatureSchema};

/// Probability mass below which a truncation window is rejected.
const MIN_MASS: f64 = 1e-12;
/// Acceptance rate below which sampling goes straight to the inverse CDF.
const REJECTION_MIN_MASS: f64 = 0.05;
const REJECTION_TRIES: usize = 64;

/// Chronic factors in CSPP order, followed by prior TIA. Prior stroke is
/// generated separately from these.
pub const SAMPLED_FACTORS: [&str; 9] = [
    col::HYPERTENSION,
    col::DIABETES,
    col::HEART_DISEASE,
    col::HYPERLIPIDEMIA,
    col::FAMILY_HISTORY,
    col::OVERWEIGHT,
    col::SMOKING,
    col::PHYSICAL_INACTIVITY,
    col::HISTORY_OF_TIA,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub sd: f64,
    pub bounds: [f64; 2],
}

impl TruncNormal {
    pub fn new(mean: f64, sd: f64, low: f64, high: f64) -> Self {
        TruncNormal {
            mean,
            sd,
            bounds: [low, high],
        }
    }

    fn std_normal() -> Normal {
        Normal::new(0.0, 1.0).expect("unit normal")
    }

    /// Probability mass of the untruncated normal inside `[low, high]`.
    pub fn mass_within(&self, low: f64, high: f64) -> f64 {
        let n = Self::std_normal();
        n.cdf((high - self.mean) / self.sd) - n.cdf((low - self.mean) / self.sd)
    }

    pub fn mass(&self) -> f64 {
        self.mass_within(self.bounds[0], self.bounds[1])
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.sd > 0.0 && self.sd.is_finite() && self.mean.is_finite()) {
            return Err(Error::Config(format!("{what}: sd must be positive and finite")));
        }
        if !(self.bounds[0] < self.bounds[1]) {
            return Err(Error::Config(format!("{what}: bounds must be ordered")));
        }
        if self.mass() < MIN_MASS {
            return Err(Error::Config(format!(
                "{what}: infeasible truncation, mass {:e} inside bounds",
                self.mass()
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.sample_within(rng, self.bounds[0], self.bounds[1])
    }

    /// Rejection sampling when the window holds enough mass, inverse CDF
    /// otherwise (or after `REJECTION_TRIES` misses).
    pub fn sample_within(&self, rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
        if self.mass_within(low, high) >= REJECTION_MIN_MASS {
            for _ in 0..REJECTION_TRIES {
                let z: f64 = rng.sample(StandardNormal);
                let x = self.mean + self.sd * z;
                if (low..=high).contains(&x) {
                    return x;
                }
            }
        }
        let n = Self::std_normal();
        let a = n.cdf((low - self.mean) / self.sd);
        let b = n.cdf((high - self.mean) / self.sd);
        if b <= a {
            // Window lies entirely in a tail the CDF cannot resolve.
            return if high < self.mean { high } else { low };
        }
        let u = a + (b - a) * rng.random::<f64>();
        (self.mean + self.sd * n.inverse_cdf(u)).clamp(low, high)
    }
}

/// Distribution used instead of the base one when `factor` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub factor: String,
    #[serde(flatten)]
    pub dist: TruncNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTarget {
    #[serde(flatten)]
    pub dist: TruncNormal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<Coupling>,
}

impl NumericTarget {
    fn plain(mean: f64, sd: f64, low: f64, high: f64) -> Self {
        NumericTarget {
            dist: TruncNormal::new(mean, sd, low, high),
            coupled: None,
        }
    }

    fn coupled(self, factor: &str, mean: f64, sd: f64, low: f64, high: f64) -> Self {
        NumericTarget {
            coupled: Some(Coupling {
                factor: factor.to_string(),
                dist: TruncNormal::new(mean, sd, low, high),
            }),
            ..self
        }
    }

    fn pick(&self, factors: &BTreeMap<&str, bool>) -> &TruncNormal {
        match &self.coupled {
            Some(c) if factors.get(c.factor.as_str()).copied().unwrap_or(false) => &c.dist,
            _ => &self.dist,
        }
    }
}

/// Prior stroke: `P(history | factors) = sigmoid(b + Σ w_k · f_k)` with `b`
/// solved so the expected exposure equals `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryModel {
    pub rate: f64,
    pub log_odds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTerm {
    pub feature: String,
    pub coefficient: f64,
    #[serde(default)]
    pub center: f64,
}

/// Ground-truth stroke outcome: `sigmoid(intercept + Σ c · (x − center))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub terms: Vec<OutcomeTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    /// Probability that a row's recorded risk level is replaced by one of the
    /// other two levels, drawn uniformly.
    pub label_noise: f64,
    /// Minimum systolic minus diastolic pressure in generated rows.
    pub min_pulse_pressure: f64,
    pub overweight_bmi: f64,
    /// Target exposure per sampled factor.
    pub exposure: BTreeMap<String, f64>,
    pub history_of_stroke: HistoryModel,
    pub numeric: BTreeMap<String, NumericTarget>,
    /// Category weights per categorical feature; code `i` has weight `i`.
    pub categorical: BTreeMap<String, Vec<f64>>,
    /// Share of cells set to MISSING per column.
    #[serde(default)]
    pub missing: BTreeMap<String, f64>,
    pub outcome: OutcomeModel,
}

fn map<V>(pairs: &[(&str, V)]) -> BTreeMap<String, V>
where
    V: Clone,
{
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        use col::*;
        let exposure = map(&[
            (HYPERTENSION, 0.5158),
            (HYPERLIPIDEMIA, 0.3765),
            (PHYSICAL_INACTIVITY, 0.3892),
            (OVERWEIGHT, 0.3373),
            (SMOKING, 0.2058),
            (FAMILY_HISTORY, 0.0999),
            (DIABETES, 0.0709),
            (HEART_DISEASE, 0.0052),
            (HISTORY_OF_TIA, 0.0023),
        ]);
        // Log risk attributions, so the attribution of each factor points the
        // same way as the published one.
        let log_odds = map(&[
            (HYPERTENSION, 1.187f64.ln()),
            (HYPERLIPIDEMIA, 0.5846f64.ln()),
            (PHYSICAL_INACTIVITY, 1.721f64.ln()),
            (OVERWEIGHT, 0.6844f64.ln()),
            (SMOKING, 1.539f64.ln()),
            (FAMILY_HISTORY, 1.590f64.ln()),
            (DIABETES, 2.613f64.ln()),
            (HEART_DISEASE, 11.84f64.ln()),
        ]);
        let n = NumericTarget::plain;
        let numeric = map(&[
            (AGE, n(58.0, 11.0, 35.0, 90.0)),
            (HEIGHT, n(163.0, 8.0, 140.0, 195.0)),
            (BMI, n(21.8, 1.6, 16.0, 24.0).coupled(OVERWEIGHT, 26.8, 2.4, 24.0, 40.0)),
            (TC, n(4.6, 0.8, 2.5, 9.0).coupled(HYPERLIPIDEMIA, 6.0, 1.0, 3.0, 11.0)),
            (TG, n(1.3, 0.5, 0.3, 5.0).coupled(HYPERLIPIDEMIA, 2.6, 1.0, 0.5, 10.0)),
            (HDL, n(1.45, 0.3, 0.6, 2.8).coupled(HYPERLIPIDEMIA, 1.05, 0.25, 0.4, 2.5)),
            (LDL, n(2.6, 0.6, 1.0, 5.5).coupled(HYPERLIPIDEMIA, 3.7, 0.8, 1.5, 7.0)),
            (HCY, n(12.0, 4.0, 4.0, 40.0)),
            (FBG, n(5.2, 0.6, 3.5, 7.0).coupled(DIABETES, 8.5, 2.0, 5.0, 20.0)),
            (PULSE, n(75.0, 9.0, 50.0, 120.0)),
            (SYSTOLIC_BP, n(122.0, 11.0, 90.0, 170.0).coupled(HYPERTENSION, 152.0, 15.0, 110.0, 220.0)),
            (DIASTOLIC_BP, n(76.0, 8.0, 50.0, 110.0).coupled(HYPERTENSION, 94.0, 10.0, 60.0, 130.0)),
        ]);
        let categorical = map(&[
            (FAVOR, vec![0.45, 0.35, 0.20]),
            (ALCOHOL, vec![0.75, 0.25]),
            (VEGETABLE_FREQUENCY, vec![0.05, 0.15, 0.35, 0.45]),
            (FRUIT_FREQUENCY, vec![0.15, 0.30, 0.35, 0.20]),
            (MEAT_AND_VEGETABLES, vec![0.20, 0.60, 0.20]),
            (MEDICAL_PAYMENT, vec![0.60, 0.25, 0.10, 0.05]),
            (SEX, vec![0.48, 0.52]),
            (RETIRE, vec![0.60, 0.40]),
            (ETHNICITY, vec![0.995, 0.005]),
            (OCCUPATION, vec![0.40, 0.20, 0.15, 0.15, 0.10]),
            (MARITAL_STATUS, vec![0.05, 0.85, 0.02, 0.08]),
            (EDUCATION, vec![0.25, 0.35, 0.25, 0.10, 0.05]),
        ]);
        let t = |feature: &str, coefficient: f64, center: f64| OutcomeTerm {
            feature: feature.to_string(),
            coefficient,
            center,
        };
        CalibrationTargets {
            label_noise: 0.03,
            min_pulse_pressure: 15.0,
            overweight_bmi: 24.0,
            exposure,
            history_of_stroke: HistoryModel {
                rate: 0.0483,
                log_odds,
            },
            numeric,
            categorical,
            missing: BTreeMap::new(),
            outcome: OutcomeModel {
                intercept: -2.2,
                terms: vec![
                    t(SYSTOLIC_BP, 0.035, 130.0),
                    t(DIASTOLIC_BP, 0.045, 80.0),
                    t(HDL, -1.2, 1.3),
                    t(FBG, 0.15, 5.5),
                    t(BMI, 0.06, 24.0),
                    t(TG, 0.2, 1.5),
                    t(AGE, 0.03, 60.0),
                    t(SMOKING, 0.4, 0.0),
                    t(PHYSICAL_INACTIVITY, 0.5, 0.0),
                ],
            },
        }
    }
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what}: {p} is not a probability")))
    }
}

impl CalibrationTargets {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let t: CalibrationTargets =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Check ranges, truncation feasibility and that every column of the
    /// resident schema is covered exactly once.
    pub fn validate(&self) -> Result<()> {
        check_probability("label_noise", self.label_noise)?;
        check_probability("history_of_stroke.rate", self.history_of_stroke.rate)?;
        for f in SAMPLED_FACTORS {
            let rate = self
                .exposure
                .get(f)
                .ok_or_else(|| Error::Config(format!("exposure target for {f} missing")))?;
            check_probability(f, *rate)?;
        }
        for k in self.exposure.keys() {
            if !SAMPLED_FACTORS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown exposure factor {k}")));
            }
        }
        for (k, w) in &self.history_of_stroke.log_odds {
            if !SAMPLED_FACTORS[..8].contains(&k.as_str()) || !w.is_finite() {
                return Err(Error::Config(format!("history_of_stroke.log_odds: bad entry {k}")));
            }
        }
        let schema = FeatureSchema::resident_survey();
        for spec in &schema.features {
            let name = spec.name.as_str();
            let factor = SAMPLED_FACTORS.contains(&name) || name == col::HISTORY_OF_STROKE;
            let covered = [
                factor,
                self.numeric.contains_key(name),
                self.categorical.contains_key(name),
                name == col::WEIGHT,
            ]
            .iter()
            .filter(|&&b| b)
            .count();
            if covered != 1 {
                return Err(Error::Config(format!("{name} must be generated by exactly one rule")));
            }
            if let Some(w) = self.categorical.get(name) {
                if spec.kind != FeatureKind::Categorical {
                    return Err(Error::Config(format!("{name} is numerical")));
                }
                if w.len() as u32 != spec.categories.unwrap_or(0)
                    || w.iter().any(|&x| !(x >= 0.0 && x.is_finite()))
                    || w.iter().sum::<f64>() <= 0.0
                {
                    return Err(Error::Config(format!("{name}: bad category weights")));
                }
            }
        }
        for k in self.numeric.keys().chain(self.categorical.keys()).chain(self.missing.keys()) {
            if schema.index_of(k).is_none() {
                return Err(Error::Config(format!("unknown column {k}")));
            }
        }
        for (name, t) in &self.numeric {
            t.dist.validate(name)?;
            if let Some(c) = &t.coupled {
                c.dist.validate(&format!("{name} when {}", c.factor))?;
                if !SAMPLED_FACTORS.contains(&c.factor.as_str()) {
                    return Err(Error::Config(format!("{name}: unknown coupling factor {}", c.factor)));
                }
            }
        }
        for (name, p) in &self.missing {
            check_probability(name, *p)?;
        }
        // Overweight is read back from BMI, so the two BMI windows must sit
        // on either side of the threshold.
        let bmi = self.numeric.get(col::BMI).ok_or_else(|| Error::Config("BMI missing".into()))?;
        match &bmi.coupled {
            Some(c) if c.factor == col::OVERWEIGHT => {
                if bmi.dist.bounds[1] > self.overweight_bmi || c.dist.bounds[0] < self.overweight_bmi {
                    return Err(Error::Config(
                        "BMI windows must straddle the overweight threshold".into(),
                    ));
                }
            }
            _ => return Err(Error::Config("BMI must be coupled to Overweight".into())),
        }
        let sbp = self.blood_pressure(col::SYSTOLIC_BP)?;
        let dbp = self.blood_pressure(col::DIASTOLIC_BP)?;
        let sbp_floor = sbp.iter().map(|d| d.bounds[0]).fold(f64::INFINITY, f64::min);
        let dbp_floor = dbp.iter().map(|d| d.bounds[0]).fold(f64::NEG_INFINITY, f64::max);
        if sbp_floor - self.min_pulse_pressure <= dbp_floor {
            return Err(Error::Config(
                "systolic lower bound leaves no room for diastolic pressure".into(),
            ));
        }
        for term in &self.outcome.terms {
            if schema.index_of(&term.feature).is_none() || !term.coefficient.is_finite() {
                return Err(Error::Config(format!("outcome term {}: bad entry", term.feature)));
            }
        }
        Ok(())
    }

    fn blood_pressure(&self, name: &str) -> Result<Vec<TruncNormal>> {
        let t = self
            .numeric
            .get(name)
            .ok_or_else(|| Error::Config(format!("{name} missing")))?;
        Ok(std::iter::once(t.dist).chain(t.coupled.as_ref().map(|c| c.dist)).collect())
    }

    /// Intercept of the prior-stroke model giving the target exposure,
    /// exact over the independent chronic factors.
    pub fn history_intercept(&self) -> f64 {
        let rate = self.history_of_stroke.rate;
        if rate <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if rate >= 1.0 {
            return f64::INFINITY;
        }
        let factors: Vec<(f64, f64)> = SAMPLED_FACTORS[..8]
            .iter()
            .map(|f| {
                (
                    self.exposure[*f],
                    self.history_of_stroke.log_odds.get(*f).copied().unwrap_or(0.0),
                )
            })
            .collect();
        let expected = |b: f64| {
            (0u32..256)
                .map(|bits| {
                    let mut p = 1.0;
                    let mut z = b;
                    for (k, &(t, w)) in factors.iter().enumerate() {
                        if bits & (1 << k) != 0 {
                            p *= t;
                            z += w;
                        } else {
                            p *= 1.0 - t;
                        }
                    }
                    p * sigmoid(z)
                })
                .sum::<f64>()
        };
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if expected(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// A generated cohort: CSPP risk labels (after label noise) plus the latent
/// stroke outcome of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    pub stroke: Vec<u32>,
}

impl SyntheticCohort {
    /// The same rows labeled with the binary stroke outcome.
    pub fn stroke_cohort(&self) -> Result<Cohort> {
        self.cohort
            .with_labels(Some(Labels::new(LabelKind::Binary, self.stroke.clone())?))
    }
}

struct Plan {
    schema: FeatureSchema,
    history_b: f64,
    bp: (usize, usize),
    bmi: usize,
    height: usize,
    weight: usize,
    outcome: Vec<(usize, f64, f64)>,
    missing: Vec<(usize, f64)>,
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i as f64;
        }
        u -= w;
    }
    // Rounding left `u` past the last bucket: take the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as f64
}

fn generate_row(t: &CalibrationTargets, plan: &Plan, seed: u64) -> (Vec<f64>, u32, u32) {
    let mut rng = rng_from_seed(seed);
    let mut factors: BTreeMap<&str, bool> = BTreeMap::new();
    for f in SAMPLED_FACTORS {
        factors.insert(f, bernoulli(&mut rng, t.exposure[f]));
    }
    let z = plan.history_b
        + t.history_of_stroke
            .log_odds
            .iter()
            .filter(|(k, _)| factors[k.as_str()])
            .map(|(_, w)| w)
            .sum::<f64>();
    let history = bernoulli(&mut rng, sigmoid(z));
    factors.insert(col::HISTORY_OF_STROKE, history);

    let mut row = vec![0.0; plan.schema.len()];
    for (j, spec) in plan.schema.features.iter().enumerate() {
        let name = spec.name.as_str();
        row[j] = if let Some(&f) = factors.get(name) {
            f as u8 as f64
        } else if let Some(w) = t.categorical.get(name) {
            categorical(&mut rng, w)
        } else if let Some(n) = t.numeric.get(name) {
            let dist = n.pick(&factors);
            if j == plan.bp.1 {
                let high = dist.bounds[1].min(row[plan.bp.0] - t.min_pulse_pressure);
                dist.sample_within(&mut rng, dist.bounds[0], high)
            } else {
                dist.sample(&mut rng)
            }
        } else {
            0.0
        };
    }
    if !factors[col::OVERWEIGHT] && row[plan.bmi] >= t.overweight_bmi {
        row[plan.bmi] = t.overweight_bmi.next_down();
    }
    let h = row[plan.height] / 100.0;
    row[plan.weight] = row[plan.bmi] * h * h;

    let risk = RiskFactors::from_array(std::array::from_fn(|k| {
        factors[FACTOR_NAMES[k]]
    }));
    let mut label = label_risk(&risk).code();
    if bernoulli(&mut rng, t.label_noise) {
        label = (label + 1 + rng.random_range(0..2u32)) % 3;
    }
    let eta = t.outcome.intercept
        + plan
            .outcome
            .iter()
            .map(|&(j, c, center)| c * (row[j] - center))
            .sum::<f64>();
    let stroke = bernoulli(&mut rng, sigmoid(eta)) as u32;
    for &(j, p) in &plan.missing {
        if bernoulli(&mut rng, p) {
            row[j] = MISSING;
        }
    }
    (row, label, stroke)
}

/// Generate `n` resident rows. Row `i` draws from its own stream seeded by
/// `derive_seed(seed, i)`, so output is independent of thread count.
pub fn generate_cohort(t: &CalibrationTargets, n: usize, seed: u64) -> Result<SyntheticCohort> {
    if n == 0 {
        return Err(Error::InvalidInput("cohort size must be at least 1".into()));
    }
    t.validate()?;
    let schema = FeatureSchema::resident_survey();
    let idx = |name: &str| schema.require(name);
    let plan = Plan {
        history_b: t.history_intercept(),
        bp: (idx(col::SYSTOLIC_BP)?, idx(col::DIASTOLIC_BP)?),
        bmi: idx(col::BMI)?,
        height: idx(col::HEIGHT)?,
        weight: idx(col::WEIGHT)?,
        outcome: t
            .outcome
            .terms
            .iter()
            .map(|term| Ok((idx(&term.feature)?, term.coefficient, term.center)))
            .collect::<Result<_>>()?,
        missing: t
            .missing
            .iter()
            .map(|(k, &p)| Ok((idx(k)?, p)))
            .collect::<Result<_>>()?,
        schema: schema.clone(),
    };
    if plan.bp.0 > plan.bp.1 {
        return Err(Error::Config("systolic column must precede diastolic".into()));
    }
    let rows: Vec<(Vec<f64>, u32, u32)> = (0..n)
        .into_par_iter()
        .map(|i| generate_row(t, &plan, derive_seed(seed, i as u64)))
        .collect();
    let mut data = Vec::with_capacity(n * schema.len());
    let mut labels = Vec::with_capacity(n);
    let mut stroke = Vec::with_capacity(n);
    for (row, label, s) in rows {
        data.extend(row);
        labels.push(label);
        stroke.push(s);
    }
    let cohort = Cohort::from_flat(schema, data, Some(Labels::new(LabelKind::Risk, labels)?))?;
    Ok(SyntheticCohort { cohort, stroke })
}
