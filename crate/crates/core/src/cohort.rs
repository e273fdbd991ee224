//! Cohort tables: CSV ingestion, cleansing and stratified splitting.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::schema::{col, FeatureKind, FeatureSchema};

/// Sentinel for a missing cell, shared by categorical and numerical columns.
pub const MISSING: f64 = -1.0;

/// Reserved CSV column holding the row label.
pub const LABEL_COLUMN: &str = "label";

pub fn is_missing(v: f64) -> bool {
    v == MISSING || v.is_nan()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// CSPP levels: 0 = Low, 1 = Medium, 2 = High.
    Risk,
    /// CSPP levels plus 3 = hospitalized stroke patient.
    RiskOrStroke,
    /// Binary outcome 0 / 1.
    Binary,
}

impl LabelKind {
    pub fn n_classes(self) -> usize {
        match self {
            LabelKind::Risk => 3,
            LabelKind::RiskOrStroke => 4,
            LabelKind::Binary => 2,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            LabelKind::Risk => &["Low", "Medium", "High"],
            LabelKind::RiskOrStroke => &["Low", "Medium", "High", "Stroke"],
            LabelKind::Binary => &["0", "1"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    fn parse_token(token: &str) -> Option<(u32, Option<LabelKind>)> {
        match token {
            "Low" => Some((0, Some(LabelKind::Risk))),
            "Medium" => Some((1, Some(LabelKind::Risk))),
            "High" => Some((2, Some(LabelKind::Risk))),
            "Stroke" => Some((3, Some(LabelKind::RiskOrStroke))),
            "0" => Some((0, None)),
            "1" => Some((1, None)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub kind: LabelKind,
    pub values: Vec<u32>,
}

impl Labels {
    pub fn new(kind: LabelKind, values: Vec<u32>) -> Result<Self> {
        let k = kind.n_classes() as u32;
        if let Some(bad) = values.iter().find(|&&v| v >= k) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {kind:?}"
            )));
        }
        Ok(Labels { kind, values })
    }

    pub fn n_classes(&self) -> usize {
        self.kind.n_classes()
    }

    pub fn class_name(&self, v: u32) -> String {
        self.kind.class_names()[v as usize].clone()
    }
}

/// Immutable schema-typed table of resident records.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: FeatureSchema,
    data: Vec<f64>,
    labels: Option<Labels>,
}

impl Cohort {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<f64>>, labels: Option<Labels>) -> Result<Self> {
        let n_cols = schema.len();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} cells, schema has {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(schema, data, labels)
    }

    pub fn from_flat(schema: FeatureSchema, data: Vec<f64>, labels: Option<Labels>) -> Result<Self> {
        schema.validate()?;
        let n_cols = schema.len();
        if n_cols == 0 && !data.is_empty() {
            return Err(Error::InvalidInput("cells without columns".into()));
        }
        if n_cols > 0 && data.len() % n_cols != 0 {
            return Err(Error::InvalidInput("ragged cell buffer".into()));
        }
        let n_rows = if n_cols == 0 { 0 } else { data.len() / n_cols };
        for (j, f) in schema.features.iter().enumerate() {
            if f.kind == FeatureKind::Categorical {
                for i in 0..n_rows {
                    let v = data[i * n_cols + j];
                    if !v.is_nan() && (v < MISSING || v.fract() != 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "categorical {} row {i}: code {v} is not an integer >= -1",
                            f.name
                        )));
                    }
                }
            }
        }
        if let Some(l) = &labels {
            if l.values.len() != n_rows {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {n_rows} rows",
                    l.values.len()
                )));
            }
        }
        Ok(Cohort { schema, data, labels })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        if self.schema.is_empty() {
            0
        } else {
            self.data.len() / self.schema.len()
        }
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols().max(1))
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, col)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn require_labels(&self) -> Result<&Labels> {
        self.labels.as_ref().ok_or(Error::Unlabeled)
    }

    pub fn with_labels(&self, labels: Option<Labels>) -> Result<Cohort> {
        Cohort::from_flat(self.schema.clone(), self.data.clone(), labels)
    }

    /// Copy with one column replaced.
    pub fn with_column(&self, col: usize, values: &[f64]) -> Result<Cohort> {
        if values.len() != self.n_rows() {
            return Err(Error::InvalidInput("column length mismatch".into()));
        }
        let mut data = self.data.clone();
        let n = self.n_cols();
        for (i, &v) in values.iter().enumerate() {
            data[i * n + col] = v;
        }
        Cohort::from_flat(self.schema.clone(), data, self.labels.clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Cohort {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        let labels = self.labels.as_ref().map(|l| Labels {
            kind: l.kind,
            values: rows.iter().map(|&i| l.values[i]).collect(),
        });
        Cohort {
            schema: self.schema.clone(),
            data,
            labels,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Cohort {
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Cohort {
            schema: self.schema.select(cols),
            data,
            labels: self.labels.clone(),
        }
    }

    pub fn select_named(&self, names: &[&str]) -> Result<Cohort> {
        let cols = names
            .iter()
            .map(|n| self.schema.require(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&cols))
    }

    pub fn drop_named(&self, names: &[&str]) -> Result<Cohort> {
        for n in names {
            self.schema.require(n)?;
        }
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| !names.contains(&self.schema.features[j].name.as_str()))
            .collect();
        Ok(self.select_columns(&keep))
    }

    pub fn missing_fraction(&self, col: usize) -> f64 {
        let n = self.n_rows();
        if n == 0 {
            return 0.0;
        }
        let missing = (0..n).filter(|&i| is_missing(self.value(i, col))).count();
        missing as f64 / n as f64
    }

    /// SHA-256 over schema names, cell bits and labels, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for name in self.schema.names() {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(l) = &self.labels {
            h.update(format!("{:?}", l.kind).as_bytes());
            for v in &l.values {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.names();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format_cell(*v)).collect();
            if let Some(l) = &self.labels {
                rec.push(l.class_name(l.values[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        return format_cell(MISSING);
    }
    format!("{v}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub empty_cells: usize,
    /// Non-empty cells that could not be parsed and became MISSING.
    pub unparseable_cells: usize,
}

/// Read a cohort CSV. Header names must match the schema (in any order); an
/// optional `label` column carries row labels.
pub fn ingest_csv(path: &Path, schema: &FeatureSchema) -> Result<(Cohort, IngestReport)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<(Cohort, IngestReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut label_pos = None;
    // file position -> schema column
    let mut mapping: Vec<Option<usize>> = Vec::with_capacity(headers.len());
    for (pos, h) in headers.iter().enumerate() {
        let h = h.trim();
        if seen.insert(h, pos).is_some() {
            return Err(Error::DuplicateHeader(h.to_string()));
        }
        if h == LABEL_COLUMN {
            label_pos = Some(pos);
            mapping.push(None);
            continue;
        }
        match schema.index_of(h) {
            Some(j) => mapping.push(Some(j)),
            None => return Err(Error::UnknownColumn(h.to_string())),
        }
    }
    for f in &schema.features {
        if !seen.contains_key(f.name.as_str()) {
            return Err(Error::ColumnAbsent(f.name.clone()));
        }
    }

    let n_cols = schema.len();
    let mut report = IngestReport::default();
    let mut data = Vec::new();
    let mut raw_labels: Vec<(u32, Option<LabelKind>)> = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let start = data.len();
        data.resize(start + n_cols, MISSING);
        for (pos, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(pos) == label_pos {
                let parsed = LabelKind::parse_token(cell).ok_or_else(|| {
                    Error::InvalidInput(format!("row {row_idx}: bad label {cell:?}"))
                })?;
                raw_labels.push(parsed);
                continue;
            }
            let Some(j) = mapping.get(pos).copied().flatten() else {
                continue;
            };
            let spec = &schema.features[j];
            if cell.is_empty() {
                report.empty_cells += 1;
                continue;
            }
            match parse_cell(cell, spec.kind) {
                Some(v) if v.is_finite() => data[start + j] = v,
                Some(_) => {
                    return Err(Error::Unrepresentable {
                        column: spec.name.clone(),
                        row: row_idx,
                        value: cell.to_string(),
                    })
                }
                None => report.unparseable_cells += 1,
            }
        }
        report.rows += 1;
    }

    let labels = if label_pos.is_some() {
        let mut kind = None;
        for (_, k) in &raw_labels {
            match (kind, k) {
                (_, None) => {}
                (Some(LabelKind::RiskOrStroke), Some(_)) => {}
                (_, Some(k)) => kind = Some(*k),
            }
        }
        let all_binary = raw_labels.iter().all(|(_, k)| k.is_none());
        let kind = if all_binary {
            LabelKind::Binary
        } else if raw_labels.iter().any(|(_, k)| k.is_none()) {
            return Err(Error::InvalidInput("mixed binary and risk labels".into()));
        } else {
            kind.unwrap_or(LabelKind::Risk)
        };
        Some(Labels::new(kind, raw_labels.into_iter().map(|(v, _)| v).collect())?)
    } else {
        None
    };
    let cohort = Cohort::from_flat(schema.clone(), data, labels)?;
    Ok((cohort, report))
}

/// Parse one cell. `None` means unparseable (becomes MISSING); a non-finite
/// value means the text is numeric but not representable.
fn parse_cell(cell: &str, kind: FeatureKind) -> Option<f64> {
    let lower = cell.to_ascii_lowercase();
    if lower.contains("nan") {
        return None;
    }
    let v: f64 = cell.parse().ok()?;
    match kind {
        FeatureKind::Numerical => Some(v),
        FeatureKind::Categorical => {
            if !v.is_finite() {
                Some(v)
            } else if v.fract() == 0.0 && v >= MISSING {
                Some(v)
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanseConfig {
    /// Columns whose missing fraction exceeds this are dropped.
    pub missing_threshold: f64,
    /// Systolic / diastolic column names; `None` disables the BP repair.
    pub blood_pressure: Option<(String, String)>,
}

impl Default for CleanseConfig {
    fn default() -> Self {
        CleanseConfig {
            missing_threshold: 0.60,
            blood_pressure: Some((col::SYSTOLIC_BP.to_string(), col::DIASTOLIC_BP.to_string())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleansingReport {
    pub dropped_columns: Vec<(String, f64)>,
    /// Cells holding the missing sentinel in the output.
    pub imputed_cells: usize,
    pub corrected_bp_rows: usize,
    pub rows_in: usize,
    pub rows_out: usize,
}

/// Normalize missing cells to the sentinel, repair rows whose diastolic
/// pressure is not below systolic, then drop mostly-missing columns.
///
/// Inverted pairs are swapped. Equal pairs cannot be repaired by a swap, so
/// the diastolic reading is marked missing. The repair runs before the
/// column filter so that a second pass changes nothing.
pub fn cleanse(c: &Cohort, cfg: &CleanseConfig) -> (Cohort, CleansingReport) {
    let mut report = CleansingReport {
        rows_in: c.n_rows(),
        ..Default::default()
    };
    let n_cols = c.n_cols();
    let mut data = c.data.clone();
    for v in data.iter_mut() {
        if is_missing(*v) {
            *v = MISSING;
        }
    }
    if let Some((sys_name, dia_name)) = &cfg.blood_pressure {
        if let (Some(s), Some(d)) = (c.schema.index_of(sys_name), c.schema.index_of(dia_name)) {
            for row in data.chunks_mut(n_cols) {
                let (sys, dia) = (row[s], row[d]);
                if is_missing(sys) || is_missing(dia) || dia < sys {
                    continue;
                }
                if dia > sys {
                    row[s] = dia;
                    row[d] = sys;
                } else {
                    row[d] = MISSING;
                }
                report.corrected_bp_rows += 1;
            }
        }
    }
    let repaired = Cohort {
        schema: c.schema.clone(),
        data,
        labels: c.labels.clone(),
    };
    let mut keep = Vec::new();
    for j in 0..n_cols {
        let frac = repaired.missing_fraction(j);
        if frac > cfg.missing_threshold {
            report
                .dropped_columns
                .push((c.schema.features[j].name.clone(), frac));
        } else {
            keep.push(j);
        }
    }
    let out = repaired.select_columns(&keep);
    report.imputed_cells = out.data.iter().filter(|v| is_missing(**v)).count();
    report.rows_out = out.n_rows();
    (out, report)
}

/// Per-class shuffled split; each class contributes `round(n_c * test_fraction)`
/// rows to the test side. Both sides keep the original row order.
pub fn split_stratified(c: &Cohort, test_fraction: f64, seed: u64) -> Result<(Cohort, Cohort)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let labels = c.require_labels()?;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.values.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut is_test = vec![false; c.n_rows()];
    for (&class, rows) in &by_class {
        let n_test = (rows.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == rows.len() {
            return Err(Error::Stratify {
                class,
                count: rows.len(),
            });
        }
        let mut shuffled = rows.clone();
        let mut rng = rng_from_seed(derive_seed(seed, class as u64));
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..n_test] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..c.n_rows()).partition(|&i| is_test[i]);
    Ok((c.select_rows(&train), c.select_rows(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSpec;

    fn small_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureSpec::numerical("Age", Some("years"), Some([18.0, 110.0])),
            FeatureSpec::numerical("TG", None, None),
            FeatureSpec::categorical("Smoking", 2),
        ])
        .unwrap()
    }

    fn bp_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureSpec::numerical(col::SYSTOLIC_BP, None, None),
            FeatureSpec::numerical(col::DIASTOLIC_BP, None, None),
            FeatureSpec::numerical("HCY", None, None),
        ])
        .unwrap()
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let text = "Age,TG,Smoking\n50,1.2,0\n61,,1\n70,2.0,1\n";
        let (c, rep) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        assert_eq!(c.n_rows(), 3);
        assert_eq!(c.value(1, 1), MISSING);
        assert_eq!(rep.empty_cells, 1);
    }

    #[test]
    fn header_order_is_free() {
        let text = "Smoking,Age,TG\n1,50,1.5\n";
        let (c, _) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        assert_eq!(c.row(0), &[50.0, 1.5, 1.0]);
    }

    #[test]
    fn absent_column_is_an_error() {
        let text = "Age,Smoking\n50,0\n";
        let err = read_csv(text.as_bytes(), &small_schema()).unwrap_err();
        assert!(err.to_string().contains("column absent"), "{err}");
    }

    #[test]
    fn unknown_and_duplicate_headers() {
        let text = "Age,TG,Smoking,Shoe\n50,1,0,3\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &small_schema()),
            Err(Error::UnknownColumn(_))
        ));
        let text = "Age,TG,Smoking,Age\n50,1,0,3\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &small_schema()),
            Err(Error::DuplicateHeader(_))
        ));
    }

    #[test]
    fn unparseable_numeric_counts_warning() {
        let text = "Age,TG,Smoking\nabc,1.0,0\n44,1.0,x\n45,1.0,1\n";
        let (c, rep) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        assert_eq!(c.value(0, 0), MISSING);
        assert_eq!(c.value(1, 2), MISSING);
        assert_eq!(rep.unparseable_cells, 2);
        assert_eq!(rep.empty_cells, 0);
    }

    #[test]
    fn unrepresentable_numeric_is_an_error() {
        let text = "Age,TG,Smoking\n1e400,1.0,0\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &small_schema()),
            Err(Error::Unrepresentable { .. })
        ));
    }

    #[test]
    fn label_kinds_are_inferred() {
        let text = "Age,TG,Smoking,label\n50,1,0,Low\n51,1,0,High\n";
        let (c, _) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        assert_eq!(c.labels().unwrap().kind, LabelKind::Risk);
        let text = "Age,TG,Smoking,label\n50,1,0,Stroke\n51,1,0,High\n";
        let (c, _) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        assert_eq!(c.labels().unwrap().kind, LabelKind::RiskOrStroke);
        assert_eq!(c.labels().unwrap().values, vec![3, 2]);
        let text = "Age,TG,Smoking,label\n50,1,0,1\n51,1,0,0\n";
        let (c, _) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        assert_eq!(c.labels().unwrap().kind, LabelKind::Binary);
    }

    #[test]
    fn csv_round_trip() {
        let text = "Age,TG,Smoking,label\n50.5,-1,0,Low\n51,0.25,1,Medium\n";
        let (c, _) = read_csv(text.as_bytes(), &small_schema()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let (back, _) = read_csv(buf.as_slice(), &small_schema()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn cleanse_drops_mostly_missing_column() {
        let rows = (0..10)
            .map(|i| vec![140.0, 80.0, if i < 7 { MISSING } else { 10.0 }])
            .collect();
        let c = Cohort::new(bp_schema(), rows, None).unwrap();
        let (out, rep) = cleanse(&c, &CleanseConfig::default());
        assert_eq!(out.n_cols(), 2);
        assert_eq!(rep.dropped_columns.len(), 1);
        assert_eq!(rep.dropped_columns[0].0, "HCY");
        assert!((rep.dropped_columns[0].1 - 0.7).abs() < 1e-12);
        assert_eq!(rep.rows_out, rep.rows_in);
    }

    #[test]
    fn cleanse_keeps_column_at_threshold() {
        let rows = (0..10)
            .map(|i| vec![140.0, 80.0, if i < 6 { MISSING } else { 10.0 }])
            .collect();
        let c = Cohort::new(bp_schema(), rows, None).unwrap();
        let (out, rep) = cleanse(&c, &CleanseConfig::default());
        assert_eq!(out.n_cols(), 3);
        assert_eq!(rep.imputed_cells, 6);
    }

    #[test]
    fn cleanse_swaps_inverted_pressure() {
        let c = Cohort::new(bp_schema(), vec![vec![87.0, 140.0, 9.0]], None).unwrap();
        let (out, rep) = cleanse(&c, &CleanseConfig::default());
        assert_eq!(out.row(0), &[140.0, 87.0, 9.0]);
        assert_eq!(rep.corrected_bp_rows, 1);
    }

    #[test]
    fn cleanse_marks_equal_pressure_missing() {
        let rows = vec![vec![120.0, 120.0, 9.0], vec![130.0, 80.0, 9.0]];
        let c = Cohort::new(bp_schema(), rows, None).unwrap();
        let (out, rep) = cleanse(&c, &CleanseConfig::default());
        assert_eq!(out.row(0), &[120.0, MISSING, 9.0]);
        assert_eq!(rep.corrected_bp_rows, 1);
        assert_eq!(rep.imputed_cells, 1);
    }

    #[test]
    fn cleanse_identity_on_clean_cohort() {
        let c = Cohort::new(bp_schema(), vec![vec![130.0, 85.0, 9.0], vec![120.0, 70.0, 11.0]], None)
            .unwrap();
        let (out, rep) = cleanse(&c, &CleanseConfig::default());
        assert_eq!(out, c);
        assert_eq!(
            rep,
            CleansingReport {
                rows_in: 2,
                rows_out: 2,
                ..Default::default()
            }
        );
    }

    #[test]
    fn split_half_of_four_rows() {
        let rows = (0..4).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let labels = Labels::new(LabelKind::Binary, vec![0, 0, 1, 1]).unwrap();
        let c = Cohort::new(small_schema(), rows, Some(labels)).unwrap();
        let (train, test) = split_stratified(&c, 0.5, 7).unwrap();
        assert_eq!(train.n_rows(), 2);
        let mut tl = test.labels().unwrap().values.clone();
        tl.sort();
        assert_eq!(tl, vec![0, 1]);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let rows = (0..3).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let labels = Labels::new(LabelKind::Binary, vec![0, 0, 1]).unwrap();
        let c = Cohort::new(small_schema(), rows, Some(labels)).unwrap();
        assert!(matches!(
            split_stratified(&c, 0.2, 1),
            Err(Error::Stratify { .. })
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let rows = (0..100).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let labels = Labels::new(LabelKind::Binary, (0..100).map(|i| (i % 3 == 0) as u32).collect())
            .unwrap();
        let c = Cohort::new(small_schema(), rows, Some(labels)).unwrap();
        let a = split_stratified(&c, 0.3, 11).unwrap();
        let b = split_stratified(&c, 0.3, 11).unwrap();
        assert_eq!(a, b);
        let other = split_stratified(&c, 0.3, 12).unwrap();
        assert_ne!(a.1, other.1);
    }

    #[test]
    fn split_paper_sized_cohort() {
        // Class sizes summing to 23289 rows.
        let sizes = [10250usize, 7105, 5934];
        let mut values = Vec::new();
        for (k, &n) in sizes.iter().enumerate() {
            values.extend(std::iter::repeat(k as u32).take(n));
        }
        let schema = FeatureSchema::new(vec![FeatureSpec::numerical("x", None, None)]).unwrap();
        let data = (0..values.len()).map(|i| i as f64).collect();
        let c = Cohort::from_flat(schema, data, Some(Labels::new(LabelKind::Risk, values).unwrap()))
            .unwrap();
        let (_, test) = split_stratified(&c, 0.2, 3).unwrap();
        assert!((test.n_rows() as i64 - 4657).abs() <= 2, "{}", test.n_rows());
    }
}
