use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("column absent: {0}")]
    ColumnAbsent(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("duplicate header: {0}")]
    DuplicateHeader(String),

    #[error("value out of representable range in column {column}, row {row}: {value}")]
    Unrepresentable {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cohort has no labels")]
    Unlabeled,

    #[error("cannot stratify: class {class} has {count} rows")]
    Stratify { class: u32, count: usize },

    #[error("empty cohort")]
    EmptyCohort,

    #[error("all class counts are zero")]
    EmptyCounts,

    #[error("perfect separation: coefficient norm {norm:.3} exceeded {bound}")]
    PerfectSeparation { norm: f64, bound: f64 },

    #[error("singular information matrix")]
    Singular,

    #[error("too many features for exact Shapley enumeration ({0} > 20); use tree_shap")]
    TooManyFeatures(usize),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("unsupported bundle format version {0}")]
    BundleVersion(u32),
}
