use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("expected {expected} bands, found {found}")]
    BandCountMismatch { expected: usize, found: usize },
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("intensity {value} exceeds the 10-bit range")]
    IntensityOverflow { value: u16 },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),

    #[error("negative composition component {0}")]
    NegativeComponent(f64),
    #[error("composition sums to {0}, expected 100")]
    SumViolation(f64),
    #[error("composition ({clay}, {silt}, {sand}) is not on the simplex")]
    OffSimplex { clay: f64, silt: f64, sand: f64 },
    #[error("prediction has no positive component")]
    AllNonPositive,
    #[error("mixture weights sum to {0}, expected 1")]
    WeightSumViolation(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("roi at ({x1}, {y1}) does not fit a {width}x{height} image")]
    RoiOutOfBounds {
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },

    #[error("band {band} is constant in the training data")]
    DegenerateBand { band: usize },
    #[error("scaler used before fitting")]
    NotFitted,
    #[error("group {0} has no rows")]
    EmptyGroup(String),

    #[error("scatter needs at least two classes")]
    SingleClass,
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("k = {k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("class {class} has {count} samples, SMOTE needs at least 2")]
    ClassTooSmall { class: usize, count: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("truth for component {0} is constant")]
    ConstantTruth(&'static str),

    #[error("specimen {0} appears in both training and validation data")]
    SpecimenOverlap(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("specimen {specimen_id}: {source}")]
    Specimen {
        specimen_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub fn for_specimen(self, specimen_id: &str) -> Self {
        Error::Specimen {
            specimen_id: specimen_id.to_string(),
            source: Box::new(self),
        }
    }
}
