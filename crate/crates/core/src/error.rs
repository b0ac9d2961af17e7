use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixdynError {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("matrix exponent {exponent} exceeds the representable range")]
    Overflow { exponent: f64 },
    #[error("invalid integration interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset is not balanced across classes")]
    Unbalanced,
    #[error("prediction assigns zero probability to class {class} which carries label mass")]
    SupportViolation { class: usize },
    #[error("label {label} of sample {index} contradicts ground-truth class {truth}")]
    LabelMismatch {
        index: usize,
        label: usize,
        truth: usize,
    },
    #[error("Gram matrix is rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },
    #[error("system is underdetermined: m = {m} must exceed d = {d}")]
    Underdetermined { m: usize, d: usize },
    #[error("Euler step too large: dt * eta * mu_max = {product} (limit 0.1)")]
    StepTooLarge { product: f64 },
    #[error("training diverged at epoch {epoch} (train risk {risk:e})")]
    Diverged { epoch: usize, risk: f64 },
    #[error("risk bound is not unimodal on the search bracket (local minima at {minima:?})")]
    NotUnimodal { minima: Vec<f64> },
    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("operation not supported for this Marchenko-Pastur law: {0}")]
    UnsupportedLaw(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl MixdynError {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MixdynError::NoConvergence
                | MixdynError::Overflow { .. }
                | MixdynError::RankDeficient { .. }
                | MixdynError::Diverged { .. }
                | MixdynError::NotUnimodal { .. }
                | MixdynError::StepTooLarge { .. }
                | MixdynError::Underdetermined { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, MixdynError>;
