use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("eigensolver did not converge: {0}")]
    NonConvergence(String),

    #[error("tensor has vanishing transfer spectral radius ({0:e})")]
    ZeroTensor(f64),

    #[error("matrix is not unitary (defect {0:e})")]
    NonUnitary(f64),

    #[error("leading transfer eigenvalue is degenerate (gap ratio {0})")]
    DegenerateLeading(f64),

    #[error(
        "state is not clustering (gap ratio {0}); the leading transfer eigenvalue is degenerate, \
         so charged moments do not factorize and the universal asymmetry formula does not apply"
    )]
    NonClustering(f64),

    #[error("group closure exceeded {0} elements")]
    OrderExceeded(usize),

    #[error("detected subgroup is not closed: {0}")]
    ClosureViolation(String),

    #[error("group is not abelian")]
    NonAbelian,

    #[error("invalid generator data: {0}")]
    BadGenerators(String),

    #[error("product of group insertions is not the identity (defect {0:e})")]
    ProductNotIdentity(f64),

    #[error("group sum needs {needed} terms, cap is {cap}")]
    TermCapExceeded { needed: u128, cap: u128 },

    #[error("Monte Carlo standard error {std_err:e} exceeds 10% of {value:e}")]
    McVarianceTooLarge { value: f64, std_err: f64 },

    #[error("fit is ill-conditioned: {0}")]
    FitIllConditioned(String),

    #[error("fitted rate {fitted} disagrees with transfer spectrum rate {expected}")]
    RateMismatch { fitted: f64, expected: f64 },

    #[error("bad parameter: {0}")]
    BadParam(String),

    #[error("XXZ anisotropy {0} lies in the critical regime |delta| <= 1")]
    CriticalRegime(f64),

    #[error("ground-state search did not converge: {0}")]
    NoConvergence(String),

    #[error("dense dimension {needed} exceeds cap {cap}")]
    CapExceeded { needed: usize, cap: usize },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("isotypic decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("block structure violated in block ({row_block}, {col_block}): {reason}")]
    StructureViolation { row_block: usize, col_block: usize, reason: String },

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
