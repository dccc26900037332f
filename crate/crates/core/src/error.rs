use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid policy state: {0}")]
    InvalidPolicyState(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("uninitialized design matrix")]
    UninitializedDesign,
    #[error("ill-conditioned state (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("singular design after {0} initialization attempts")]
    SingularDesign(usize),
    #[error("arm never pulled (arm {0})")]
    ArmNeverPulled(usize),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("weight exponent {0} is not on the precomputed grid")]
    UnsupportedWeight(f64),
    #[error("no samples")]
    NoSamples,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("likelihood ratio requires gaussian innovations and known centering")]
    LikelihoodRequiresGaussian,
    #[error("oracle defined in limit experiment")]
    OracleRequiresLimit,
    #[error("policy mode mismatch: {0}")]
    PolicyMode(String),
    #[error("covariance square root failed: eigenvalue {0:.3e}")]
    NotPositiveSemidefinite(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
