use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("theta = {0} is outside [0, pi]")]
    ThetaOutOfRange(f64),

    #[error("state has zero norm; its Bloch vector is undefined")]
    DegenerateState,

    #[error("noise covariance is not positive definite on the grid t_final = {t_final}, n_steps = {n_steps}")]
    Factorization { t_final: f64, n_steps: usize },

    #[error("F(t) diverges near t = {time}")]
    PoleDetected { time: f64 },

    #[error("state magnitude overflow at t = {time}")]
    Overflow { time: f64 },

    #[error("state norm at index {index} is below the floor {floor}")]
    VanishingNorm { index: usize, floor: f64 },

    #[error("overlap between states {index} and {} vanishes; phase undefined", index + 1)]
    UndefinedPhase { index: usize },

    #[error("overlap between final and initial state vanishes; total phase undefined")]
    UndefinedTotalPhase,

    #[error("reference section undefined: state {index} is orthogonal to the initial state")]
    SectionUndefined { index: usize },

    #[error("path endpoints are antipodal; the closing geodesic is not unique")]
    GeodesicAmbiguous,

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("averaged link {index} is indistinguishable from zero (|mean| = {magnitude:.3e}, standard error = {std_error:.3e})")]
    IndeterminateLink {
        index: usize,
        magnitude: f64,
        std_error: f64,
    },

    #[error("discretized bath misfits the correlation function: residual {residual:.3e} > tolerance {tolerance:.3e}")]
    BathFit { residual: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("trajectory with seed {seed:#018x} failed: {source}")]
    Trajectory {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
