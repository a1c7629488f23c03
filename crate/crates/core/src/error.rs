use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resonance at ell = {ell:?}: |omega.ell| = {divisor:.3e} below floor {floor:.3e}")]
    Resonance { ell: Vec<i64>, divisor: f64, floor: f64 },

    #[error("small divisor {gap:.3e} below floor {floor:.3e} ({context})")]
    SmallDivisor { context: String, gap: f64, floor: f64 },

    #[error("non-invertible diffeomorphism: {0}")]
    NonInvertibleDiffeo(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("matrix is not self-adjoint (or skew-adjoint) within tolerance: violation {0:.3e}")]
    NotSelfAdjoint(f64),

    #[error("operator too large to invert by series: {0}")]
    NoInverse(String),

    #[error("structure violation: {0}")]
    Structure(String),

    #[error("loss of ellipticity: {0}")]
    Ellipticity(String),

    #[error("degenerate first-order term: {0}")]
    Degeneracy(String),

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("step {step} at omega = {omega:?}: {source}")]
    Step {
        step: usize,
        omega: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("reducibility failed: {0}")]
    Reducibility(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_step(self, step: usize, omega: &[f64]) -> Error {
        Error::Step { step, omega: omega.to_vec(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
