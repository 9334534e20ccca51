use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("degenerate measure: psi'(1) = {psi_prime:.4} is not below m = {m}")]
    Degenerate { psi_prime: f64, m: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature resolution {got} is below the floor {floor}")]
    QuadratureResolution { got: usize, floor: usize },
    #[error("circulant embedding failed: negative spectral mass {negative_mass:.3e} and {atoms} atoms exceed the dense fallback limit")]
    Embedding { negative_mass: f64, atoms: usize },
    #[error("covariance matrix is not positive semi-definite (pivot {pivot} = {value:.3e})")]
    NotPositive { pivot: usize, value: f64 },
    #[error("coincident atoms {0} and {1} with alpha > 0")]
    CoincidentAtoms(usize, usize),
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("sinkhorn did not converge: marginal error {error:.3e} after {iterations} iterations")]
    NoConvergence { error: f64, iterations: usize },
    #[error("transport step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("degenerate polyline: all points coincide")]
    DegeneratePolyline,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
