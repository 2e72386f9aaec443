use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("truncation too small: {0}")]
    Truncation(String),
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("eigenvalue on contour near {re:+.6e}{im:+.6e}i")]
    OnContour { re: f64, im: f64 },
    #[error("contour refinement failed: {0}")]
    Refinement(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
