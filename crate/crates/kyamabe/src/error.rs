use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("spectrum outside the admissible cone: {0}")]
    Cone(String),
    #[error("division by a vanishing quantity: {0}")]
    Degenerate(String),
    #[error("metric is not positive definite at node {node}")]
    Geometry { node: usize },
    #[error("stencil leaves the chart: {0}")]
    Boundary(String),
    #[error("invalid conformal factor at node {node}: {value}")]
    Gauge { node: usize, value: f64 },
    #[error("functional has a coefficient pole: {0}")]
    Pole(String),
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("radial profile is not even at the origin (w'(0) = {0:e})")]
    Symmetry(f64),
    #[error("time step stalled after {halvings} halvings at t = {t}")]
    Stall { halvings: usize, t: f64 },
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
