//! Robin function Λ and the Λ-metric on domains in `C^n`.
//!
//! The Green function `G(z, p) = |z − p|^{−2n+2} + H_p(z)` of a bounded domain
//! is computed numerically by boundary collocation with exterior point charges;
//! the Robin function is `Λ(p) = H_p(p)` and the Λ-metric is the Kähler metric
//! with potential `log(−Λ)`.

pub mod config;
pub mod dirichlet;
pub mod domain;
pub mod geodesy;
pub mod harness;
pub mod jet;
pub mod metric;
pub mod potential;
pub mod quadrature;
pub mod report;
pub mod robin;

pub use domain::{c, ComplexPoint, DomainSpec};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("outside tubular neighbourhood: {0}")]
    OutsideTube(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("ill-conditioned metric: {0}")]
    Singular(String),
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
