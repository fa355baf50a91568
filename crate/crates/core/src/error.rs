//! Error types shared across the solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DelamError {
    #[error("config error: {0}")]
    Config(String),

    #[error("material '{name}' is not positive definite: {detail}")]
    Material { name: String, detail: String },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("pre-crack [{from}, {to}] on interface {interface} is not aligned to element boundaries (dx = {dx})")]
    CrackAlignment {
        interface: usize,
        from: f64,
        to: f64,
        dx: f64,
    },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stale factorization for substructure {sub}: search directions changed, refactorize first")]
    StaleFactorization { sub: usize },

    #[error("Newton solver diverged after {iters} iterations (residual history: {history:?})")]
    NewtonDivergence { iters: usize, history: Vec<f64> },

    #[error("conjugate gradient breakdown: {0}")]
    CgBreakdown(String),

    #[error("time step {step} did not converge within {max_iters} iterations (eta = {eta:.3e}, tol = {tol:.1e})")]
    NonConvergence {
        step: usize,
        max_iters: usize,
        eta: f64,
        tol: f64,
    },

    #[error("oracle problem too large: {dof} dof exceeds cap of {cap}")]
    OracleCap { dof: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DelamError>;
