use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("covariance block for mode {mode} is degenerate (smallest eigenvalue {eigenvalue:e})")]
    DegenerateBlock { mode: usize, eigenvalue: f64 },

    #[error("hamiltonian is unbounded below for z = {z:?}")]
    UnboundedBelow { z: Vec<f64> },

    #[error("no minimiser bracketed inside the control set for z = {z:?}")]
    EmptyArgmin { z: Vec<f64> },

    #[error("regression at step {step} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { step: usize, condition: f64 },

    #[error("step size violates K_psi_y * dt < 1/2 (K_psi_y = {k_psi_y}, dt = {dt})")]
    StepSize { k_psi_y: f64, dt: f64 },

    #[error("drift exceeds its declared bound {bound} (observed {observed})")]
    UnboundedDrift { bound: f64, observed: f64 },

    #[error("picard iteration is not contracting (update ratio {ratio:.3} for {streak} sweeps)")]
    NonContraction { ratio: f64, streak: usize },

    #[error("policy is not admissible: control q-moment {half:.4e} -> {full:.4e} under path doubling")]
    Inadmissible { half: f64, full: f64 },

    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { context: context() })
    }
}
