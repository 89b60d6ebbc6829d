use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("integrator failure at {var} = {at:.6e}: {reason}")]
    Integrator {
        var: &'static str,
        at: f64,
        reason: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("barrier construction failed: {0}")]
    Barrier(String),

    #[error("initial data: {0}")]
    InitialData(String),

    #[error("step size underflow at tau = {tau:.6}: h = {h:.3e} ({detail})")]
    StepUnderflow { tau: f64, h: f64, detail: String },

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
