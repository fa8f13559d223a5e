use thiserror::Error;

/// Errors raised across the simulation and numerics stack.
#[derive(Debug, Error)]
pub enum ZrpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("rate family rejected at k={k}: increment c(k+1)-c(k) = {increment} is not positive")]
    RateFamilyRejected { k: u32, increment: f64 },

    #[error("lattice sum diverges for alpha={alpha} (need alpha > 0)")]
    Divergent { alpha: f64 },

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("could not bracket fugacity for density {gamma}")]
    Bracket { gamma: f64 },

    #[error("simulation stalled: total jump rate is zero")]
    Stall,

    #[error("quadrature did not converge (achieved error {achieved:e}, target {target:e})")]
    Quadrature { achieved: f64, target: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("observable window too small: need radius {needed}, got {got}")]
    WindowTooSmall { needed: usize, got: usize },

    #[error("observable table cap {cap} exceeded (occupancy {occupancy})")]
    CapExceeded { cap: u32, occupancy: u32 },

    #[error("sigma_gamma(V) diverges for d={d}, alpha={alpha}; the limit is not Kipnis-Varadhan")]
    DivergentSigma { d: usize, alpha: f64 },

    #[error("statistics: {0}")]
    Stats(String),

    #[error("plan: {0}")]
    Plan(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ZrpError>;
