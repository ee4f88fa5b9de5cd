use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("branch enumeration budget exceeded: about {estimate} branches, budget {budget}")]
    BudgetExceeded { estimate: f64, budget: usize },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("eigenfunction is not positive (min {min:e})")]
    NonPositive { min: f64 },
    #[error("tail of the truncated branch sum is not controlled: remainder bound {bound:e} > {tol:e}")]
    TailBound { bound: f64, tol: f64 },
    #[error("no mixing time k1 <= {cap} found at resolution {delta0:e}")]
    NotMixing { cap: usize, delta0: f64 },
    #[error("ledger infeasible: {0} fails for every k up to the cap")]
    Infeasible(String),
    #[error("UNI fails (D_best = {d_best:e}); no cancellation available")]
    UniFailure { d_best: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("near-singular solve: residual {residual:e} after {iterations} iterations, norm estimate {estimate:e}")]
    NearSingular { residual: f64, iterations: usize, estimate: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
