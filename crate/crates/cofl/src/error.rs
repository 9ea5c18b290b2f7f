use cofl_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("budget {budget} exceeds the communication spent by {scheme} ({available})")]
    MismatchedBudget { budget: f64, scheme: String, available: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// Process exit status: 2 for configuration errors, 3 for infeasible
    /// geometry, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::MismatchedBudget { .. } => 2,
            HarnessError::Core(e) => match e {
                CoreError::InfeasibleGeometry { .. }
                | CoreError::CapacityExceeded { .. }
                | CoreError::NegativePilotPower { .. }
                | CoreError::NoPayload => 3,
                CoreError::InvalidParameter { .. }
                | CoreError::InvalidDensity(_)
                | CoreError::TooManyDynamics { .. }
                | CoreError::StepSizeTooLarge { .. }
                | CoreError::NegativeVariance(_)
                | CoreError::TooFewTrials { .. } => 2,
                _ => 1,
            },
            _ => 1,
        }
    }
}
