use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, hyperparameters or world settings.
    #[error("configuration error: {0}")]
    Config(String),
    /// A value handed to an operation lies outside its domain.
    #[error("input error: {0}")]
    Input(String),
    /// An API was used in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),
    /// Training produced a non-finite loss.
    #[error("run diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
