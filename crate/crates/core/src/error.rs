use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("value {value} outside the unit interval [0, 1)")]
    OutOfUnitInterval { value: f64 },

    #[error("cell index {index} out of range 1..={cells}")]
    CellIndex { index: usize, cells: usize },

    #[error("threshold {0} is not a finite number")]
    NonFinite(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("spacing density is degenerate for K = 1 (point mass at length 1)")]
    DegenerateSpacing,

    #[error("joint index {indices:?} has an empty cell intersection")]
    InconsistentJointIndex { indices: Vec<i64> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
