use thiserror::Error;

/// Errors raised by the conversion and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors or vectors disagree on an extent.
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: String,
        expected: String,
        actual: String,
    },

    /// A value-range configuration violates `0 <= t_min < t_max <= t_q`.
    #[error("invalid VR config (t_q={t_q}, t_min={t_min}, t_max={t_max}): need 0 <= t_min < t_max <= t_q")]
    InvalidVrConfig { t_q: u32, t_min: u32, t_max: u32 },

    /// Any other out-of-range parameter (learning rate, epochs, window, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input value does not sit on the quantization grid.
    #[error("value {value} at index {index} is not on the grid {{{lo}/{t_q} .. {hi}/{t_q}}}")]
    OffGrid {
        value: f64,
        index: usize,
        lo: u32,
        hi: u32,
        t_q: u32,
    },

    /// A value outside the accepted domain (e.g. ICE input outside [0, 1]).
    #[error("value {value} at index {index} outside {domain}")]
    OutOfDomain {
        value: f64,
        index: usize,
        domain: &'static str,
    },

    /// A network contains a layer arrangement the converter cannot handle.
    #[error("unsupported network: {0}")]
    Unsupported(String),

    /// The network is in the wrong mode for the requested operation.
    #[error("network mode mismatch: expected {expected}, found {found}")]
    Mode {
        expected: &'static str,
        found: &'static str,
    },

    #[error("calibration set is empty")]
    EmptyCalibration,

    /// Malformed container, tensor file or spike raster.
    #[error("malformed {kind}: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        what: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
