use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Bounding box in raster pixels, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PixelBox {
    pub col_min: usize,
    pub row_min: usize,
    pub col_max: usize,
    pub row_max: usize,
}

impl std::fmt::Display for PixelBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cols {}..={} rows {}..={}",
            self.col_min, self.col_max, self.row_min, self.row_max
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("validation error in {element}: {message}")]
    Validation { element: String, message: String },

    #[error("unknown rail '{rail}' (valid rails: {})", valid.join(", "))]
    UnknownRail { rail: String, valid: Vec<String> },

    #[error("unsupported stimulus: {0}")]
    UnsupportedStimulus(String),

    #[error("degenerate modulation spec: amplitude and DC offset are both zero")]
    DegenerateSpec,

    #[error("sampling rate {rate_hz} Hz does not exceed the Nyquist rate for {frequency_hz} Hz")]
    Nyquist { rate_hz: f64, frequency_hz: f64 },

    #[error("{periods:.3} periods available, at least 4 are required")]
    TooFewPeriods { periods: f64 },

    #[error("tiles leave {} uncovered area(s): {}", boxes.len(), boxes.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("; "))]
    CoverageGap { boxes: Vec<PixelBox> },

    #[error("tile origin ({x_um}, {y_um}) µm lies outside the die")]
    OriginOutsideDie { x_um: f64, y_um: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("speedup undefined for an affected fraction of {0}")]
    UndefinedSpeedup(f64),

    #[error("all pixels are masked out")]
    AllMasked,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(element: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            element: element.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Syntax(_) => "syntax",
            Error::Validation { .. } => "validation",
            Error::UnknownRail { .. } => "unknown-rail",
            Error::UnsupportedStimulus(_) | Error::DegenerateSpec => "stimulus",
            Error::Nyquist { .. } | Error::TooFewPeriods { .. } => "sampling",
            Error::CoverageGap { .. } | Error::OriginOutsideDie { .. } => "tiling",
            Error::DimensionMismatch(_) => "dimension",
            Error::UndefinedSpeedup(_) | Error::AllMasked | Error::InvalidArgument(_) => {
                "argument"
            }
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "syntax" => 2,
            "validation" => 3,
            "unknown-rail" => 4,
            "stimulus" | "sampling" => 5,
            "tiling" | "dimension" => 6,
            "argument" => 7,
            "format" => 8,
            _ => 9,
        }
    }
}
