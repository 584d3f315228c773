use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("degenerate steady state: pump rate must be strictly positive (power density {power_density} W/m^2)")]
    DegenerateSteadyState { power_density: f64 },

    #[error("singular linear system (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("invalid rate set: {0}")]
    InvalidRates(String),

    #[error("unidentifiable fit: {0}")]
    Unidentifiable(String),

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("fit did not converge")]
    NotConverged,

    #[error("lens catalog is empty")]
    EmptyCatalog,

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("grid point {index} (value {value:e}) failed: {source}")]
    AtGridPoint {
        index: usize,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("record {index} at ({x:e}, {y:e}) m is off the pixel grid")]
    OffGrid { index: usize, x: f64, y: f64 },

    #[error("records {first} and {second} share pixel ({ix}, {iy})")]
    DuplicateCoordinate { first: usize, second: usize, ix: usize, iy: usize },

    #[error("no valid pixels")]
    NoValidPixels,

    #[error("invalid map: {0}")]
    InvalidMap(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: impl Into<f64>) -> Self {
        Error::Domain { what, value: value.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
