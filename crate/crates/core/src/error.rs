use alloc::string::String;

use crate::chart::Chart;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("chart mismatch: {left} vs {right}")]
    ChartMismatch { left: Chart, right: Chart },
    #[error("product of two transcendental parts is outside the closed basis")]
    UnsupportedProduct,
    #[error("transcendental {tag} is not admissible on chart {chart}")]
    InadmissibleTranscendental { tag: &'static str, chart: Chart },
    #[error("malformed expression: {0}")]
    MalformedExpression(String),
    #[error("h = {h} lies outside chart {chart}")]
    OutsideChart { h: f64, chart: Chart },
    #[error("precision exhausted at h = {h}: value {value:e} with error bound {bound:e}")]
    PrecisionExhausted { h: f64, value: f64, bound: f64 },
    #[error("expression is identically zero; zeros are not isolated")]
    IdenticallyZero,
    #[error("clearing factor has zeros that cannot be isolated: {0}")]
    NonIsolatableZeros(String),
    #[error("no certificate: {0}")]
    NoCertificate(String),
    #[error("invalid reduction stage: {0}")]
    InvalidStage(String),
    #[error("invalid instance spec: {0}")]
    InvalidSpec(String),
    #[error("interval {0} is not usable here")]
    InvalidInterval(String),
    #[error("level curve: {0}")]
    Geometry(String),
    #[error("quadrature did not converge on arc {arc}: estimated error {error:e}")]
    Quadrature { arc: usize, error: f64 },
    #[error("fit: {0}")]
    Fit(String),
}

pub type Result<T> = core::result::Result<T, Error>;
