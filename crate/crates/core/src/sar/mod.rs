//! Radiometric calibration, decibel conversion and Lee-sigma speckle
//! filtering of dual-pol backscatter.

mod calibration;
mod db;
mod lee_sigma;
mod sigma_range;

pub use calibration::{calibrate_sigma0, interpolate_gain, CalibrationLut, CalibrationPoint, CalibrationVector};
pub use db::{db_to_linear, from_db, linear_to_db, to_db};
pub use lee_sigma::{lee_sigma_filter, SpeckleFilterParams};
pub use sigma_range::{compute_sigma_range, SigmaRangeParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SarError {
    #[error("calibration LUT is empty")]
    EmptyLut,
    #[error("invalid calibration LUT: {0}")]
    InvalidLut(String),
    #[error("negative input value {value} at pixel ({col}, {row})")]
    NegativeInput { col: usize, row: usize, value: f32 },
    #[error("sigma must lie strictly between 0 and 1, got {0}")]
    SigmaOutOfRange(f64),
    #[error("number of looks must be at least 1")]
    InvalidLooks,
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}
