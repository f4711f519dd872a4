//! Field-level products: dB composites, zonal means, per-parcel VV/VH time
//! series, growth-stage alignment, peak detection and k-means sampling maps.

mod composite;
mod export;
mod kmeans;
mod phenology;
mod sampling;
mod timeseries;
mod zonal;

pub use composite::composite_rgb;
pub use export::{read_growth_stages_csv, write_time_series_csv, TIME_SERIES_CSV_HEADER};
pub use kmeans::{kmeans_cluster, ClusterResult, MAX_ITERATIONS, RANDOM_RESTARTS};
pub use phenology::{
    align_growth_stages, detect_peak, detect_peak_with_window, AlignedSample, GrowthStageObservation, Peak,
};
pub use sampling::{sampling_plan, SamplePoint};
pub use timeseries::{build_field_time_series, SceneLayers, TimeSeries, TimeSeriesSample, DEFAULT_EROSION_M};
pub use zonal::{zonal_mean, ZonalMean};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterError;
use crate::vector::projection::UnsupportedCrs;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("raster and mask geometries differ")]
    GeometryMismatch,
    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("need at least {k} distinct in-mask values, found {distinct}")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("metric erosion needs a projected grid; EPSG:{0} is geographic")]
    GeographicErosion(u32),
    #[error("invalid growth-stage observation: {0}")]
    InvalidObservation(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Crs(#[from] UnsupportedCrs),
}

/// How the third composite band (and the per-sample ratio) combines VV and
/// VH in dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// `VV_dB / VH_dB`.
    #[default]
    DbQuotient,
    /// `VV_dB − VH_dB`.
    DbDifference,
}

impl RatioMode {
    /// `None` where the quotient is undefined (VH_dB = 0).
    pub fn apply(self, vv_db: f64, vh_db: f64) -> Option<f64> {
        match self {
            RatioMode::DbQuotient => (vh_db != 0.0).then(|| vv_db / vh_db),
            RatioMode::DbDifference => Some(vv_db - vh_db),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RatioMode::DbQuotient => "db_quotient",
            RatioMode::DbDifference => "db_difference",
        }
    }
}

impl std::str::FromStr for RatioMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "db_quotient" => Ok(RatioMode::DbQuotient),
            "db_difference" => Ok(RatioMode::DbDifference),
            other => Err(format!("unknown ratio mode {other:?}")),
        }
    }
}
