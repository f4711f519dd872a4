//! Dual-polarisation SAR field analytics: raster and vector primitives,
//! σ⁰ calibration and speckle filtering, per-parcel time series, k-means
//! sampling maps, crop season windows and a durable scene catalog.

pub mod analytics;
pub mod calendar;
pub mod catalog;
pub mod journal;
pub mod raster;
pub mod sar;
pub mod synthetic;
pub mod vector;

pub use analytics::{
    align_growth_stages, build_field_time_series, composite_rgb, detect_peak, kmeans_cluster, sampling_plan,
    zonal_mean, AnalyticsError, ClusterResult, GrowthStageObservation, RatioMode, SceneLayers, TimeSeries,
    TimeSeriesSample,
};
pub use calendar::{find_crop, list_crops, season_window, CalendarError, CropSeason};
pub use catalog::{
    AnalysisGrid, CatalogConfig, CatalogError, IngestRequest, Pass, Polarization, SceneCatalog, SceneMetadata,
    SceneRecord, SceneStatus,
};
pub use raster::{BBox, GridGeometry, Mask, MultiBandRaster, Raster, RasterError, DEFAULT_NODATA};
pub use sar::{compute_sigma_range, lee_sigma_filter, CalibrationLut, SarError, SigmaRangeParams, SpeckleFilterParams};
pub use vector::{FieldParcel, Polygon, PolygonError};
