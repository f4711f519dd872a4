use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{TimeSeries, TimeSeriesSample};

/// A recorded crop development stage for one parcel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthStageObservation {
    pub parcel_id: String,
    pub date: NaiveDate,
    /// Decimal growth-stage code, 0–99.
    pub stage: f64,
}

impl GrowthStageObservation {
    fn instant(&self) -> DateTime<Utc> {
        self.date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    #[serde(flatten)]
    pub sample: TimeSeriesSample,
    pub stage: Option<f64>,
}

/// Annotate each sample with the growth stage interpolated linearly in time
/// between the bracketing observations of the same parcel. Observations are
/// taken at midnight UTC; samples outside the observed span stay
/// unannotated.
pub fn align_growth_stages(series: &TimeSeries, observations: &[GrowthStageObservation]) -> Vec<AlignedSample> {
    let mut obs: Vec<(DateTime<Utc>, f64)> = observations
        .iter()
        .filter(|o| o.parcel_id == series.parcel_id)
        .map(|o| (o.instant(), o.stage))
        .collect();
    obs.sort_by_key(|o| o.0);
    series
        .samples
        .iter()
        .map(|s| AlignedSample { sample: s.clone(), stage: interpolate(&obs, s.timestamp) })
        .collect()
}

fn interpolate(obs: &[(DateTime<Utc>, f64)], t: DateTime<Utc>) -> Option<f64> {
    let (first, last) = (obs.first()?, obs.last()?);
    if t < first.0 || t > last.0 {
        return None;
    }
    // Index of the first observation strictly after t.
    let hi = obs.partition_point(|o| o.0 <= t);
    if hi == 0 {
        return None;
    }
    let (t0, s0) = obs[hi - 1];
    if t0 == t || hi == obs.len() {
        return Some(s0);
    }
    let (t1, s1) = obs[hi];
    let span = (t1 - t0).num_milliseconds() as f64;
    let frac = (t - t0).num_milliseconds() as f64 / span;
    Some(s0 + frac * (s1 - s0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub timestamp: DateTime<Utc>,
    pub scene_id: String,
    /// Raw ratio of the selected sample.
    pub ratio: f64,
    /// Smoothed value at the selected sample.
    pub smoothed: f64,
}

const TIE_TOL: f64 = 1e-12;

/// Peak of the ratio curve after a centred 3-sample moving average.
pub fn detect_peak(series: &TimeSeries) -> Option<Peak> {
    detect_peak_with_window(series, 3)
}

/// Peak after a centred moving average over `window` samples (odd; edges
/// average what is available). Samples without a ratio are skipped. Fewer
/// than three usable samples, or an even window, yields `None`. The earliest
/// sample wins ties.
pub fn detect_peak_with_window(series: &TimeSeries, window: usize) -> Option<Peak> {
    if window == 0 || window.is_multiple_of(2) {
        return None;
    }
    let pts: Vec<(&TimeSeriesSample, f64)> =
        series.samples.iter().filter_map(|s| s.ratio.filter(|r| r.is_finite()).map(|r| (s, r))).collect();
    if pts.len() < 3 {
        return None;
    }
    let half = window / 2;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..pts.len() {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(pts.len() - 1);
        let avg = pts[lo..=hi].iter().map(|p| p.1).sum::<f64>() / (hi - lo + 1) as f64;
        // Rounding in the window sums must not break the earliest-wins rule.
        if best.is_none_or(|(_, b)| avg > b + TIE_TOL * b.abs().max(1.0)) {
            best = Some((i, avg));
        }
    }
    let (i, smoothed) = best?;
    Some(Peak { timestamp: pts[i].0.timestamp, scene_id: pts[i].0.scene_id.clone(), ratio: pts[i].1, smoothed })
}
