use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{NaiveDate, SecondsFormat};
use serde::Deserialize;

use super::{AlignedSample, AnalyticsError, GrowthStageObservation};

pub const TIME_SERIES_CSV_HEADER: [&str; 8] =
    ["parcel_id", "timestamp", "scene_id", "mean_vv_db", "mean_vh_db", "ratio", "pixel_count", "stage"];

/// Write one parcel's aligned series. Undefined ratios and missing stages
/// are left blank.
pub fn write_time_series_csv<W: Write>(
    writer: W,
    parcel_id: &str,
    rows: &[AlignedSample],
) -> Result<(), AnalyticsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TIME_SERIES_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        let s = &row.sample;
        w.write_record([
            parcel_id.to_string(),
            s.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            s.scene_id.clone(),
            s.mean_vv_db.to_string(),
            s.mean_vh_db.to_string(),
            opt(s.ratio),
            s.pixel_count.to_string(),
            opt(row.stage),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ObservationRow {
    parcel_id: String,
    date: String,
    stage: f64,
}

/// Parse `parcel_id,date,stage` rows. Stages must lie in `[0, 99]` and dates
/// must not go backwards within a parcel.
pub fn read_growth_stages_csv<R: Read>(reader: R) -> Result<Vec<GrowthStageObservation>, AnalyticsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut last: HashMap<String, NaiveDate> = HashMap::new();
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<ObservationRow>().enumerate() {
        let row = row?;
        let line = line + 2;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| AnalyticsError::InvalidObservation(format!("line {line}: date {:?}: {e}", row.date)))?;
        if !(0.0..=99.0).contains(&row.stage) {
            return Err(AnalyticsError::InvalidObservation(format!("line {line}: stage {} outside 0..99", row.stage)));
        }
        if let Some(prev) = last.insert(row.parcel_id.clone(), date) {
            if date < prev {
                return Err(AnalyticsError::InvalidObservation(format!(
                    "line {line}: {} goes back in time for parcel {}",
                    date, row.parcel_id
                )));
            }
        }
        out.push(GrowthStageObservation { parcel_id: row.parcel_id, date, stage: row.stage });
    }
    Ok(out)
}
