//! Seasonal extraction windows per crop.
//!
//! A window is anchored on a *reference year*: the season (harvest) year,
//! i.e. the year carrying offset 0. Winter crops start in the previous
//! autumn (offset −1); sugar beet runs into the following winter (+1).

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

pub const MIN_YEAR: i32 = 1970;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalendarError {
    #[error("unknown crop {0:?}")]
    UnknownCrop(String),
    #[error("year {0} outside {MIN_YEAR}..={MAX_YEAR}")]
    YearOutOfRange(i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CropSeason {
    /// LPIS (Danish) crop name; empty for the catch-all row.
    pub lpis_name: &'static str,
    pub english_name: &'static str,
    /// `(month, day)`.
    pub start_month_day: (u32, u32),
    pub start_year_offset: i32,
    pub end_month_day: (u32, u32),
    pub end_year_offset: i32,
}

impl CropSeason {
    /// Resolve to calendar dates for a reference year.
    pub fn window(&self, year: i32) -> Result<(NaiveDate, NaiveDate), CalendarError> {
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(CalendarError::YearOutOfRange(year));
        }
        let date = |(m, d): (u32, u32), off: i32| {
            NaiveDate::from_ymd_opt(year + off, m, d).expect("calendar table holds valid dates")
        };
        Ok((
            date(self.start_month_day, self.start_year_offset),
            date(self.end_month_day, self.end_year_offset),
        ))
    }

    fn matches(&self, name: &str) -> bool {
        let folded = fold(name);
        fold(self.english_name) == folded || (!self.lpis_name.is_empty() && fold(self.lpis_name) == folded)
    }
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

const fn season(
    lpis_name: &'static str,
    english_name: &'static str,
    start: (u32, u32),
    start_year_offset: i32,
    end: (u32, u32),
    end_year_offset: i32,
) -> CropSeason {
    CropSeason {
        lpis_name,
        english_name,
        start_month_day: start,
        start_year_offset,
        end_month_day: end,
        end_year_offset,
    }
}

// Spellings ("Sugar beat", "Spring rape") are kept as published.
static CROPS: [CropSeason; 7] = [
    season("", "All", (1, 1), 0, (12, 31), 0),
    season("Majs", "Corn", (3, 15), 0, (11, 15), 0),
    season("Vårbyg", "Spring barley", (3, 1), 0, (9, 1), 0),
    season("Sukkerroer", "Sugar beat", (4, 1), 0, (2, 1), 1),
    season("Våraps", "Spring rape", (3, 1), 0, (10, 1), 0),
    season("Vinterraps", "Winter rapeseed", (7, 1), -1, (8, 1), 0),
    season("Vinterhvede", "Winter wheat", (8, 15), -1, (10, 1), 0),
];

pub fn list_crops() -> &'static [CropSeason] {
    &CROPS
}

/// Case-insensitive lookup by English or Danish name.
pub fn find_crop(name: &str) -> Result<&'static CropSeason, CalendarError> {
    CROPS
        .iter()
        .find(|c| c.matches(name))
        .ok_or_else(|| CalendarError::UnknownCrop(name.to_string()))
}

/// Start and end date (inclusive) of a crop's window for a reference year.
pub fn season_window(crop: &str, year: i32) -> Result<(NaiveDate, NaiveDate), CalendarError> {
    find_crop(crop)?.window(year)
}
