//! IANA time zones for calendar features and TLC local timestamps.

use chrono::{LocalResult, NaiveDateTime, Offset, TimeZone};
use chrono_tz::Tz;
use urbanflow_core::trips::TimeZoneRule;

pub const DEFAULT_TZ: &str = "America/New_York";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zone(pub Tz);

impl Zone {
    pub fn parse(name: &str) -> Result<Self, String> {
        name.parse::<Tz>().map(Zone).map_err(|_| format!("unknown time zone `{name}`"))
    }

    pub fn name(&self) -> &'static str {
        self.0.name()
    }

    /// UTC seconds for a local wall-clock time. Ambiguous times (DST fall
    /// back) take the earlier instant; nonexistent ones (spring forward) are
    /// shifted forward by an hour.
    pub fn local_to_utc(&self, local: NaiveDateTime) -> i64 {
        match self.0.from_local_datetime(&local) {
            LocalResult::Single(t) => t.timestamp(),
            LocalResult::Ambiguous(a, _) => a.timestamp(),
            LocalResult::None => {
                let shifted = local + chrono::Duration::hours(1);
                self.0
                    .from_local_datetime(&shifted)
                    .earliest()
                    .map(|t| t.timestamp())
                    .unwrap_or_else(|| shifted.and_utc().timestamp())
            }
        }
    }

    pub fn utc_to_local(&self, utc_seconds: i64) -> NaiveDateTime {
        self.0
            .timestamp_opt(utc_seconds, 0)
            .single()
            .expect("every UTC instant maps to one local time")
            .naive_local()
    }
}

impl Default for Zone {
    fn default() -> Self {
        Zone(chrono_tz::America::New_York)
    }
}

impl TimeZoneRule for Zone {
    fn utc_offset_seconds(&self, utc_seconds: i64) -> i32 {
        self.0
            .timestamp_opt(utc_seconds, 0)
            .single()
            .map(|t| t.offset().fix().local_minus_utc())
            .unwrap_or(0)
    }
}
