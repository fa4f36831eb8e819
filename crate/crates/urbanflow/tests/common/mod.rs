#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TLC_HEADER: &str = "VendorID,tpep_pickup_datetime,tpep_dropoff_datetime,passenger_count,trip_distance,pickup_longitude,pickup_latitude,RateCodeID,store_and_fwd_flag,dropoff_longitude,dropoff_latitude,payment_type,fare_amount";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Weekday rush hours run at a lower speed than the rest of the week.
pub fn synthetic_speed_mph(day: u32, hour: u32) -> f64 {
    let weekday = day < 5;
    match hour {
        7..=9 | 17..=19 if weekday => 7.0,
        0..=5 => 20.0,
        _ => 13.0,
    }
}

/// Raw TLC-style CSV covering Mon 2015-01-05 .. Sun 2015-01-11 (local time).
/// Every `bad_every`-th row is broken in one of several ways (0 disables).
pub fn synthetic_csv(seed: u64, n: usize, bad_every: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from(TLC_HEADER);
    s.push('\n');
    for i in 0..n {
        let day: u32 = rng.random_range(0..7);
        let hour: u32 = rng.random_range(0..24);
        let minute: u32 = rng.random_range(0..60);
        let second: u32 = rng.random_range(0..60);
        let lat = rng.random_range(40.70..40.80);
        let lon = rng.random_range(-74.02..-73.93);
        let miles: f64 = rng.random_range(0.5..6.0);
        let mph = synthetic_speed_mph(day, hour) * rng.random_range(0.85..1.15);
        let secs = (miles / mph * 3600.0).round() as i64 + 60;
        let dlat = (lat + rng.random_range(-0.02..0.02f64)).clamp(40.55, 40.95);
        let dlon = (lon + rng.random_range(-0.02..0.02f64)).clamp(-74.25, -73.65);
        let pax: u32 = rng.random_range(1..5);
        let fare = 2.5 + 2.5 * miles;

        let start = chrono::NaiveDate::from_ymd_opt(2015, 1, 5 + day)
            .unwrap()
            .and_hms_opt(hour, minute, second)
            .unwrap();
        let end = start + chrono::Duration::seconds(secs);
        let fmt = |t: chrono::NaiveDateTime| t.format("%Y-%m-%d %H:%M:%S").to_string();
        let (mut p, mut d) = (fmt(start), fmt(end));
        let (mut plat, mut dist) = (format!("{lat:.6}"), format!("{miles:.2}"));
        if bad_every > 0 && i % bad_every == bad_every - 1 {
            match (i / bad_every) % 4 {
                0 => p = "garbage".into(),
                1 => plat = String::new(),
                2 => d = p.clone(),
                _ => dist = "250".into(),
            }
        }
        writeln!(
            s,
            "2,{p},{d},{pax},{dist},{lon:.6},{plat},1,N,{dlon:.6},{dlat:.6},1,{fare:.2}"
        )
        .unwrap();
    }
    s
}
