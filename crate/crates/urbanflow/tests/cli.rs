mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::{fixture, synthetic_csv};
use serde_json::Value;
use urbanflow::export::{parse_geojson, parse_grid_text, to_geojson};
use urbanflow::model_file::{load_model, ModelPayload};
use urbanflow::pipeline::{analyze_temporal, load_cleaned};
use urbanflow::tz::Zone;
use urbanflow_core::spatiotemporal::TimeBin;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urbanflow"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn urbanflow")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Raw synthetic data ingested into `dir/cleaned.csv`.
fn cleaned(dir: &Path, n: usize) -> PathBuf {
    let raw = dir.join("raw.csv");
    fs::write(&raw, synthetic_csv(11, n, 50)).unwrap();
    ok(&["ingest", "raw.csv", "--out", "cleaned.csv", "--report", "report.json"], dir);
    dir.join("cleaned.csv")
}

#[test]
fn ingest_reports_every_rule_and_conserves_rows() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &["ingest", p(&fixture("trips_small.csv")), "--out", "clean.csv", "--report", "report.json"],
        dir.path(),
    );
    assert!(stdout.contains("rows in: 12"));
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows_in"], 12);
    assert_eq!(report["rows_out"], 4);
    let rules = &report["dropped_by_rule"];
    for (rule, n) in [
        ("parse_error", 2),
        ("outside_bbox", 1),
        ("speed", 1),
        ("duration_short", 1),
        ("duration_long", 1),
        ("distance_long", 1),
        ("distance_short", 1),
    ] {
        assert_eq!(rules[rule], n, "rule {rule}");
    }
    let dropped: u64 = rules.as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(dropped + 4, 12);
    let clean = fs::read_to_string(dir.path().join("clean.csv")).unwrap();
    assert_eq!(clean.lines().count(), 5);
    assert!(clean.starts_with("tpep_pickup_datetime,"));
}

#[test]
fn ingest_rows_in_matches_data_rows_on_synthetic_input() {
    let dir = tempfile::tempdir().unwrap();
    cleaned(dir.path(), 700);
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows_in"], 700);
    let dropped: u64 = report["dropped_by_rule"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(report["rows_out"].as_u64().unwrap() + dropped, 700);
    // 14 broken rows cycle through four kinds, two of which fail parsing
    assert_eq!(report["dropped_by_rule"]["parse_error"], 8);
}

#[test]
fn missing_input_exits_two_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ingest", "nope.csv", "--out", "a.csv", "--report", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
    assert!(!dir.path().join("a.csv").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["ingest", "x.csv"], dir.path()).status.code(), Some(2));
    let g = fixture("diamond.graph");
    // --scenario without --at
    let out = run(
        &["route", "--graph", p(&g), "--from", "40.7,-74", "--to", "40.7,-73.9571", "--scenario", p(&fixture("diamond.toml"))],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["route", "--graph", p(&g), "--from", "95,0", "--to", "40.7,-73.9571"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["heatmap", "--data", "x.csv", "--hour", "24", "--out", "h.geojson"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn duration_training_is_deterministic_and_rmse_dominates_mae() {
    let dir = tempfile::tempdir().unwrap();
    cleaned(dir.path(), 1500);
    let args = ["train", "duration", "--data", "cleaned.csv", "--split", "0.8", "--seed", "7", "--out", "m1.mf", "--metrics", "x1.json"];
    ok(&args, dir.path());
    let args2 = ["train", "duration", "--data", "cleaned.csv", "--split", "0.8", "--seed", "7", "--out", "m2.mf", "--metrics", "x2.json"];
    ok(&args2, dir.path());
    let rd = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(rd("m1.mf"), rd("m2.mf"));
    assert_eq!(rd("x1.json"), rd("x2.json"));
    let m: Value = serde_json::from_slice(&rd("x1.json")).unwrap();
    let (mae, rmse, base) = (m["mae"].as_f64().unwrap(), m["rmse"].as_f64().unwrap(), m["baseline_rmse"].as_f64().unwrap());
    assert!(rmse >= mae);
    assert!(rmse < base, "model {rmse} vs mean predictor {base}");
    assert_eq!(m["features"].as_array().unwrap().len(), 6);
    let ModelPayload::Duration(model) = load_model(&rd("m1.mf")).unwrap() else { panic!("wrong kind") };
    assert_eq!(model.test_metrics.unwrap().rmse, rmse);

    ok(
        &["train", "duration", "--data", "cleaned.csv", "--temporal", "--out", "t.mf", "--metrics", "t.json"],
        dir.path(),
    );
    let t: Value = serde_json::from_slice(&rd("t.json")).unwrap();
    assert!(t["features"].as_array().unwrap().len() > 6);
    assert!(t["rmse"].as_f64().unwrap() < rmse, "hour indicators should help on rush-hour data");
}

#[test]
fn noiseless_linear_durations_fit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("tpep_pickup_datetime,tpep_dropoff_datetime,passenger_count,trip_distance,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude,fare_amount\n");
    for i in 0..200u32 {
        let tenths = 5 + i % 40;
        // 1 minute + 5 minutes per mile, exact in whole seconds
        let secs = 60 + 30 * tenths;
        let h = 8 + i % 10;
        let m = i % 60;
        let start = format!("2015-01-06 {h:02}:{m:02}:00");
        let end_s = h * 3600 + m * 60 + secs;
        let end = format!("2015-01-06 {:02}:{:02}:{:02}", end_s / 3600, end_s % 3600 / 60, end_s % 60);
        let lat = 40.70 + f64::from(i % 13) * 0.003;
        let lon = -74.0 + f64::from(i % 7) * 0.004;
        csv.push_str(&format!(
            "{start},{end},{},{:.1},{lon},{lat},{},{},10\n",
            1 + i % 3,
            f64::from(tenths) / 10.0,
            lon + 0.01,
            lat + 0.002 * f64::from(i % 5)
        ));
    }
    fs::write(dir.path().join("lin.csv"), csv).unwrap();
    ok(&["train", "duration", "--data", "lin.csv", "--out", "m.mf", "--metrics", "m.json"], dir.path());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert!(m["rmse"].as_f64().unwrap() < 1e-6, "{m}");
    assert!(m["rmse"].as_f64().unwrap() >= m["mae"].as_f64().unwrap());
}

#[test]
fn congestion_training_emits_a_monotone_elbow_table() {
    let dir = tempfile::tempdir().unwrap();
    cleaned(dir.path(), 3000);
    let args = |out: &str, elbow: &str| {
        vec![
            "train".to_string(),
            "congestion".into(),
            "--data".into(),
            "cleaned.csv".into(),
            "--k".into(),
            "4".into(),
            "--seed".into(),
            "3".into(),
            "--grid".into(),
            "20x20".into(),
            "--min-support".into(),
            "3".into(),
            "--out".into(),
            out.into(),
            "--elbow".into(),
            elbow.into(),
        ]
    };
    let a1 = args("r1.mf", "e1.csv");
    ok(&a1.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
    let a2 = args("r2.mf", "e2.csv");
    ok(&a2.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
    let rd = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(rd("r1.mf"), rd("r2.mf"));
    assert_eq!(rd("e1.csv"), rd("e2.csv"));

    let table: Vec<(usize, f64)> = String::from_utf8(rd("e1.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(table.len(), 10);
    assert!(table.windows(2).all(|w| w[1].1 <= w[0].1), "{table:?}");

    let ModelPayload::Congestion(model) = load_model(&rd("r1.mf")).unwrap() else { panic!("wrong kind") };
    let n = model.regimes.labels.len() as f64;
    // z-scored columns each contribute exactly n to the total sum of squares
    let nonconstant = model.regimes.scaler.std.iter().filter(|s| **s != 1.0).count() as f64;
    assert!((table[0].1 - n * nonconstant).abs() <= 1e-9 * n * nonconstant, "{} vs {}", table[0].1, n * nonconstant);
    assert_eq!(model.regimes.summaries.len(), 4);
    let means: Vec<f64> = model.regimes.summaries.iter().map(|s| s.mean_congestion_index).collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn heatmap_exports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    cleaned(dir.path(), 3000);
    ok(
        &["heatmap", "--data", "cleaned.csv", "--day", "1", "--grid", "10x10", "--min-support", "2", "--out", "hm.geojson"],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("hm.geojson")).unwrap();
    let hm = parse_geojson(&text).unwrap();
    assert!(hm.populated() > 0);
    let feats = serde_json::from_str::<Value>(&text).unwrap()["features"].as_array().unwrap().len();
    assert_eq!(feats, hm.populated());
    assert_eq!(to_geojson(&hm), serde_json::from_str::<Value>(&text).unwrap());

    ok(
        &["heatmap", "--data", "cleaned.csv", "--day", "1", "--grid", "10x10", "--min-support", "2", "--out", "hm.txt"],
        dir.path(),
    );
    let (grid, values) = parse_grid_text(&fs::read_to_string(dir.path().join("hm.txt")).unwrap()).unwrap();
    assert_eq!(grid, hm.grid);
    assert_eq!(values, hm.values);

    ok(
        &["heatmap", "--data", "cleaned.csv", "--kind", "density", "--bandwidth", "400", "--grid", "30x30", "--out", "d.geojson"],
        dir.path(),
    );
    let d = parse_geojson(&fs::read_to_string(dir.path().join("d.geojson")).unwrap()).unwrap();
    assert!(d.populated() > 0);
}

#[test]
fn temporal_bins_flag_exactly_the_peak_periods() {
    let dir = tempfile::tempdir().unwrap();
    let data = cleaned(dir.path(), 4000);
    ok(&["analyze", "temporal", "--data", "cleaned.csv", "--out", "bins.csv"], dir.path());
    let text = fs::read_to_string(dir.path().join("bins.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows.len() <= 168);
    let flagged: Vec<TimeBin> = rows
        .iter()
        .filter(|l| l.ends_with(",1"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            TimeBin::new(f[0].parse().unwrap(), f[1].parse().unwrap()).unwrap()
        })
        .collect();
    let trips = load_cleaned(&data, &Zone::default()).unwrap();
    let mut want = analyze_temporal(&trips, 0.15).peaks;
    want.sort();
    assert_eq!(flagged, want);
    assert!(flagged.iter().all(|b| b.is_weekday() && matches!(b.hour, 7..=9 | 17..=19)));
}

#[test]
fn route_on_the_diamond() {
    let dir = tempfile::tempdir().unwrap();
    let g = fixture("diamond.graph");
    let free = ok(&["route", "--graph", p(&g), "--from", "40.7,-74", "--to", "40.7,-73.9571", "--json"], dir.path());
    let v: Value = serde_json::from_str(&free).unwrap();
    let route = &v["outcome"];
    assert_eq!(route["cost_s"], 600.0);
    assert_eq!(route["nodes"], serde_json::json!([1, 2, 3, 5]));

    let sc = fixture("diamond.toml");
    let later = ok(
        &["route", "--graph", p(&g), "--from", "40.7,-74", "--to", "40.7,-73.9571", "--scenario", p(&sc), "--at", "30", "--json"],
        dir.path(),
    );
    let v: Value = serde_json::from_str(&later).unwrap();
    assert_eq!(v["outcome"]["cost_s"], 720.0);
    assert_eq!(v["outcome"]["nodes"], serde_json::json!([1, 2, 4, 5]));

    let before = ok(
        &["route", "--graph", p(&g), "--from", "40.7,-74", "--to", "40.7,-73.9571", "--scenario", p(&sc), "--at", "29.9", "--json"],
        dir.path(),
    );
    assert_eq!(serde_json::from_str::<Value>(&before).unwrap()["outcome"]["cost_s"], 600.0);

    let fed = ok(
        &["route", "--graph", p(&g), "--from", "40.7,-74", "--to", "40.7,-73.9571", "--feed", p(&fixture("diamond_feed.ndjson"))],
        dir.path(),
    );
    assert!(fed.contains("time 12m00s"), "{fed}");

    let same = ok(&["route", "--graph", p(&g), "--from", "40.7,-73.9929", "--to", "40.7,-73.9929"], dir.path());
    assert!(same.contains("(0.0 s)"), "{same}");
}

#[test]
fn simulate_logs_the_rerouting_gain_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "simulate".to_string(),
            "--graph".into(),
            p(&fixture("diamond.graph")).into(),
            "--scenario".into(),
            p(&fixture("diamond.toml")).into(),
            "--trips".into(),
            p(&fixture("diamond_trips.json")).into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = args("log1.json");
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
    let b = args("log2.json");
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
    let l1 = fs::read(dir.path().join("log1.json")).unwrap();
    assert_eq!(l1, fs::read(dir.path().join("log2.json")).unwrap());
    let log: Value = serde_json::from_slice(&l1).unwrap();
    let c = &log["comparison"][0];
    assert_eq!(c["rerouted_s"], 720.0);
    assert_eq!(c["baseline_s"], 1410.0);
    assert!(c["time_ratio"].as_f64().unwrap() <= 0.85);
    assert_eq!(log["rerouted"]["trips"][0]["reroutes"], 1);
    assert_eq!(log["baseline"]["trips"][0]["reroutes"], 0);
}

#[test]
fn serve_rejects_a_config_with_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("svc.toml"), "graph = \"missing.graph\"\n").unwrap();
    let out = run(&["serve", "--config", "svc.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.graph"));
}

#[test]
fn serve_prints_the_bound_address() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixture("diamond.graph"), dir.path().join("d.graph")).unwrap();
    fs::write(dir.path().join("svc.toml"), "bind = \"127.0.0.1:0\"\ngraph = \"d.graph\"\n").unwrap();
    let mut child = bin()
        .args(["serve", "--config", "svc.toml"])
        .current_dir(dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().ok();
    child.wait().ok();
    assert!(line.starts_with("listening on http://127.0.0.1:"), "{line}");
}
