use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use urbanflow::config::{parse_grid_dims, parse_lat_lon, ServiceConfig};
use urbanflow::export::{export_heatmap, HeatmapFormat};
use urbanflow::external::{compare, external_router_query, ExternalRouterConfig};
use urbanflow::ingest::ColumnMap;
use urbanflow::pipeline::{self, CongestionOptions, DurationOptions, HeatmapSource, PipelineError};
use urbanflow::scenario::snapshot_at;
use urbanflow::service::{serve, AppState};
use urbanflow::tz::{Zone, DEFAULT_TZ};
use urbanflow_core::realtime::DEFAULT_THRESHOLD;
use urbanflow_core::regimes::DEFAULT_K;
use urbanflow_core::spatiotemporal::{BinFilter, GridSpec, DEFAULT_BANDWIDTH_M, DEFAULT_MIN_SUPPORT};
use urbanflow_core::trips::CleanConfig;
use urbanflow_core::{BBox, LatLon, RouteOutcome, TrafficSnapshot};

#[derive(Parser)]
#[command(name = "urbanflow", version, about = "Taxi-trip analytics, congestion-aware routing and rerouting simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, clean and validate a raw trip CSV.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        tz: TzArg,
    },
    /// Fit a model.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Export a congestion or pickup-density heatmap.
    Heatmap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..7))]
        day: Option<u8>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..24))]
        hour: Option<u8>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = HeatKind::Congestion)]
        kind: HeatKind,
        /// Kernel bandwidth in meters (density only).
        #[arg(long, default_value_t = DEFAULT_BANDWIDTH_M)]
        bandwidth: f64,
        /// `geojson` or `grid`; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tz: TzArg,
    },
    /// Time-series analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Shortest-time route between two points.
    Route {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_parser = parse_point)]
        from: LatLon,
        #[arg(long, value_parser = parse_point)]
        to: LatLon,
        #[arg(long, requires = "at", conflicts_with = "feed")]
        scenario: Option<PathBuf>,
        /// Scenario time in seconds.
        #[arg(long, requires = "scenario")]
        at: Option<f64>,
        /// NDJSON traffic updates applied on top of free flow.
        #[arg(long)]
        feed: Option<PathBuf>,
        /// Also query an external routing service at this base URL for comparison.
        #[arg(long)]
        external_url: Option<String>,
        #[arg(long, requires = "external_url")]
        external_key: Option<String>,
        /// Print the route as JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Paired scenario run with and without rerouting.
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trips: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the bind address from the config.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Least-squares trip-duration model.
    Duration {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Add day-of-week and hour-of-day indicator features.
        #[arg(long)]
        temporal: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[command(flatten)]
        tz: TzArg,
    },
    /// K-Means congestion regimes over grid cells.
    Congestion {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
        /// Inertia for k = 1..10.
        #[arg(long)]
        elbow: Option<PathBuf>,
        #[command(flatten)]
        tz: TzArg,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Congestion index per (day, hour) bin with peak flags.
    Temporal {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of bins reported as peaks.
        #[arg(long, default_value_t = pipeline::DEFAULT_TOP_Q)]
        top_q: f64,
        #[command(flatten)]
        tz: TzArg,
    },
}

#[derive(Args)]
struct TzArg {
    #[arg(long, default_value = DEFAULT_TZ)]
    timezone: String,
}

#[derive(Args)]
struct GridArgs {
    /// ROWSxCOLS over the NYC bounding box.
    #[arg(long, default_value = "40x40")]
    grid: String,
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    min_support: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeatKind {
    Congestion,
    Density,
}

fn parse_point(s: &str) -> Result<LatLon, String> {
    parse_lat_lon(s)
}

fn usage(m: impl Into<String>) -> PipelineError {
    PipelineError::Usage(m.into())
}

fn zone(t: &TzArg) -> Result<Zone, PipelineError> {
    Zone::parse(&t.timezone).map_err(usage)
}

fn grid(g: &GridArgs) -> Result<GridSpec, PipelineError> {
    let (rows, cols) = parse_grid_dims(&g.grid).map_err(usage)?;
    GridSpec::new(BBox::NYC, rows, cols).map_err(|e| usage(e.to_string()))
}

fn fmt_duration(s: f64) -> String {
    let total = s.round() as i64;
    format!("{}m{:02}s", total / 60, total % 60)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.cmd {
        Cmd::Ingest { input, out, report, tz } => {
            let r = pipeline::run_ingest(&input, &out, &report, &ColumnMap::default(), &CleanConfig::default(), &zone(&tz)?)?;
            println!("rows in: {}  kept: {}  dropped: {}", r.clean.rows_in, r.clean.rows_out, r.clean.dropped());
            for (rule, n) in &r.clean.dropped_by_rule {
                if *n > 0 {
                    println!("  {rule}: {n}");
                }
            }
            println!("wrote {} and {}", out.display(), report.display());
        }
        Cmd::Train(TrainCmd::Duration {
            data,
            split,
            seed,
            temporal,
            out,
            metrics,
            tz,
        }) => {
            let opts = DurationOptions {
                split_ratio: split,
                seed,
                temporal,
            };
            let m = pipeline::run_train_duration(&data, &out, &metrics, &opts, &zone(&tz)?)?;
            println!(
                "trained on {} rows, evaluated on {}: mae {:.3} min, rmse {:.3} min (mean predictor rmse {:.3})",
                m.train_rows, m.m, m.mae, m.rmse, m.baseline_rmse
            );
            println!("wrote {} and {}", out.display(), metrics.display());
        }
        Cmd::Train(TrainCmd::Congestion {
            data,
            k,
            seed,
            restarts,
            grid: g,
            out,
            elbow,
            tz,
        }) => {
            if k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            let opts = CongestionOptions {
                k,
                seed,
                grid: grid(&g)?,
                min_support: g.min_support,
                restarts: restarts.max(1),
                k_max: pipeline::ELBOW_K_MAX,
            };
            let (model, table) = pipeline::run_train_congestion(&data, &out, elbow.as_deref(), &opts, &zone(&tz)?)?;
            println!("{} cells in {} regimes:", model.regimes.labels.len(), model.regimes.summaries.len());
            for s in &model.regimes.summaries {
                println!(
                    "  regime {}: {} cells, {:.2} min/mile, busiest hours {:?}",
                    s.regime, s.cells, s.mean_congestion_index, s.dominant_hours
                );
            }
            for (k, v) in &table {
                println!("  k={k:<2} inertia {v:.4}");
            }
        }
        Cmd::Heatmap {
            data,
            day,
            hour,
            grid: g,
            kind,
            bandwidth,
            format,
            out,
            tz,
        } => {
            let fmt = match format {
                Some(f) => f.parse::<HeatmapFormat>().map_err(|e| usage(e.to_string()))?,
                None => HeatmapFormat::for_path(&out),
            };
            let source = match kind {
                HeatKind::Congestion => HeatmapSource::Congestion {
                    min_support: g.min_support,
                },
                HeatKind::Density => HeatmapSource::Density { bandwidth_m: bandwidth },
            };
            let spec = grid(&g)?;
            let trips = pipeline::load_cleaned(&data, &zone(&tz)?)?;
            let hm = pipeline::heatmap(&trips, &spec, BinFilter { day, hour }, source)?;
            pipeline::write_output(&out, &export_heatmap(&hm, fmt))?;
            println!("{} of {} cells populated; wrote {}", hm.populated(), spec.cell_count(), out.display());
        }
        Cmd::Analyze(AnalyzeCmd::Temporal { data, out, top_q, tz }) => {
            if !(top_q > 0.0 && top_q <= 1.0) {
                return Err(usage("--top-q must lie in (0, 1]"));
            }
            let trips = pipeline::load_cleaned(&data, &zone(&tz)?)?;
            let a = pipeline::analyze_temporal(&trips, top_q);
            pipeline::write_output(&out, pipeline::bins_csv(&a).as_bytes())?;
            const DAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
            println!("{} trips; peak bins:", a.profile.total_trips());
            for b in &a.peaks {
                let idx = a.profile.get(*b).congestion_index.unwrap_or(f64::NAN);
                println!("  {} {:02}:00  {:.2} min/mile", DAYS[b.day as usize], b.hour, idx);
            }
            println!("wrote {}", out.display());
        }
        Cmd::Route {
            graph,
            from,
            to,
            scenario,
            at,
            feed,
            external_url,
            external_key,
            json,
        } => {
            let g = pipeline::load_graph(&graph)?;
            let snapshot = match (scenario, feed) {
                (Some(s), _) => snapshot_at(&pipeline::load_scenario(&s)?, at.unwrap_or(0.0)),
                (None, Some(f)) => pipeline::load_feed(&f)?,
                (None, None) => TrafficSnapshot::free_flow(),
            };
            let ans = pipeline::route(&g, from, to, &snapshot)?;
            let RouteOutcome::Found(r) = &ans.outcome else {
                eprintln!("no route from node {} to node {}", ans.origin_node, ans.dest_node);
                return Err(PipelineError::Runtime("no route".into()));
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&ans).expect("json"));
            } else {
                println!("from node {} ({:.0} m away) to node {} ({:.0} m away)", ans.origin_node, ans.origin_snap_m, ans.dest_node, ans.dest_snap_m);
                println!("time {} ({:.1} s), distance {:.0} m, crow-flight {:.0} m", fmt_duration(r.cost_s), r.cost_s, r.distance_m, ans.crow_flight_m);
                let nodes: Vec<String> = r.nodes.iter().map(|n| n.to_string()).collect();
                println!("nodes {}", nodes.join(" -> "));
                println!("snapshot version {}", r.snapshot_version);
            }
            if let Some(base_url) = external_url {
                let cfg = ExternalRouterConfig {
                    base_url,
                    api_key: external_key,
                    ..Default::default()
                };
                match external_router_query(&cfg, from, to) {
                    Ok(ext) => {
                        let c = compare(r.cost_s, r.distance_m, &ext);
                        println!("external: time {:.1} s, distance {:.0} m (time ratio {:.3})", ext.time_s, ext.distance_m, c.time_ratio);
                    }
                    Err(e) => eprintln!("external router unavailable: {e}"),
                }
            }
        }
        Cmd::Simulate {
            graph,
            scenario,
            trips,
            out,
            threshold,
        } => {
            let log = pipeline::run_simulate(&graph, &scenario, &trips, &out, threshold)?;
            for c in &log.comparison {
                let f = |v: Option<f64>| v.map_or("unfinished".to_string(), |s| format!("{s:.1} s"));
                let ratio = c.time_ratio.map_or(String::new(), |r| format!("  ratio {r:.3}"));
                println!("trip {}: rerouted {}, baseline {}{ratio}", c.trip_id, f(c.rerouted_s), f(c.baseline_s));
            }
            println!("wrote {}", out.display());
        }
        Cmd::Serve { config, bind } => {
            let text = std::fs::read_to_string(&config).map_err(|e| usage(format!("{}: {e}", config.display())))?;
            let cfg = ServiceConfig::parse(&text)
                .map_err(|e| usage(format!("{}: {e}", config.display())))?
                .resolve(Path::new("."));
            let state = AppState::from_config(&cfg)?;
            let bind = bind.unwrap_or(cfg.bind);
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Runtime(e.to_string()))?;
            rt.block_on(serve(state, &bind)).map_err(|e| PipelineError::Runtime(format!("serve {bind}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
