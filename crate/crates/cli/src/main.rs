mod offline;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fieldbabel_core::analytics::RatioMode;
use fieldbabel_core::calendar::{find_crop, list_crops};
use fieldbabel_core::catalog::{AnalysisGrid, CatalogConfig, IngestRequest, SceneCatalog};
use fieldbabel_service::demo::{write_demo_sized, DEMO_SCENE_PX};
use fieldbabel_service::{spawn_workers, JobStatus, LogNotifier, Service, ServiceConfig, Submission};

#[derive(Debug, Parser)]
#[command(name = "fieldbabel", version, about = "Dual-pol SAR field analytics and AOI bundle service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Service configuration file (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP API with in-process workers.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configured bind address.
        #[arg(long)]
        bind: Option<String>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a standalone worker against the shared data directory.
    Worker {
        #[command(flatten)]
        config: ConfigArg,
        /// Exit once the queue is empty instead of waiting for more jobs.
        #[arg(long)]
        drain: bool,
    },
    /// Queue a request without going through HTTP.
    Submit {
        #[command(flatten)]
        config: ConfigArg,
        /// GeoJSON file holding a single polygon.
        #[arg(long)]
        aoi: PathBuf,
        #[arg(long)]
        email: String,
        #[arg(long)]
        crop: String,
        #[arg(long)]
        year: i32,
        #[arg(long, default_value = "db_quotient")]
        ratio_mode: RatioMode,
    },
    /// Show one request, or all of them.
    Status {
        #[command(flatten)]
        config: ConfigArg,
        id: Option<String>,
    },
    /// Calibrate, filter and store one dual-pol acquisition.
    Ingest {
        /// Take the catalog location from a service configuration.
        #[arg(long, short, conflicts_with = "catalog")]
        config: Option<PathBuf>,
        /// Catalog directory; created when `--epsg` is given.
        #[arg(long, required_unless_present = "config")]
        catalog: Option<PathBuf>,
        /// Analysis grid CRS for a new catalog.
        #[arg(long, requires = "catalog")]
        epsg: Option<u32>,
        #[arg(long)]
        vv: Option<PathBuf>,
        #[arg(long)]
        vh: Option<PathBuf>,
        /// Sidecar metadata (JSON).
        #[arg(long)]
        meta: PathBuf,
    },
    /// Offline per-parcel time series from the catalog.
    Timeseries(offline::TimeseriesArgs),
    /// Offline k-means sampling map for one parcel and scene.
    Cluster(offline::ClusterArgs),
    /// Print crop season windows.
    Season {
        /// Crop name (English or LPIS); all crops when omitted.
        #[arg(long)]
        crop: Option<String>,
        #[arg(long)]
        year: i32,
    },
    /// Suggest display ranges from catalog percentiles, as a config snippet.
    ColorRanges(offline::ColorRangeArgs),
    /// Write a self-contained synthetic catalog, LPIS layer and config.
    Demo {
        #[arg(long)]
        out: PathBuf,
        /// Scene width in 10 m pixels; larger scenes make slower jobs.
        #[arg(long, default_value_t = DEMO_SCENE_PX)]
        scene_px: usize,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {}", render_error(&e));
        std::process::exit(1);
    }
}

/// The cause chain, skipping causes already spelled out by their parent.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn load_config(path: &Path) -> Result<ServiceConfig> {
    ServiceConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn open_service(path: &Path) -> Result<Service> {
    Ok(Service::open(load_config(path)?, Arc::new(LogNotifier))?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, bind, workers } => serve(&config.config, bind, workers),
        Command::Worker { config, drain } => worker(&config.config, drain),
        Command::Submit { config, aoi, email, crop, year, ratio_mode } => {
            let svc = open_service(&config.config)?;
            let geojson = std::fs::read_to_string(&aoi).with_context(|| format!("reading {}", aoi.display()))?;
            let req = svc.submit(&Submission { geojson, email, crop, year, ratio_mode })?;
            println!("{}", req.id());
            Ok(())
        }
        Command::Status { config, id } => {
            let svc = open_service(&config.config)?;
            let reqs = match id {
                Some(id) => vec![svc.get(&id)?.with_context(|| format!("no request {id}"))?],
                None => svc.jobs().list()?,
            };
            for r in reqs {
                let tail = match r.status {
                    JobStatus::Done => r.bundle_path.as_ref().map(|p| p.display().to_string()),
                    JobStatus::Failed => r.message.clone(),
                    _ => None,
                };
                println!("{}\t{}\t{}\t{}\t{}", r.id(), r.status, r.request.crop, r.request.year, tail.unwrap_or_default());
            }
            Ok(())
        }
        Command::Ingest { config, catalog, epsg, vv, vh, meta } => {
            let cat = match (config, catalog, epsg) {
                (Some(cfg), _, _) => {
                    let cfg = load_config(&cfg)?;
                    SceneCatalog::open_or_create(&cfg.catalog.root, cfg.catalog_config()?)?
                }
                (None, Some(root), Some(epsg)) => {
                    SceneCatalog::open_or_create(root, CatalogConfig::new(AnalysisGrid::new(epsg)))?
                }
                (None, Some(root), None) => SceneCatalog::open(root)?,
                (None, None, _) => unreachable!("clap requires --config or --catalog"),
            };
            let rec = cat.ingest_scene(IngestRequest { vv: vv.as_deref(), vh: vh.as_deref(), sidecar: &meta })?;
            println!("{}\t{}\t{}", rec.scene_id, rec.acquired_at.to_rfc3339(), rec.pass);
            Ok(())
        }
        Command::Timeseries(args) => offline::timeseries(args),
        Command::Cluster(args) => offline::cluster(args),
        Command::ColorRanges(args) => offline::color_ranges(args),
        Command::Season { crop, year } => {
            let crops = match crop {
                Some(name) => vec![*find_crop(&name)?],
                None => list_crops().to_vec(),
            };
            for c in crops {
                let (start, end) = c.window(year)?;
                println!("{}\t{}\t{start}\t{end}", c.english_name, c.lpis_name);
            }
            Ok(())
        }
        Command::Demo { out, scene_px } => {
            let demo = write_demo_sized(&out, scene_px)?;
            let aoi = out.join("aoi.geojson");
            std::fs::write(&aoi, &demo.aoi_geojson)?;
            println!("config: {}", demo.config_path.display());
            println!("aoi:    {}", aoi.display());
            println!("scenes: {}", demo.scene_ids.join(", "));
            Ok(())
        }
    }
}

fn serve(config: &Path, bind: Option<String>, workers: Option<usize>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(b) = bind {
        cfg.bind = b;
    }
    if let Some(n) = workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        cfg.workers = n;
    }
    let bind = cfg.bind.clone();
    let n = cfg.workers;
    let svc = Arc::new(Service::open(cfg, Arc::new(LogNotifier))?);
    let stop = Arc::new(AtomicBool::new(false));
    let handles = spawn_workers(svc.clone(), n, stop.clone());

    let rt = tokio::runtime::Runtime::new()?;
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        };
        fieldbabel_service::serve(svc.clone(), listener, shutdown).await?;
        anyhow::Ok(())
    });
    stop.store(true, Ordering::Relaxed);
    svc.wake_all();
    for h in handles {
        let _ = h.join();
    }
    served
}

fn worker(config: &Path, drain: bool) -> Result<()> {
    let svc = Arc::new(open_service(config)?);
    if drain {
        let lease = svc.jobs().lease()?;
        let mut n = 0;
        while svc.process_next_job(&lease)?.is_some() {
            n += 1;
        }
        log::info!("queue drained after {n} jobs");
        return Ok(());
    }
    let stop = Arc::new(AtomicBool::new(false));
    let handle = {
        let (svc, stop) = (svc.clone(), stop.clone());
        std::thread::spawn(move || svc.run_worker(&stop))
    };
    tokio::runtime::Builder::new_current_thread().enable_all().build()?.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    stop.store(true, Ordering::Relaxed);
    svc.wake_all();
    handle.join().map_err(|_| anyhow::anyhow!("worker thread panicked"))??;
    Ok(())
}
