//! The request flow: submission, the worker loop and notification.

use std::fs::{self, File};
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chrono::Utc;
use fieldbabel_core::catalog::{CatalogError, SceneCatalog};
use fieldbabel_core::vector::{read_parcels_shapefile, FieldParcel, ShapefileColumns, ShapefileError};
use thiserror::Error;

use crate::bundle::{build_bundle, BundleContext};
use crate::config::{ConfigError, ServiceConfig};
use crate::jobs::{JobStore, JobStoreError, WorkerLease};
use crate::notify::{Notification, Notifier};
use crate::request::{prepare, AoiRequest, SubmitError, Submission};

const BUNDLES_DIR: &str = "bundles";
const WORK_DIR: &str = "work";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("LPIS layer: {0}")]
    Lpis(#[from] ShapefileError),
    #[error(transparent)]
    Jobs(#[from] JobStoreError),
    #[error(transparent)]
    Submit(#[from] SubmitError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io { path: path.to_path_buf(), source }
}

pub struct Service {
    config: ServiceConfig,
    catalog: SceneCatalog,
    jobs: JobStore,
    parcels: Vec<FieldParcel>,
    columns: ShapefileColumns,
    notifier: Arc<dyn Notifier>,
    /// Bumped on submission so in-process workers wake without polling.
    wake: (Mutex<u64>, Condvar),
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("data_dir", &self.config.data_dir).finish_non_exhaustive()
    }
}

impl Service {
    /// Open the catalog (creating it with the configured grid and filter if
    /// absent), the job store and the LPIS layer.
    pub fn open(config: ServiceConfig, notifier: Arc<dyn Notifier>) -> Result<Self, ServiceError> {
        config.validate()?;
        let catalog = SceneCatalog::open_or_create(&config.catalog.root, config.catalog_config()?)?;
        if catalog.config() != &config.catalog_config()? {
            log::warn!(
                "catalog {} keeps its own grid and filter settings; the configuration file differs",
                config.catalog.root.display()
            );
        }
        let jobs = JobStore::open(&config.data_dir)?;
        let bundles = config.data_dir.join(BUNDLES_DIR);
        fs::create_dir_all(&bundles).map_err(io_err(&bundles))?;
        let (parcels, columns) = match &config.lpis {
            Some(l) => {
                let parcels = read_parcels_shapefile(&l.path, l.path.with_extension("dbf"), &l.columns)?;
                log::info!("loaded {} LPIS parcels from {}", parcels.len(), l.path.display());
                (parcels, l.columns.clone())
            }
            None => (Vec::new(), ShapefileColumns::default()),
        };
        Ok(Self { config, catalog, jobs, parcels, columns, notifier, wake: (Mutex::new(0), Condvar::new()) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn catalog(&self) -> &SceneCatalog {
        &self.catalog
    }

    pub fn jobs(&self) -> &JobStore {
        &self.jobs
    }

    pub fn submit(&self, sub: &Submission) -> Result<AoiRequest, ServiceError> {
        let req = prepare(sub, Utc::now())?;
        let stored = self.jobs.submit(req)?;
        log::info!("request {} submitted ({} {})", stored.id(), stored.request.crop, stored.request.year);
        let (m, cv) = &self.wake;
        *m.lock().expect("wake lock") += 1;
        cv.notify_all();
        Ok(stored)
    }

    pub fn get(&self, id: &str) -> Result<Option<AoiRequest>, ServiceError> {
        Ok(self.jobs.get(id)?)
    }

    pub fn bundle_path(&self, id: &str) -> PathBuf {
        self.config.data_dir.join(BUNDLES_DIR).join(format!("{id}.zip"))
    }

    pub fn series_path(&self, id: &str) -> PathBuf {
        self.config.data_dir.join(BUNDLES_DIR).join(format!("{id}.timeseries.json"))
    }

    /// Claim and run the oldest pending job. Pipeline failures end up in the
    /// job record; only store errors are returned.
    pub fn process_next_job(&self, lease: &WorkerLease) -> Result<Option<String>, ServiceError> {
        let Some(job) = self.jobs.claim_next(lease)? else { return Ok(None) };
        let id = job.id().to_string();
        log::info!("worker {} processing {id} (attempt {})", lease.id(), job.attempts);
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| self.run_job(&job, lease)))
            .unwrap_or_else(|p| Err(format!("worker panicked: {}", panic_message(&p))));
        let finished = match outcome {
            Ok(path) => self.jobs.mark_done(lease, &id, path)?,
            Err(message) => {
                log::warn!("request {id} failed: {message}");
                self.jobs.mark_failed(lease, &id, message)?
            }
        };
        self.notify(&finished);
        Ok(Some(id))
    }

    fn run_job(&self, job: &AoiRequest, lease: &WorkerLease) -> Result<PathBuf, String> {
        let id = job.id();
        let work = self.config.data_dir.join(WORK_DIR).join(lease.id());
        let ctx = BundleContext {
            catalog: &self.catalog,
            parcels: &self.parcels,
            columns: &self.columns,
            color_ranges: &self.config.color_ranges,
            erosion_m: self.config.erosion_m,
        };
        let result = build_bundle(&job.request, &ctx, &work);
        let _ = fs::remove_dir_all(&work);
        let bundle = result.map_err(|e| e.to_string())?;
        let series = serde_json::to_vec(&bundle.series).map_err(|e| e.to_string())?;
        write_durable(&self.series_path(id), &series).map_err(|e| e.to_string())?;
        let path = self.bundle_path(id);
        write_durable(&path, &bundle.zip).map_err(|e| e.to_string())?;
        log::info!("request {id}: {} scenes, {} parcels", bundle.manifest.scenes.len(), bundle.manifest.parcels.count);
        Ok(path)
    }

    /// Hand a finished job to the notifier and record the outcome. Nothing
    /// here can change the job's status.
    pub fn notify(&self, job: &AoiRequest) {
        let n = Notification::for_request(job, &self.config.base_url());
        let result = panic::catch_unwind(AssertUnwindSafe(|| self.notifier.notify(&n)))
            .unwrap_or_else(|p| Err(format!("notifier panicked: {}", panic_message(&p))));
        let detail = match result {
            Ok(()) => n.summary(),
            Err(e) => {
                log::error!("notification for {} failed: {e}", job.id());
                format!("notification failed: {e}")
            }
        };
        if let Err(e) = self.jobs.record_notification(job.id(), detail) {
            log::error!("cannot record notification for {}: {e}", job.id());
        }
    }

    /// Process jobs until `stop` is set, sleeping between empty polls.
    pub fn run_worker(&self, stop: &AtomicBool) -> Result<(), ServiceError> {
        let lease = self.jobs.lease()?;
        log::info!("worker {} started", lease.id());
        while !stop.load(Ordering::Relaxed) {
            let seen = *self.wake.0.lock().expect("wake lock");
            match self.process_next_job(&lease) {
                Ok(Some(_)) => continue,
                Ok(None) => {}
                Err(e) => log::error!("worker {}: {e}", lease.id()),
            }
            let (m, cv) = &self.wake;
            let guard = m.lock().expect("wake lock");
            if *guard == seen {
                let _ = cv.wait_timeout(guard, Duration::from_millis(self.config.poll_interval_ms));
            }
        }
        log::info!("worker {} stopped", lease.id());
        Ok(())
    }

    /// Wake every worker blocked in [`run_worker`](Self::run_worker).
    pub fn wake_all(&self) {
        let (m, cv) = &self.wake;
        *m.lock().expect("wake lock") += 1;
        cv.notify_all();
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Write via a temporary sibling, fsync, rename, fsync the directory.
fn write_durable(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        File::open(dir)?.sync_all()?;
    }
    Ok(())
}
