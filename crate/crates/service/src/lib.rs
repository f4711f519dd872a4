//! Request-driven result bundles over a scene catalog.
//!
//! Clients submit an AOI polygon with crop and year; a worker cuts the
//! season's composites, parcels and per-parcel series out of the catalog and
//! packages them with a QGIS project. Jobs live in a durable journal shared
//! by the HTTP front end and any number of worker processes.

pub mod bundle;
pub mod config;
pub mod demo;
pub mod http;
pub mod jobs;
pub mod notify;
pub mod qgis;
pub mod request;
pub mod service;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::thread::JoinHandle;

pub use bundle::{build_bundle, Bundle, BundleContext, BundleError, Manifest, SeriesDocument};
pub use config::{ConfigError, ServiceConfig};
pub use http::{router, serve, StatusView};
pub use jobs::{JobEvent, JobState, JobStore, JobStoreError, WorkerLease};
pub use notify::{LogNotifier, Notification, Notifier};
pub use qgis::{build_project_descriptor, ColorRanges};
pub use request::{AoiRequest, JobStatus, NewRequest, SubmitError, Submission};
pub use service::{Service, ServiceError};

/// Start `n` worker threads that run until `stop` is set (then call
/// [`Service::wake_all`] and join).
pub fn spawn_workers(service: Arc<Service>, n: usize, stop: Arc<AtomicBool>) -> Vec<JoinHandle<()>> {
    (0..n)
        .map(|i| {
            let svc = service.clone();
            let stop = stop.clone();
            std::thread::Builder::new()
                .name(format!("worker-{i}"))
                .spawn(move || {
                    if let Err(e) = svc.run_worker(&stop) {
                        log::error!("worker {i} exited: {e}");
                    }
                })
                .expect("spawn worker thread")
        })
        .collect()
}
