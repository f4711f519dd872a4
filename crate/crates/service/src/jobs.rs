//! Durable job store.
//!
//! State lives in an append-only event journal (`jobs.jsonl`). Every mutation
//! takes an exclusive lock on `jobs.lock`, replays the journal, checks the
//! transition against the replayed state and appends one event, so any
//! number of processes can share a store. Readers replay without the lock and
//! only ever see complete events.
//!
//! Workers hold a lease: an exclusively locked file `workers/<id>.lock`. The
//! OS drops the lock when the process dies, which is how recovery tells a
//! crashed worker's jobs from live ones.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use fieldbabel_core::journal::{Journal, JournalError};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::request::{AoiRequest, JobStatus, NewRequest};

const JOURNAL_FILE: &str = "jobs.jsonl";
const LOCK_FILE: &str = "jobs.lock";
const WORKERS_DIR: &str = "workers";

#[derive(Debug, Error)]
pub enum JobStoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("request {0} not found")]
    NotFound(String),
    #[error("request {request_id}: cannot go from {from} via {event}")]
    InvalidTransition { request_id: String, from: JobStatus, event: &'static str },
    #[error("request {request_id} is held by worker {holder:?}, not {worker}")]
    NotOwner { request_id: String, worker: String, holder: Option<String> },
    #[error("request {0} already exists")]
    DuplicateId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JobStoreError + '_ {
    move |source| JobStoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JobEvent {
    Submitted { request: NewRequest },
    Started { request_id: String, worker: String, at: DateTime<Utc> },
    Done { request_id: String, bundle_path: PathBuf, at: DateTime<Utc> },
    Failed { request_id: String, message: String, at: DateTime<Utc> },
    /// A processing job whose worker vanished goes back to pending.
    Requeued { request_id: String, worker: String, at: DateTime<Utc> },
    Notified { request_id: String, detail: String, at: DateTime<Utc> },
}

impl JobEvent {
    fn name(&self) -> &'static str {
        match self {
            JobEvent::Submitted { .. } => "submitted",
            JobEvent::Started { .. } => "started",
            JobEvent::Done { .. } => "done",
            JobEvent::Failed { .. } => "failed",
            JobEvent::Requeued { .. } => "requeued",
            JobEvent::Notified { .. } => "notified",
        }
    }

    fn request_id(&self) -> &str {
        match self {
            JobEvent::Submitted { request } => &request.request_id,
            JobEvent::Started { request_id, .. }
            | JobEvent::Done { request_id, .. }
            | JobEvent::Failed { request_id, .. }
            | JobEvent::Requeued { request_id, .. }
            | JobEvent::Notified { request_id, .. } => request_id,
        }
    }
}

/// Replayed store contents, in submission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JobState {
    requests: Vec<AoiRequest>,
    index: HashMap<String, usize>,
}

impl JobState {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a JobEvent>) -> Result<Self, JobStoreError> {
        let mut s = JobState::default();
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn requests(&self) -> &[AoiRequest] {
        &self.requests
    }

    pub fn get(&self, id: &str) -> Option<&AoiRequest> {
        self.index.get(id).map(|&i| &self.requests[i])
    }

    /// Oldest pending request.
    pub fn next_pending(&self) -> Option<&AoiRequest> {
        self.requests.iter().find(|r| r.status == JobStatus::Pending)
    }

    /// Check `event` against the current state without applying it.
    pub fn check(&self, event: &JobEvent) -> Result<(), JobStoreError> {
        let id = event.request_id();
        if let JobEvent::Submitted { .. } = event {
            return if self.index.contains_key(id) { Err(JobStoreError::DuplicateId(id.into())) } else { Ok(()) };
        }
        let r = self.get(id).ok_or_else(|| JobStoreError::NotFound(id.into()))?;
        let ok = match event {
            JobEvent::Submitted { .. } => unreachable!(),
            JobEvent::Started { .. } => r.status == JobStatus::Pending,
            JobEvent::Done { .. } | JobEvent::Failed { .. } | JobEvent::Requeued { .. } => {
                r.status == JobStatus::Processing
            }
            JobEvent::Notified { .. } => r.status.is_terminal(),
        };
        if !ok {
            return Err(JobStoreError::InvalidTransition { request_id: id.into(), from: r.status, event: event.name() });
        }
        if let JobEvent::Requeued { worker, .. } = event {
            if r.worker.as_deref() != Some(worker) {
                return Err(JobStoreError::NotOwner {
                    request_id: id.into(),
                    worker: worker.clone(),
                    holder: r.worker.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, event: &JobEvent) -> Result<(), JobStoreError> {
        self.check(event)?;
        if let JobEvent::Submitted { request } = event {
            self.index.insert(request.request_id.clone(), self.requests.len());
            self.requests.push(AoiRequest {
                request: request.clone(),
                status: JobStatus::Pending,
                message: None,
                bundle_path: None,
                worker: None,
                attempts: 0,
                notification: None,
            });
            return Ok(());
        }
        let i = self.index[event.request_id()];
        let r = &mut self.requests[i];
        match event {
            JobEvent::Submitted { .. } => unreachable!(),
            JobEvent::Started { worker, .. } => {
                r.status = JobStatus::Processing;
                r.worker = Some(worker.clone());
                r.attempts += 1;
            }
            JobEvent::Done { bundle_path, .. } => {
                r.status = JobStatus::Done;
                r.bundle_path = Some(bundle_path.clone());
                r.message = None;
                r.worker = None;
            }
            JobEvent::Failed { message, .. } => {
                r.status = JobStatus::Failed;
                r.message = Some(message.clone());
                r.worker = None;
            }
            JobEvent::Requeued { worker, .. } => {
                r.status = JobStatus::Pending;
                r.message = Some(format!("requeued after worker {worker} stopped"));
                r.worker = None;
            }
            JobEvent::Notified { detail, .. } => r.notification = Some(detail.clone()),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JobStore {
    dir: PathBuf,
}

impl JobStore {
    /// Open or create a store under `dir` and check that its journal replays.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, JobStoreError> {
        let dir = dir.as_ref().to_path_buf();
        let workers = dir.join(WORKERS_DIR);
        fs::create_dir_all(&workers).map_err(io_err(&workers))?;
        let store = Self { dir };
        store.with_lock(|_, _| Ok(()))?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn journal_path(&self) -> PathBuf {
        self.dir.join(JOURNAL_FILE)
    }

    /// Committed state as of now.
    pub fn snapshot(&self) -> Result<JobState, JobStoreError> {
        let events = Journal::<JobEvent>::read_all(self.journal_path())?;
        JobState::replay(&events)
    }

    pub fn get(&self, id: &str) -> Result<Option<AoiRequest>, JobStoreError> {
        Ok(self.snapshot()?.get(id).cloned())
    }

    pub fn list(&self) -> Result<Vec<AoiRequest>, JobStoreError> {
        Ok(self.snapshot()?.requests)
    }

    /// Run `f` with the journal open for writing and the replayed state, under
    /// the store lock.
    fn with_lock<R>(
        &self,
        f: impl FnOnce(&mut Journal<JobEvent>, &mut JobState) -> Result<R, JobStoreError>,
    ) -> Result<R, JobStoreError> {
        let lock_path = self.dir.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        lock.lock().map_err(io_err(&lock_path))?;
        let (mut journal, events) = Journal::<JobEvent>::open(self.journal_path())?;
        let mut state = JobState::replay(&events)?;
        f(&mut journal, &mut state)
        // `lock` is released on drop.
    }

    fn commit(journal: &mut Journal<JobEvent>, state: &mut JobState, event: JobEvent) -> Result<(), JobStoreError> {
        state.check(&event)?;
        journal.append(&event)?;
        state.apply(&event)
    }

    pub fn submit(&self, request: NewRequest) -> Result<AoiRequest, JobStoreError> {
        let id = request.request_id.clone();
        self.with_lock(|j, s| {
            Self::commit(j, s, JobEvent::Submitted { request })?;
            Ok(s.get(&id).cloned().expect("just submitted"))
        })
    }

    /// Requeue processing jobs whose worker no longer holds its lease, and
    /// delete the stale lease files. Returns the requeued ids.
    pub fn recover(&self) -> Result<Vec<String>, JobStoreError> {
        self.with_lock(|j, s| self.recover_locked(j, s))
    }

    fn recover_locked(&self, j: &mut Journal<JobEvent>, s: &mut JobState) -> Result<Vec<String>, JobStoreError> {
        let mut alive: HashMap<String, bool> = HashMap::new();
        let stale: Vec<(String, String)> = s
            .requests
            .iter()
            .filter(|r| r.status == JobStatus::Processing)
            .filter_map(|r| {
                let w = r.worker.clone().unwrap_or_default();
                let live = *alive.entry(w.clone()).or_insert_with(|| self.lease_alive(&w));
                (!live).then(|| (r.id().to_string(), w))
            })
            .collect();
        let mut out = Vec::new();
        for (id, worker) in stale {
            log::warn!("requeueing {id}: worker {worker} is gone");
            Self::commit(j, s, JobEvent::Requeued { request_id: id.clone(), worker, at: Utc::now() })?;
            out.push(id);
        }
        self.sweep_leases();
        Ok(out)
    }

    fn lease_path(&self, worker: &str) -> PathBuf {
        self.dir.join(WORKERS_DIR).join(format!("{worker}.lock"))
    }

    fn lease_alive(&self, worker: &str) -> bool {
        if worker.is_empty() || !worker.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return false;
        }
        let Ok(f) = File::open(self.lease_path(worker)) else { return false };
        matches!(f.try_lock(), Err(fs::TryLockError::WouldBlock))
    }

    /// Remove lease files nobody holds. Only called under the store lock, and
    /// leases are taken under the same lock, so a fresh lease is never seen
    /// half-made.
    fn sweep_leases(&self) {
        let dir = self.dir.join(WORKERS_DIR);
        let Ok(rd) = fs::read_dir(&dir) else { return };
        for entry in rd.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "lock") {
                if let Ok(f) = File::open(&p) {
                    if f.try_lock().is_ok() {
                        let _ = fs::remove_file(&p);
                    }
                }
            }
        }
    }

    /// Take a fresh worker lease.
    pub fn lease(&self) -> Result<WorkerLease, JobStoreError> {
        self.with_lock(|_, _| {
            let mut bytes = [0u8; 8];
            rand::rng().fill_bytes(&mut bytes);
            let id: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
            let path = self.lease_path(&id);
            let file = OpenOptions::new().create_new(true).write(true).open(&path).map_err(io_err(&path))?;
            file.lock().map_err(io_err(&path))?;
            Ok(WorkerLease { id, path, _file: file })
        })
    }

    /// Recover, then move the oldest pending request to processing under
    /// `lease`.
    pub fn claim_next(&self, lease: &WorkerLease) -> Result<Option<AoiRequest>, JobStoreError> {
        self.with_lock(|j, s| {
            self.recover_locked(j, s)?;
            let Some(id) = s.next_pending().map(|r| r.id().to_string()) else { return Ok(None) };
            Self::commit(
                j,
                s,
                JobEvent::Started { request_id: id.clone(), worker: lease.id.clone(), at: Utc::now() },
            )?;
            Ok(s.get(&id).cloned())
        })
    }

    fn finish(&self, lease: &WorkerLease, event: JobEvent) -> Result<AoiRequest, JobStoreError> {
        let id = event.request_id().to_string();
        self.with_lock(|j, s| {
            let holder = s.get(&id).ok_or_else(|| JobStoreError::NotFound(id.clone()))?.worker.clone();
            if holder.as_deref() != Some(lease.id.as_str()) {
                return Err(JobStoreError::NotOwner { request_id: id.clone(), worker: lease.id.clone(), holder });
            }
            Self::commit(j, s, event)?;
            Ok(s.get(&id).cloned().expect("known id"))
        })
    }

    pub fn mark_done(&self, lease: &WorkerLease, id: &str, bundle_path: PathBuf) -> Result<AoiRequest, JobStoreError> {
        self.finish(lease, JobEvent::Done { request_id: id.into(), bundle_path, at: Utc::now() })
    }

    pub fn mark_failed(&self, lease: &WorkerLease, id: &str, message: String) -> Result<AoiRequest, JobStoreError> {
        self.finish(lease, JobEvent::Failed { request_id: id.into(), message, at: Utc::now() })
    }

    pub fn record_notification(&self, id: &str, detail: String) -> Result<(), JobStoreError> {
        self.with_lock(|j, s| Self::commit(j, s, JobEvent::Notified { request_id: id.into(), detail, at: Utc::now() }))
    }
}

/// Proof that a worker is alive; dropping it (or dying) releases the lease.
#[derive(Debug)]
pub struct WorkerLease {
    id: String,
    path: PathBuf,
    _file: File,
}

impl WorkerLease {
    pub fn id(&self) -> &str {
        &self.id
    }
}

impl Drop for WorkerLease {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
