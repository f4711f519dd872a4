//! Completion notifications.
//!
//! Delivery (mail, chat, …) is up to the [`Notifier`] implementation; the
//! default only logs. Whatever happens here never changes a job's status.

use serde::Serialize;

use crate::request::{AoiRequest, JobStatus};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Notification {
    pub request_id: String,
    pub email: String,
    pub status: JobStatus,
    /// Download link for finished jobs.
    pub link: Option<String>,
    /// Failure message for failed jobs.
    pub message: Option<String>,
}

impl Notification {
    pub fn for_request(req: &AoiRequest, base_url: &str) -> Self {
        let done = req.status == JobStatus::Done;
        Self {
            request_id: req.id().to_string(),
            email: req.request.email.clone(),
            status: req.status,
            link: done.then(|| bundle_url(base_url, req.id())),
            message: if done { None } else { req.message.clone() },
        }
    }

    /// One-line summary stored in the job record.
    pub fn summary(&self) -> String {
        match (&self.link, &self.message) {
            (Some(link), _) => format!("{}: {}", self.status, link),
            (None, Some(m)) => format!("{}: {}", self.status, m),
            (None, None) => self.status.to_string(),
        }
    }
}

pub fn bundle_url(base_url: &str, id: &str) -> String {
    format!("{}/api/requests/{id}/bundle.zip", base_url.trim_end_matches('/'))
}

pub trait Notifier: Send + Sync {
    fn notify(&self, n: &Notification) -> Result<(), String>;
}

/// Writes the notification to the log; the caller records it in the job.
#[derive(Debug, Default, Clone, Copy)]
pub struct LogNotifier;

impl Notifier for LogNotifier {
    fn notify(&self, n: &Notification) -> Result<(), String> {
        log::info!("notify {} <{}>: {}", n.request_id, n.email, n.summary());
        Ok(())
    }
}
