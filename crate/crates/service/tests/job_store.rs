use std::collections::HashMap;

use chrono::Utc;
use fieldbabel_core::analytics::RatioMode;
use fieldbabel_core::journal::Journal;
use fieldbabel_core::raster::BBox;
use fieldbabel_core::vector::Polygon;
use fieldbabel_service::request::new_request_id;
use fieldbabel_service::{JobEvent, JobState, JobStatus, JobStore, NewRequest, WorkerLease};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Submit,
    Claim(usize),
    Finish(usize, bool),
    /// The worker process dies: its lease goes away without finishing.
    Crash(usize),
    Recover,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => Just(Op::Submit),
        3 => (0..3usize).prop_map(Op::Claim),
        3 => (0..3usize, any::<bool>()).prop_map(|(w, ok)| Op::Finish(w, ok)),
        1 => (0..3usize).prop_map(Op::Crash),
        1 => Just(Op::Recover),
    ]
}

fn request() -> NewRequest {
    NewRequest {
        request_id: new_request_id(),
        email: "a@b.dk".into(),
        polygon: Polygon::rectangle(&BBox::new(9.0, 56.0, 9.1, 56.1)),
        crop: "All".into(),
        year: 2017,
        ratio_mode: RatioMode::DbQuotient,
        created_at: Utc::now(),
    }
}

/// Statuses a request went through, from the journal.
fn histories(events: &[JobEvent]) -> HashMap<String, Vec<JobStatus>> {
    let mut h: HashMap<String, Vec<JobStatus>> = HashMap::new();
    for e in events {
        match e {
            JobEvent::Submitted { request } => {
                h.insert(request.request_id.clone(), vec![JobStatus::Pending]);
            }
            JobEvent::Started { request_id, .. } => h.get_mut(request_id).unwrap().push(JobStatus::Processing),
            JobEvent::Done { request_id, .. } => h.get_mut(request_id).unwrap().push(JobStatus::Done),
            JobEvent::Failed { request_id, .. } => h.get_mut(request_id).unwrap().push(JobStatus::Failed),
            JobEvent::Requeued { request_id, .. } => h.get_mut(request_id).unwrap().push(JobStatus::Pending),
            JobEvent::Notified { .. } => {}
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn state_machine_holds_under_random_schedules(ops in prop::collection::vec(op(), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let store = JobStore::open(dir.path()).unwrap();
        let mut workers: Vec<Option<WorkerLease>> = (0..3).map(|_| None).collect();
        let mut held: Vec<Option<String>> = vec![None; 3];
        let mut submitted = Vec::new();

        for op in &ops {
            match *op {
                Op::Submit => submitted.push(store.submit(request()).unwrap().id().to_string()),
                Op::Claim(w) => {
                    if held[w].is_none() {
                        let lease = workers[w].get_or_insert_with(|| store.lease().unwrap());
                        held[w] = store.claim_next(lease).unwrap().map(|r| r.id().to_string());
                    }
                }
                Op::Finish(w, ok) => {
                    if let (Some(id), Some(lease)) = (held[w].take(), workers[w].as_ref()) {
                        if ok {
                            store.mark_done(lease, &id, format!("{id}.zip").into()).unwrap();
                        } else {
                            store.mark_failed(lease, &id, "boom".into()).unwrap();
                        }
                    }
                }
                Op::Crash(w) => {
                    workers[w] = None;
                    held[w] = None;
                }
                Op::Recover => {
                    store.recover().unwrap();
                }
            }
            // Whatever a live worker holds is still processing under it.
            let snap = store.snapshot().unwrap();
            for (w, id) in held.iter().enumerate() {
                if let Some(id) = id {
                    let r = snap.get(id).unwrap();
                    prop_assert_eq!(r.status, JobStatus::Processing);
                    prop_assert_eq!(r.worker.as_deref(), workers[w].as_ref().map(|l| l.id()));
                }
            }
        }

        // Recovery leaves nothing stuck: only jobs held by live workers
        // remain processing.
        store.recover().unwrap();
        let snap = store.snapshot().unwrap();
        prop_assert_eq!(snap.requests().len(), submitted.len());
        for r in snap.requests() {
            prop_assert!(submitted.contains(&r.id().to_string()));
            if r.status == JobStatus::Processing {
                prop_assert!(held.iter().any(|h| h.as_deref() == Some(r.id())));
            }
            prop_assert_eq!(r.bundle_path.is_some(), r.status == JobStatus::Done);
        }

        // Every history is pending (processing pending)* [processing [done|failed]].
        let events = Journal::<JobEvent>::read_all(store.journal_path()).unwrap();
        for (id, h) in histories(&events) {
            prop_assert_eq!(h[0], JobStatus::Pending, "{}", id);
            for w in h.windows(2) {
                let ok = matches!(
                    (w[0], w[1]),
                    (JobStatus::Pending, JobStatus::Processing)
                        | (JobStatus::Processing, JobStatus::Pending)
                        | (JobStatus::Processing, JobStatus::Done)
                        | (JobStatus::Processing, JobStatus::Failed)
                );
                prop_assert!(ok, "{} {:?}", id, h);
            }
        }

        // Any prefix of the journal replays.
        let bytes = std::fs::read(store.journal_path()).unwrap();
        let path = dir.path().join("prefix.jsonl");
        for cut in (0..=bytes.len()).step_by(bytes.len() / 13 + 1) {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            let prefix = Journal::<JobEvent>::read_all(&path).unwrap();
            prop_assert!(JobState::replay(&prefix).is_ok());
        }
    }
}

#[test]
fn concurrent_claims_never_double_assign() {
    let dir = tempfile::tempdir().unwrap();
    let store = JobStore::open(dir.path()).unwrap();
    for _ in 0..40 {
        store.submit(request()).unwrap();
    }
    let claimed: Vec<Vec<String>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let store = store.clone();
                s.spawn(move || {
                    let lease = store.lease().unwrap();
                    let mut mine = Vec::new();
                    while let Some(r) = store.claim_next(&lease).unwrap() {
                        store.mark_done(&lease, r.id(), "x".into()).unwrap();
                        mine.push(r.id().to_string());
                    }
                    mine
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut all: Vec<String> = claimed.into_iter().flatten().collect();
    all.sort();
    let n = all.len();
    all.dedup();
    assert_eq!((n, all.len()), (40, 40));
}
