//! Parameters shared by concurrent workers: stale reads, atomic whole-gradient writes.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use sha2::{Digest, Sha256};

use super::TrainError;
use crate::autodiff::{AdamConfig, AdamState, ParamSet, Tensor};

/// SHA-256 over every parameter's name, shape and little-endian values.
pub fn params_digest(params: &ParamSet) -> String {
    let mut h = Sha256::new();
    for (name, t) in params.iter() {
        h.update(name.as_bytes());
        h.update((t.rows() as u64).to_le_bytes());
        h.update((t.cols() as u64).to_le_bytes());
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn grads_digest(grads: &[Tensor]) -> String {
    let mut h = Sha256::new();
    for t in grads {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One committed update as seen by an instrumented store.
#[derive(Clone, Debug)]
pub struct UpdateRecord {
    pub worker: usize,
    pub grads: Vec<Tensor>,
    pub grads_digest: String,
    pub before: String,
    pub after: String,
}

struct Inner {
    params: Arc<ParamSet>,
    adam: AdamState,
    updates: u64,
}

pub struct SharedParamStore {
    inner: Mutex<Inner>,
    episodes: AtomicU64,
    log: Option<Mutex<Vec<UpdateRecord>>>,
}

impl SharedParamStore {
    pub fn new(params: ParamSet, adam: AdamConfig) -> Self {
        let adam = AdamState::new(&params, adam);
        Self::with_state(params, adam, 0, 0)
    }

    /// Resumes from saved parameters, optimizer state and counters.
    pub fn with_state(params: ParamSet, adam: AdamState, updates: u64, episodes: u64) -> Self {
        SharedParamStore {
            inner: Mutex::new(Inner { params: Arc::new(params), adam, updates }),
            episodes: AtomicU64::new(episodes),
            log: None,
        }
    }

    /// Keeps every committed gradient with checksums of the parameters around it.
    pub fn instrumented(mut self) -> Self {
        self.log = Some(Mutex::new(Vec::new()));
        self
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// The latest committed parameters. Later commits do not affect the returned set.
    pub fn snapshot(&self) -> Arc<ParamSet> {
        Arc::clone(&self.lock().params)
    }

    /// Applies one worker's full gradient with Adam under the store lock.
    pub fn commit(&self, worker: usize, grads: &[Tensor]) -> Result<u64, TrainError> {
        let mut inner = self.lock();
        let before = self.log.as_ref().map(|_| params_digest(&inner.params));
        let Inner { params, adam, updates } = &mut *inner;
        // copies only if some worker still holds the previous snapshot
        adam.step(Arc::make_mut(params), grads)?;
        *updates += 1;
        if let (Some(log), Some(before)) = (&self.log, before) {
            let record = UpdateRecord {
                worker,
                grads: grads.to_vec(),
                grads_digest: grads_digest(grads),
                before,
                after: params_digest(params),
            };
            log.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        }
        Ok(*updates)
    }

    pub fn updates(&self) -> u64 {
        self.lock().updates
    }

    pub fn episodes(&self) -> u64 {
        self.episodes.load(Ordering::SeqCst)
    }

    /// Counts finished episodes; returns the new total.
    pub fn add_episodes(&self, n: u64) -> u64 {
        self.episodes.fetch_add(n, Ordering::SeqCst) + n
    }

    pub fn update_log(&self) -> Vec<UpdateRecord> {
        self.log.as_ref().map(|l| l.lock().unwrap_or_else(|e| e.into_inner()).clone()).unwrap_or_default()
    }

    /// Copies of the parameters and optimizer state.
    pub fn state(&self) -> (ParamSet, AdamState) {
        let inner = self.lock();
        ((*inner.params).clone(), inner.adam.clone())
    }

    pub fn into_params(self) -> ParamSet {
        let inner = self.inner.into_inner().unwrap_or_else(|e| e.into_inner());
        Arc::try_unwrap(inner.params).unwrap_or_else(|arc| (*arc).clone())
    }
}
