//! Thread-safe gateway around an [`Engine`].
//!
//! The engine lock is held while a request is planned and while it is
//! finished, never during the upstream call. Search and training jobs run
//! on their own threads when the engine queues them.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use jitr_core::clock::Clock;
use jitr_core::monitor::Offer;

use crate::engine::{execute, Engine, GatewayError, JobMode, OfferError};
use crate::upstream::Upstream;
use crate::wire::{ChatRequest, ChatResponse};

/// Seconds since the clock was created.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Inner {
    engine: Mutex<Engine>,
    upstream: Box<dyn Upstream>,
    clock: Arc<dyn Clock + Send + Sync>,
    jobs: Mutex<usize>,
    idle: Condvar,
}

#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl Gateway {
    /// `background` runs search and training on worker threads; otherwise
    /// they run inside the request that triggers them.
    pub fn new(mut engine: Engine, upstream: Box<dyn Upstream>, clock: Arc<dyn Clock + Send + Sync>, background: bool) -> Self {
        engine.set_job_mode(if background { JobMode::Queued } else { JobMode::Inline });
        Gateway {
            inner: Arc::new(Inner { engine: Mutex::new(engine), upstream, clock, jobs: Mutex::new(0), idle: Condvar::new() }),
        }
    }

    pub fn engine(&self) -> MutexGuard<'_, Engine> {
        self.inner.engine.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn handle(&self, mut request: ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.received_at == 0 {
            request.received_at = now_ms();
        }
        loop {
            let (plan, wrapper) = {
                let mut e = self.engine();
                (e.plan(request.clone())?, e.wrapper().clone())
            };
            let outcome = execute(&plan, &*self.inner.upstream, &wrapper, &*self.inner.clock);
            let finished = self.engine().finish(plan, outcome);
            self.spawn_jobs();
            match finished {
                Ok(r) => return r,
                Err(_) => log::debug!("route changed in flight, planning again"),
            }
        }
    }

    fn spawn_jobs(&self) {
        let jobs = self.engine().take_jobs();
        for job in jobs {
            *self.inner.jobs.lock().unwrap_or_else(|e| e.into_inner()) += 1;
            let inner = self.inner.clone();
            let gw = self.clone();
            std::thread::spawn(move || {
                let task = job.task_id();
                let out = job.run(&*inner.clock);
                if let Err(e) = gw.engine().complete_job(out, now_ms()) {
                    log::error!("{task}: job completion failed: {e:#}");
                }
                gw.spawn_jobs();
                let mut n = inner.jobs.lock().unwrap_or_else(|e| e.into_inner());
                *n -= 1;
                inner.idle.notify_all();
            });
        }
    }

    /// Blocks until no background job is running.
    pub fn wait_idle(&self) {
        let mut n = self.inner.jobs.lock().unwrap_or_else(|e| e.into_inner());
        while *n > 0 {
            n = self.inner.idle.wait(n).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn offers(&self) -> Vec<Offer> {
        self.engine().offers()
    }

    pub fn decide_offer(&self, offer_id: u64, accept: bool) -> Result<Offer, OfferError> {
        self.engine().decide_offer(offer_id, accept, now_ms())
    }
}
