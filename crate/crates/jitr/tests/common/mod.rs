#![allow(dead_code)]

use std::sync::Arc;

use jitr::config::JitrConfig;
use jitr::corpus::{bundled_zoo, TraceGenerator};
use jitr::engine::Engine;
use jitr::trace::TraceLine;
use jitr::upstream::MockLlm;
use jitr::wire::{ChatRequest, ChatResponse, Message};
use jitr_core::clock::FrozenClock;
use jitr_core::lifecycle::LifecycleState;
use jitr_core::miner::TaskId;
use jitr_core::monitor::OfferStatus;

/// Small windows and budgets so a task deploys within ~1,000 requests.
pub fn fast_config() -> JitrConfig {
    let mut c = JitrConfig::default();
    c.monitor.window = 100;
    c.monitor.probe_fraction = 0.2;
    c.lifecycle.min_train_examples = 400;
    c.lifecycle.collect_target = 400;
    c.lifecycle.search_examples = 400;
    c
}

pub fn mock(cfg: &JitrConfig) -> Arc<MockLlm> {
    Arc::new(MockLlm::new(cfg.mock.clone(), cfg.wrapper().unwrap(), &cfg.corpus))
}

pub fn engine(cfg: &JitrConfig) -> Engine {
    Engine::in_memory(cfg.clone(), Arc::new(bundled_zoo(&cfg.corpus)), Arc::new(FrozenClock)).unwrap()
}

pub fn trace(cfg: &JitrConfig, n: usize, seed: u64) -> Vec<TraceLine> {
    TraceGenerator::new(cfg.corpus.clone()).sentiment(n, seed)
}

pub fn request(line: &TraceLine, id: &str) -> ChatRequest {
    let mut r = ChatRequest::new("gpt-4.1", vec![Message::user(line.prompt.clone())]);
    r.request_id = id.to_string();
    r.received_at = line.timestamp;
    r
}

/// Sends `lines` with ids `{prefix}-{i}`, accepting offers as they appear.
pub fn drive(engine: &mut Engine, mock: &MockLlm, lines: &[TraceLine], prefix: &str) -> Vec<ChatResponse> {
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        mock.set_truth(&l.prompt, l.ground_truth_label.as_deref().unwrap());
        out.push(engine.handle(request(l, &format!("{prefix}-{i}")), mock).unwrap());
        accept_pending(engine, l.timestamp);
    }
    out
}

pub fn accept_pending(engine: &mut Engine, ts: u64) {
    let pending: Vec<u64> =
        engine.state().offers.values().filter(|o| o.status == OfferStatus::Pending).map(|o| o.offer_id).collect();
    for id in pending {
        engine.decide_offer(id, true, ts).unwrap();
    }
}

/// Drives fresh trace lines until `task` reaches `state`; panics after `limit`.
pub fn drive_until(
    engine: &mut Engine,
    mock: &MockLlm,
    cfg: &JitrConfig,
    task: TaskId,
    state: LifecycleState,
    limit: usize,
    seed: u64,
) -> usize {
    let lines = trace(cfg, limit, seed);
    for (i, l) in lines.iter().enumerate() {
        if engine.state().task(task).is_some_and(|t| t.state() == state) {
            return i;
        }
        mock.set_truth(&l.prompt, l.ground_truth_label.as_deref().unwrap());
        engine.handle(request(l, &format!("u{seed}-{i}")), mock).unwrap();
        accept_pending(engine, l.timestamp);
    }
    panic!("{task} did not reach {state} within {limit} requests");
}
