//! Trace-driven simulation against the mock LLM.
//!
//! Every trace line goes through the full request path. Pending offers are
//! accepted as soon as they appear. Cost and time curves are then computed
//! from the traffic profile measured on the ledger.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use jitr_core::clock::FrozenClock;
use jitr_core::cost::{CostModel, CostReport, Money, TimeModel, TrafficProfile};
use jitr_core::lifecycle::{LifecycleEvent, LifecycleState};
use jitr_core::miner::TaskId;
use jitr_core::monitor::OfferStatus;
use jitr_core::zoo::{CandidateScore, ModelStore};
use serde::Serialize;

use crate::config::JitrConfig;
use crate::engine::{Engine, TaskView};
use crate::ledger::{decode, read_ledger, Entry, LedgerWriter, Record, RouteMode};
use crate::state::Totals;
use crate::trace::TraceLine;
use crate::upstream::MockLlm;
use crate::wire::{ChatRequest, Message};

/// Request counts at which the curves are sampled.
pub fn curve_points(horizon: u64, step: u64) -> Vec<u64> {
    let step = step.max(1);
    let mut v: Vec<u64> = (0..=horizon / step).map(|k| k * step).collect();
    if v.last() != Some(&horizon) {
        v.push(horizon);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRow {
    pub offset: u64,
    pub task_id: TaskId,
    pub from: LifecycleState,
    pub to: LifecycleState,
    pub event: LifecycleEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCosts {
    pub llm_model: String,
    pub break_even_n: Option<u64>,
    pub savings_at_1m: Money,
    pub cost_ratio_at_1m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSummary {
    pub model: TimeModel,
    pub break_even_n: u64,
    pub speedup_at_1m: f64,
    pub speedup_at_2m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub requests: u64,
    pub llm_cost_usd: f64,
    pub jitr_cost_usd: f64,
    pub llm_time_s: f64,
    pub jitr_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub requests: u64,
    pub totals: Totals,
    pub tasks: Vec<TaskView>,
    /// The task with the most requests; the cost analysis is about it.
    pub primary_task: Option<TaskId>,
    pub deployed: bool,
    /// Accuracy of LLM answers against ground truth.
    pub teacher_accuracy: Option<f64>,
    /// Accuracy of surrogate answers against ground truth.
    pub surrogate_accuracy: Option<f64>,
    /// Surrogate/LLM agreement over the shadow run.
    pub shadow_agreement: Option<f64>,
    pub profile: Option<TrafficProfile>,
    pub llm_model: String,
    pub surrogate_model: String,
    pub cost: Option<CostReport>,
    pub cost_by_model: Vec<ModelCosts>,
    pub time: Option<TimeSummary>,
    pub ranking: Vec<CandidateScore>,
    pub transitions: Vec<TransitionRow>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationOptions {
    /// Largest request count on the curves.
    pub horizon: u64,
    pub step: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions { horizon: 2_000_000, step: 10_000 }
    }
}

fn ratio(hits: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Replays `lines` through a fresh in-memory pipeline. With `out_dir` the
/// ledger and artifacts are written there.
pub fn simulate(
    config: &JitrConfig,
    store: Arc<ModelStore>,
    lines: &[TraceLine],
    out_dir: Option<&Path>,
    opts: SimulationOptions,
) -> anyhow::Result<SimulationReport> {
    let mut config = config.clone();
    config.monitor.auto_approve = false;
    let wrapper = config.wrapper()?;
    let mock = MockLlm::new(config.mock.clone(), wrapper, &config.corpus);
    for l in lines {
        if let Some(label) = &l.ground_truth_label {
            mock.set_truth(&l.prompt, label);
        }
    }
    let clock = Arc::new(FrozenClock);
    let ledger_path = out_dir.map(|d| d.join("ledger.log"));
    let mut engine = match (out_dir, &ledger_path) {
        (Some(dir), Some(path)) => {
            std::fs::create_dir_all(dir)?;
            anyhow::ensure!(!path.exists(), "{} already exists; simulate into an empty directory", path.display());
            let (ledger, existing) = LedgerWriter::open(path, false)?;
            Engine::new(config.clone(), store, clock, ledger, &existing, Some(dir.join("artifacts")))?
        }
        _ => Engine::in_memory(config.clone(), store, clock)?,
    };
    let model = config.cost.llm_model.clone();
    let mut truth = BTreeMap::new();
    for (i, l) in lines.iter().enumerate() {
        let mut req = ChatRequest::new(l.model.clone().unwrap_or_else(|| model.clone()), vec![Message::user(l.prompt.clone())]);
        req.request_id = format!("sim-{i}");
        req.received_at = l.timestamp;
        if let Some(t) = &l.ground_truth_label {
            truth.insert(req.request_id.clone(), t.clone());
        }
        if let Err(e) = engine.handle(req, &mock) {
            log::warn!("trace line {}: {e}", i + 1);
        }
        let pending: Vec<u64> =
            engine.state().offers.values().filter(|o| o.status == OfferStatus::Pending).map(|o| o.offer_id).collect();
        for id in pending {
            engine.decide_offer(id, true, l.timestamp)?;
        }
    }
    let entries = match (engine.ledger().memory(), &ledger_path) {
        (Some(bytes), _) => decode(bytes)?,
        (None, Some(path)) => read_ledger(path)?,
        (None, None) => Vec::new(),
    };
    build_report(&engine, &entries, &truth, opts)
}

fn build_report(
    engine: &Engine,
    entries: &[Entry],
    truth: &BTreeMap<String, String>,
    opts: SimulationOptions,
) -> anyhow::Result<SimulationReport> {
    let state = engine.state();
    let config = engine.config();
    let (mut teacher, mut teacher_n, mut sur, mut sur_n, mut shadow, mut shadow_n) = (0, 0, 0, 0, 0, 0);
    let mut transitions = Vec::new();
    for e in entries {
        match &e.record {
            Record::Trace(t) => {
                let gt = truth.get(&t.request_id);
                if let (Some(gt), Some(label)) = (gt, &t.label) {
                    if t.mode != RouteMode::Surrogate {
                        teacher_n += 1;
                        teacher += u64::from(label == gt);
                    }
                }
                if let (Some(gt), Some(label)) = (gt, &t.surrogate_label) {
                    sur_n += 1;
                    sur += u64::from(label == gt);
                }
                if t.mode == RouteMode::Shadow {
                    if let (Some(a), Some(b)) = (&t.label, &t.surrogate_label) {
                        shadow_n += 1;
                        shadow += u64::from(a == b);
                    }
                }
            }
            Record::Transition(t) => transitions.push(TransitionRow {
                offset: e.offset,
                task_id: t.task_id,
                from: t.from,
                to: t.to,
                event: t.event,
            }),
            _ => {}
        }
    }
    let primary = state.tasks.values().max_by_key(|t| (t.record.member_count, std::cmp::Reverse(t.record.task_id))).map(|t| t.record.task_id);
    let profile = primary.and_then(|t| engine.measured_profile(t));
    let llm_model = primary.map_or_else(|| config.cost.llm_model.clone(), |t| engine.llm_model_for(t));
    let surrogate_model = config.cost.surrogate_model.clone();
    let pricing = engine.pricing();
    let cost = profile.map(|p| CostModel::new(p, &llm_model, &surrogate_model, pricing)).transpose()?;
    let points = curve_points(opts.horizon, opts.step);
    let mut cost_by_model = Vec::new();
    if let Some(p) = profile {
        for (name, _) in pricing.models() {
            if name == surrogate_model {
                continue;
            }
            let m = CostModel::new(p, name, &surrogate_model, pricing)?;
            cost_by_model.push(ModelCosts {
                llm_model: name.to_string(),
                break_even_n: m.break_even(),
                savings_at_1m: m.savings_at(1_000_000),
                cost_ratio_at_1m: m.cost_ratio_at(1_000_000),
            });
        }
    }
    let time_model = profile.map(|p| config.time_model_at(p.switch_index)).transpose()?;
    let curve = match (&cost, &time_model) {
        (Some(c), Some(t)) => points
            .iter()
            .map(|&n| CurvePoint {
                requests: n,
                llm_cost_usd: c.llm_cumulative(n).usd(),
                jitr_cost_usd: c.jitr_cumulative(n).usd(),
                llm_time_s: t.llm_time(n),
                jitr_time_s: t.jitr_time(n),
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(SimulationReport {
        requests: state.totals.requests,
        totals: state.totals.clone(),
        tasks: state.tasks.keys().filter_map(|&t| engine.task_view(t)).collect(),
        primary_task: primary,
        deployed: primary.is_some_and(|t| state.routes.contains_key(&t)),
        teacher_accuracy: ratio(teacher, teacher_n),
        surrogate_accuracy: ratio(sur, sur_n),
        shadow_agreement: ratio(shadow, shadow_n),
        profile,
        llm_model,
        surrogate_model,
        cost: cost.map(|c| c.report(&[10_000, 100_000, 1_000_000, 2_000_000])),
        cost_by_model,
        time: time_model.map(|t| TimeSummary {
            model: t,
            break_even_n: t.break_even(),
            speedup_at_1m: t.speedup(1_000_000),
            speedup_at_2m: t.speedup(2_000_000),
        }),
        ranking: primary.and_then(|t| state.tasks[&t].ranking.clone()).unwrap_or_default(),
        transitions,
        curve,
    })
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_curve_csv(&self, w: impl Write) -> anyhow::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.curve {
            out.serialize(p)?;
        }
        if self.curve.is_empty() {
            out.write_record(["requests", "llm_cost_usd", "jitr_cost_usd", "llm_time_s", "jitr_time_s"])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `curves.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        self.write_curve_csv(std::fs::File::create(dir.join("curves.csv"))?)
    }
}
