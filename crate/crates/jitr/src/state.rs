//! System state as a fold over ledger records.
//!
//! The gateway never mutates this state directly: it appends a record and
//! applies it, so replaying the ledger reproduces the live state exactly.

use std::collections::{BTreeMap, BTreeSet};

use jitr_core::learn::LabeledExample;
use jitr_core::lifecycle::LifecycleState;
use jitr_core::miner::{ClusterSet, PromptSignature, TaskId, TaskRecord};
use jitr_core::monitor::{DriftDetector, Offer, ShadowObservation};
use jitr_core::zoo::CandidateScore;
use serde::Serialize;

use crate::artifact::{model_input, ArtifactSummary};
use crate::config::JitrConfig;
use crate::dataset::{infer_schema, split_indices, LabelSchema, Split};
use crate::ledger::{Entry, Record, RouteMode, TraceEvent, Transition};
use crate::wire::ServedBy;

/// A request whose LLM answer is usable as training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub offset: u64,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub record: TaskRecord,
    pub exemplar: String,
    /// Registered by an operator rather than mined.
    pub registered: bool,
    /// Last model requested for this task.
    pub model: String,
    pub schema: Option<LabelSchema>,
    schema_sample: Vec<String>,
    /// Inference ran on a full sample and found no categorical field.
    no_schema: bool,
    pub rows: Vec<Row>,
    /// Recent member prompts for template mining.
    pub recent_prompts: Vec<String>,
    /// Labeled examples required before leaving COLLECTING.
    pub collect_goal: u64,
    pub shadow: Vec<ShadowObservation>,
    pub drift: Option<DriftDetector>,
    pub artifact_id: Option<String>,
    /// Offline teacher agreement of the current artifact.
    pub baseline_agreement: f64,
    pub ranking: Option<Vec<CandidateScore>>,
    /// Requests since the last rollback, if any.
    pub since_rollback: Option<u64>,
    /// Labeled count at which a failed job may run again.
    pub retry_at: Option<u64>,
    pub failures: Vec<String>,
    /// Requests before the first deployment.
    pub switch_index: Option<u64>,
}

impl TaskState {
    fn new(task_id: TaskId, offset: u64, timestamp_ms: u64, exemplar: String, cfg: &JitrConfig) -> Self {
        TaskState {
            record: TaskRecord::new(task_id, offset, timestamp_ms),
            exemplar,
            registered: false,
            model: String::new(),
            schema: None,
            schema_sample: Vec::new(),
            no_schema: false,
            rows: Vec::new(),
            recent_prompts: Vec::new(),
            collect_goal: cfg.lifecycle.min_train_examples,
            shadow: Vec::new(),
            drift: None,
            artifact_id: None,
            baseline_agreement: 0.0,
            ranking: None,
            since_rollback: None,
            retry_at: None,
            failures: Vec::new(),
            switch_index: None,
        }
    }

    pub fn state(&self) -> LifecycleState {
        self.record.lifecycle_state
    }

    fn add_row(&mut self, row: Row, cfg: &JitrConfig) {
        match &self.schema {
            Some(s) => {
                if s.extract(&row.response).is_some() {
                    self.record.labeled_count += 1;
                }
            }
            None if self.no_schema => {}
            None => {
                if serde_json::from_str::<serde_json::Value>(&row.response).is_ok() {
                    self.schema_sample.push(row.response.clone());
                }
                if self.schema_sample.len() >= cfg.lifecycle.schema_sample {
                    self.schema = infer_schema(&self.schema_sample);
                    match &self.schema {
                        Some(s) => {
                            let have = self.rows.iter().chain([&row]).filter(|r| s.extract(&r.response).is_some());
                            self.record.labeled_count = have.count() as u64;
                        }
                        None => {
                            self.no_schema = true;
                            self.failures.push("answers have no categorical field to learn".into());
                        }
                    }
                    self.schema_sample = Vec::new();
                }
            }
        }
        self.rows.push(row);
    }

    /// Every labeled row as a model example, in ledger order, plus the number
    /// of rows whose label could not be parsed.
    pub fn labeled_examples(&self) -> (Vec<LabeledExample>, usize) {
        let Some(schema) = &self.schema else { return (Vec::new(), self.rows.len()) };
        let template = self.record.template.as_ref();
        let mut out = Vec::with_capacity(self.rows.len());
        let mut skipped = 0;
        for r in &self.rows {
            match schema.extract(&r.response) {
                Some(label) => out.push(LabeledExample::new(model_input(template, &r.prompt), label)),
                None => skipped += 1,
            }
        }
        (out, skipped)
    }

    /// One split of the labeled examples under a seeded shuffle.
    pub fn export(&self, split: Split, seed: u64, cfg: &JitrConfig) -> (Vec<LabeledExample>, usize) {
        let (all, skipped) = self.labeled_examples();
        let [train, search, validation] = split_indices(all.len(), seed, &cfg.lifecycle.splits);
        let idx = match split {
            Split::Train => train,
            Split::Search => search,
            Split::Validation => validation,
        };
        (idx.into_iter().map(|i| all[i].clone()).collect(), skipped)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Totals {
    pub requests: u64,
    pub served: BTreeMap<ServedBy, u64>,
    pub upstream_failures: u64,
    pub unparseable: u64,
    pub probes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub artifact_id: String,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Offset the next record will get.
    pub next_offset: u64,
    pub clusters: ClusterSet,
    pub tasks: BTreeMap<TaskId, TaskState>,
    pub offers: BTreeMap<u64, Offer>,
    pub artifacts: BTreeMap<String, ArtifactSummary>,
    pub routes: BTreeMap<TaskId, Route>,
    pub route_generation: u64,
    pub transitions: Vec<Transition>,
    pub request_ids: BTreeSet<String>,
    pub totals: Totals,
}

impl SystemState {
    pub fn new(cfg: &JitrConfig) -> Self {
        SystemState {
            next_offset: 0,
            clusters: ClusterSet::new(cfg.miner.similarity_threshold),
            tasks: BTreeMap::new(),
            offers: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            routes: BTreeMap::new(),
            route_generation: 0,
            transitions: Vec::new(),
            request_ids: BTreeSet::new(),
            totals: Totals::default(),
        }
    }

    pub fn replay<'a>(cfg: &JitrConfig, entries: impl IntoIterator<Item = &'a Entry>) -> Self {
        let mut s = SystemState::new(cfg);
        for e in entries {
            s.apply(cfg, e);
        }
        s
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskState> {
        self.tasks.get(&id)
    }

    /// Registered task whose template matches `prompt` exactly.
    pub fn registered_match(&self, prompt: &str) -> Option<TaskId> {
        self.tasks
            .values()
            .find(|t| t.registered && t.record.template.as_ref().is_some_and(|tp| tp.matches(prompt)))
            .map(|t| t.record.task_id)
    }

    pub fn next_offer_id(&self) -> u64 {
        self.offers.keys().next_back().map_or(1, |k| k + 1)
    }

    pub fn apply(&mut self, cfg: &JitrConfig, entry: &Entry) {
        debug_assert_eq!(entry.offset, self.next_offset);
        self.next_offset = entry.offset + 1;
        let offset = entry.offset;
        match &entry.record {
            Record::TaskCreated { task_id, exemplar, timestamp_ms, template } => {
                self.clusters.insert(*task_id, PromptSignature::compute(exemplar, &cfg.miner.signature));
                let mut t = TaskState::new(*task_id, offset, *timestamp_ms, exemplar.clone(), cfg);
                if let Some(tp) = template {
                    t.registered = true;
                    t.record.template = Some(tp.clone());
                }
                self.tasks.insert(*task_id, t);
            }
            Record::Trace(ev) => self.apply_trace(cfg, offset, ev),
            Record::Template { task_id, template } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.record.template = Some(template.clone());
                }
            }
            Record::Transition(tr) => self.apply_transition(cfg, tr),
            Record::Search { task_id, ranking, .. } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.ranking = Some(ranking.clone());
                }
            }
            Record::Artifact(summary) => {
                if let Some(t) = self.tasks.get_mut(&summary.task_id) {
                    t.artifact_id = Some(summary.artifact_id.clone());
                    t.baseline_agreement = summary.metrics.teacher_agreement;
                    t.retry_at = None;
                }
                self.artifacts.insert(summary.artifact_id.clone(), summary.clone());
            }
            Record::Offer(o) => {
                self.offers.insert(o.offer_id, o.clone());
            }
            Record::OfferDecision { offer_id, status } => {
                if let Some(o) = self.offers.get_mut(offer_id) {
                    o.status = *status;
                }
            }
            Record::Routing { task_id, artifact_id, generation } => {
                self.route_generation = *generation;
                match artifact_id {
                    Some(a) => {
                        self.routes.insert(*task_id, Route { artifact_id: a.clone(), generation: *generation });
                    }
                    None => {
                        self.routes.remove(task_id);
                    }
                }
            }
            Record::JobFailed { task_id, stage, error } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.failures.push(format!("{stage}: {error}"));
                    t.retry_at = Some(t.record.labeled_count + cfg.lifecycle.collect_target);
                }
            }
        }
    }

    fn apply_trace(&mut self, cfg: &JitrConfig, offset: u64, ev: &TraceEvent) {
        self.request_ids.insert(ev.request_id.clone());
        let totals = &mut self.totals;
        totals.requests += 1;
        *totals.served.entry(ev.served_by).or_default() += 1;
        totals.upstream_failures += u64::from(ev.upstream_failed);
        totals.unparseable += u64::from(ev.unparseable);
        totals.probes += u64::from(ev.mode == RouteMode::Probe);
        let Some(task_id) = ev.task_id else { return };
        self.clusters.add_member(task_id);
        let Some(t) = self.tasks.get_mut(&task_id) else { return };
        let r = &mut t.record;
        r.member_count += 1;
        r.last_seen_ms = r.last_seen_ms.max(ev.timestamp_ms);
        r.dataset_range.1 = offset + 1;
        r.unparseable_count += u64::from(ev.unparseable);
        t.model = ev.model.clone();
        if let Some(n) = &mut t.since_rollback {
            *n += 1;
        }
        if !ev.upstream_failed {
            r.latency.record(ev.latency_ms);
            let tk = &mut r.tokens;
            match ev.served_by {
                ServedBy::Llm => {
                    tk.plain_requests += 1;
                    tk.plain_prompt_tokens += ev.prompt_tokens;
                    tk.plain_completion_tokens += ev.completion_tokens;
                }
                ServedBy::LlmWrapped => {
                    tk.wrapped_requests += 1;
                    tk.wrapped_prompt_tokens += ev.prompt_tokens;
                    tk.wrapped_completion_tokens += ev.completion_tokens;
                    tk.wrapped_base_prompt_tokens += ev.base_prompt_tokens;
                    tk.wrapped_base_completion_tokens += ev.base_completion_tokens;
                }
                ServedBy::Surrogate => tk.surrogate_requests += 1,
            }
        }
        if let Some(s) = &ev.signals {
            r.record_signals(s.input_type, s.task_type);
        }
        if t.recent_prompts.len() >= cfg.lifecycle.template_sample {
            t.recent_prompts.remove(0);
        }
        t.recent_prompts.push(ev.prompt.clone());
        if let (Some(resp), false, false) = (&ev.user_response, ev.unparseable, ev.upstream_failed) {
            t.add_row(Row { offset, prompt: ev.prompt.clone(), response: resp.clone() }, cfg);
        }
        if let (Some(llm), Some(sur)) = (&ev.label, &ev.surrogate_label) {
            match ev.mode {
                RouteMode::Shadow => t.shadow.push(ShadowObservation {
                    llm_label: llm.clone(),
                    surrogate_label: sur.clone(),
                    llm_latency_ms: ev.llm_latency_ms.unwrap_or(0.0),
                    surrogate_latency_ms: ev.surrogate_latency_ms.unwrap_or(0.0),
                }),
                RouteMode::Probe => {
                    if let Some(d) = &mut t.drift {
                        d.observe(llm == sur);
                    }
                }
                _ => {}
            }
        }
    }

    fn apply_transition(&mut self, cfg: &JitrConfig, tr: &Transition) {
        self.transitions.push(tr.clone());
        let Some(t) = self.tasks.get_mut(&tr.task_id) else { return };
        t.record.lifecycle_state = tr.to;
        match tr.to {
            LifecycleState::Collecting if tr.from != LifecycleState::Detecting => {
                t.collect_goal = t.record.labeled_count + cfg.lifecycle.collect_target;
                t.shadow.clear();
                if tr.from == LifecycleState::RolledBack {
                    t.since_rollback = Some(0);
                }
            }
            LifecycleState::Shadow => t.shadow.clear(),
            LifecycleState::Deployed => {
                let m = &cfg.monitor;
                t.drift = Some(DriftDetector::new(m.window, t.baseline_agreement, m.tau_drift));
                t.switch_index.get_or_insert(t.record.member_count);
            }
            _ => {}
        }
    }
}
