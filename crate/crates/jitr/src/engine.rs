//! Request handling and lifecycle progression on top of the ledger.
//!
//! A request goes through three steps. [`Engine::plan`] assigns it to a task
//! and picks a route; [`execute`] calls the upstream and/or the surrogate and
//! needs no access to the engine; [`Engine::finish`] logs the trace event,
//! advances the task's lifecycle and builds the client response. The gateway
//! holds its engine lock only for the first and last step.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use arc_swap::ArcSwap;
use jitr_core::clock::Clock;
use jitr_core::cost::{CostModel, PricingTable, TrafficProfile};
use jitr_core::learn::{dataset_hash, LabeledExample};
use jitr_core::lifecycle::{advance, LifecycleEvent, LifecycleState};
use jitr_core::miner::{is_recurring, mine_template, PromptSignature, PromptTemplate, Segment, TaskId};
use jitr_core::monitor::{make_offer, shadow_compare, shadow_verdict, should_probe, DriftStatus, Offer, OfferOutcome, OfferStatus};
use jitr_core::tokens::count_tokens;
use jitr_core::zoo::{fine_tune, filter_candidates, rank, CandidateScore, Constraints, FeatureCache, ModelStore, SearchSplit};
use serde::Serialize;

use crate::artifact::{artifact_path, ArtifactHeader, ArtifactMetrics, Surrogate, SurrogateArtifact};
use crate::config::JitrConfig;
use crate::dataset::{split_indices, LabelSchema};
use crate::ledger::{Entry, LedgerWriter, Record, RouteMode, TraceEvent, Transition};
use crate::state::SystemState;
use crate::upstream::{Upstream, UpstreamError, UpstreamReply};
use crate::wire::{unwrap_response, ChatRequest, ChatResponse, RequestError, WrapperTemplate};

/// FNV-1a followed by a splitmix64 finalizer; stable across runs and builds.
pub fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Parses a template written with `<SLOT>` markers.
pub fn parse_template(text: &str) -> PromptTemplate {
    let mut segs = Vec::new();
    for (i, part) in text.split("<SLOT>").enumerate() {
        if i > 0 {
            segs.push(Segment::Slot);
        }
        segs.push(Segment::Literal(part.to_string()));
    }
    PromptTemplate::from_segments(segs)
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("upstream failed for {request_id}: {message}")]
    Upstream { request_id: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<RequestError> for GatewayError {
    fn from(e: RequestError) -> Self {
        GatewayError::BadRequest(e.to_string())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OfferError {
    #[error("unknown offer {0}")]
    Unknown(u64),
    #[error("offer {0} is {1}, not pending")]
    NotPending(u64, OfferStatus),
    #[error("offer {id}: {reason}")]
    Unusable { id: u64, reason: String },
}

/// Surrogates currently serving traffic. Replaced as a whole on every
/// routing change, so a reader sees either the old or the new table.
#[derive(Debug, Default)]
pub struct RoutingTable {
    pub generation: u64,
    pub routes: BTreeMap<TaskId, Arc<Surrogate>>,
}

pub struct Plan {
    pub request: ChatRequest,
    pub prompt: String,
    pub task_id: Option<TaskId>,
    pub mode: RouteMode,
    pub surrogate: Option<Arc<Surrogate>>,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateAnswer {
    pub label: String,
    pub confidence: f32,
    pub latency_ms: f64,
}

pub struct Outcome {
    pub llm: Option<Result<UpstreamReply, UpstreamError>>,
    pub surrogate: Option<SurrogateAnswer>,
}

/// Runs the routes chosen by `plan`.
pub fn execute(plan: &Plan, upstream: &dyn Upstream, wrapper: &WrapperTemplate, clock: &dyn Clock) -> Outcome {
    let surrogate = plan.surrogate.as_ref().filter(|_| plan.mode != RouteMode::Llm && plan.mode != RouteMode::Wrapped).map(|s| {
        let t0 = clock.now_secs();
        let (label, confidence) = s.predict(&plan.prompt);
        SurrogateAnswer { label, confidence, latency_ms: (clock.now_secs() - t0) * 1000.0 }
    });
    let llm = match plan.mode {
        RouteMode::Surrogate => None,
        RouteMode::Wrapped => Some(upstream.complete(&wrapper.wrap_request(&plan.request))),
        RouteMode::Llm | RouteMode::Shadow | RouteMode::Probe => Some(upstream.complete(&plan.request)),
    };
    Outcome { llm, surrogate }
}

/// Search or training work for one task, runnable without the engine.
pub enum Job {
    Search {
        task_id: TaskId,
        store: Arc<ModelStore>,
        examples: Vec<LabeledExample>,
        constraints: Constraints,
        config: JitrConfig,
    },
    Train {
        task_id: TaskId,
        store: Arc<ModelStore>,
        model_id: String,
        artifact_id: String,
        train: Vec<LabeledExample>,
        validation: Vec<LabeledExample>,
        schema: LabelSchema,
        template: Option<PromptTemplate>,
        created_at: u64,
        config: JitrConfig,
    },
}

pub enum JobOutput {
    Search { task_id: TaskId, examples: usize, result: Result<Vec<CandidateScore>, String> },
    Train { task_id: TaskId, result: Result<SurrogateArtifact, String> },
}

impl Job {
    pub fn task_id(&self) -> TaskId {
        match self {
            Job::Search { task_id, .. } | Job::Train { task_id, .. } => *task_id,
        }
    }

    pub fn run(self, clock: &dyn Clock) -> JobOutput {
        match self {
            Job::Search { task_id, store, examples, constraints, config } => {
                let result = (|| {
                    let candidates = filter_candidates(&constraints, &store.cards);
                    if let Some(w) = &candidates.warning {
                        log::warn!("{task_id}: {w}");
                    }
                    let split = SearchSplit::from_examples(&examples, config.lifecycle.search_fit_fraction);
                    let mut cache = FeatureCache::default();
                    rank(&store, &candidates.cards, &split, &config.search, &mut cache, clock).map_err(|e| e.to_string())
                })();
                JobOutput::Search { task_id, examples: examples.len(), result }
            }
            Job::Train {
                task_id,
                store,
                model_id,
                artifact_id,
                train,
                validation,
                schema,
                template,
                created_at,
                config,
            } => {
                let result = (|| {
                    let card = store.card(&model_id).ok_or_else(|| format!("model `{model_id}` is not in the zoo"))?;
                    let out = fine_tune(&store, card, &train, &validation, &config.train, None).map_err(|e| e.to_string())?;
                    let prior = card.featurizer.prior.as_ref().and_then(|p| store.priors.get(p)).map(|p| (**p).clone());
                    Ok(SurrogateArtifact {
                        header: ArtifactHeader {
                            artifact_id,
                            task_id,
                            base_model: model_id.clone(),
                            featurizer: card.featurizer.clone(),
                            prior,
                            labels: out.model.labels.labels().to_vec(),
                            dim: out.model.dim,
                            schema,
                            input_template: template,
                            metrics: ArtifactMetrics {
                                teacher_agreement: out.validation_accuracy,
                                train_examples: train.len(),
                                validation_examples: validation.len(),
                                best_epoch: out.best_epoch,
                                epochs_run: out.epochs_run,
                            },
                            trained_on: dataset_hash(&train),
                            created_at,
                        },
                        model: out.model,
                    })
                })();
                JobOutput::Train { task_id, result }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobMode {
    /// Jobs run inside the call that triggers them.
    Inline,
    /// Jobs are queued for the caller to run elsewhere.
    Queued,
}

#[derive(Debug, thiserror::Error)]
#[error("route changed while the request was in flight")]
pub struct Stale;

pub struct Engine {
    config: JitrConfig,
    state: SystemState,
    ledger: LedgerWriter,
    store: Arc<ModelStore>,
    wrapper: WrapperTemplate,
    pricing: PricingTable,
    artifacts_dir: Option<PathBuf>,
    surrogates: HashMap<String, Arc<Surrogate>>,
    routes: Arc<ArcSwap<RoutingTable>>,
    clock: Arc<dyn Clock + Send + Sync>,
    job_mode: JobMode,
    queued: Vec<Job>,
    running: BTreeSet<TaskId>,
    inflight: BTreeSet<String>,
    seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub state: LifecycleState,
    pub task_type: Option<String>,
    pub members: u64,
    pub labeled: u64,
    pub collect_goal: u64,
    pub template: Option<String>,
    pub slots: usize,
    pub schema: Option<String>,
    pub artifact_id: Option<String>,
    pub routed: bool,
}

impl Engine {
    /// Engine over an existing ledger. `artifacts_dir` of `None` keeps
    /// artifacts in memory only.
    pub fn new(
        config: JitrConfig,
        store: Arc<ModelStore>,
        clock: Arc<dyn Clock + Send + Sync>,
        ledger: LedgerWriter,
        existing: &[Entry],
        artifacts_dir: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        for w in config.validate()? {
            log::warn!("config: {w}");
        }
        let state = SystemState::replay(&config, existing);
        let mut e = Engine {
            wrapper: config.wrapper()?,
            pricing: config.pricing()?,
            config,
            state,
            ledger,
            store,
            artifacts_dir,
            surrogates: HashMap::new(),
            routes: Arc::new(ArcSwap::from_pointee(RoutingTable::default())),
            clock,
            job_mode: JobMode::Inline,
            queued: Vec::new(),
            running: BTreeSet::new(),
            inflight: BTreeSet::new(),
            seq: 0,
        };
        e.seq = e.state.totals.requests;
        e.refresh_routes();
        Ok(e)
    }

    /// Engine over the ledger file and artifact directory named in the config.
    pub fn open(config: JitrConfig, store: Arc<ModelStore>, clock: Arc<dyn Clock + Send + Sync>) -> anyhow::Result<Self> {
        let (ledger, existing) = LedgerWriter::open(&config.gateway.ledger, config.gateway.fsync)?;
        let dir = config.gateway.artifacts_dir.clone();
        Engine::new(config, store, clock, ledger, &existing, Some(dir))
    }

    pub fn in_memory(config: JitrConfig, store: Arc<ModelStore>, clock: Arc<dyn Clock + Send + Sync>) -> anyhow::Result<Self> {
        Engine::new(config, store, clock, LedgerWriter::in_memory(), &[], None)
    }

    pub fn set_job_mode(&mut self, mode: JobMode) {
        self.job_mode = mode;
    }

    pub fn config(&self) -> &JitrConfig {
        &self.config
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn ledger(&self) -> &LedgerWriter {
        &self.ledger
    }

    pub fn store(&self) -> &Arc<ModelStore> {
        &self.store
    }

    pub fn wrapper(&self) -> &WrapperTemplate {
        &self.wrapper
    }

    pub fn routes(&self) -> Arc<ArcSwap<RoutingTable>> {
        self.routes.clone()
    }

    pub fn pricing(&self) -> &PricingTable {
        &self.pricing
    }

    pub fn take_jobs(&mut self) -> Vec<Job> {
        std::mem::take(&mut self.queued)
    }

    pub fn jobs_running(&self) -> bool {
        !self.running.is_empty() || !self.queued.is_empty()
    }

    fn commit(&mut self, record: Record) -> u64 {
        let is_routing = matches!(record, Record::Routing { .. });
        let (offset, entry) = self.ledger.append(record);
        self.state.apply(&self.config, &entry);
        if is_routing {
            self.refresh_routes();
        }
        offset
    }

    fn transition(&mut self, task_id: TaskId, event: LifecycleEvent, timestamp_ms: u64) -> anyhow::Result<LifecycleState> {
        let from = self.state.tasks.get(&task_id).ok_or_else(|| anyhow::anyhow!("unknown task {task_id}"))?.state();
        let to = advance(from, event)?;
        self.commit(Record::Transition(Transition { task_id, from, to, event, timestamp_ms }));
        log::info!("{task_id}: {from} -> {to} ({event})");
        Ok(to)
    }

    pub fn surrogate(&mut self, artifact_id: &str) -> anyhow::Result<Arc<Surrogate>> {
        if let Some(s) = self.surrogates.get(artifact_id) {
            return Ok(s.clone());
        }
        let dir = self.artifacts_dir.as_ref().ok_or_else(|| anyhow::anyhow!("artifact {artifact_id} is not loaded"))?;
        let s = Arc::new(Surrogate::new(SurrogateArtifact::load(&artifact_path(dir, artifact_id))?)?);
        self.surrogates.insert(artifact_id.to_string(), s.clone());
        Ok(s)
    }

    fn refresh_routes(&mut self) {
        let mut routes = BTreeMap::new();
        let wanted: Vec<(TaskId, String)> =
            self.state.routes.iter().map(|(t, r)| (*t, r.artifact_id.clone())).collect();
        for (task, artifact) in wanted {
            match self.surrogate(&artifact) {
                Ok(s) => {
                    routes.insert(task, s);
                }
                Err(e) => log::error!("{task}: cannot load routed artifact {artifact}, serving with the LLM: {e:#}"),
            }
        }
        self.routes.store(Arc::new(RoutingTable { generation: self.state.route_generation, routes }));
    }

    fn fresh_request_id(&mut self) -> String {
        loop {
            let id = format!("req-{}", self.seq);
            self.seq += 1;
            if !self.state.request_ids.contains(&id) && !self.inflight.contains(&id) {
                return id;
            }
        }
    }

    /// Task of a prompt: a registered template match, else the best cluster,
    /// else a new task.
    fn assign(&mut self, prompt: &str, timestamp_ms: u64) -> TaskId {
        if let Some(id) = self.state.registered_match(prompt) {
            return id;
        }
        let sig = PromptSignature::compute(prompt, &self.config.miner.signature);
        if let Some((id, _)) = self.state.clusters.best_match(&sig) {
            return id;
        }
        let task_id = self.state.clusters.next_id();
        self.commit(Record::TaskCreated { task_id, exemplar: prompt.to_string(), timestamp_ms, template: None });
        task_id
    }

    pub fn plan(&mut self, mut request: ChatRequest) -> Result<Plan, GatewayError> {
        request.validate()?;
        if request.request_id.is_empty() {
            request.request_id = self.fresh_request_id();
        } else if self.state.request_ids.contains(&request.request_id) || self.inflight.contains(&request.request_id) {
            return Err(GatewayError::BadRequest(format!("duplicate request_id `{}`", request.request_id)));
        }
        self.inflight.insert(request.request_id.clone());
        let prompt = request.rendered();
        let task_id = self.assign(&prompt, request.received_at);
        let table = self.routes.load();
        let task = &self.state.tasks[&task_id];
        let (mode, surrogate) = match table.routes.get(&task_id) {
            Some(s) => {
                let probe = should_probe(stable_hash(&request.request_id), self.config.monitor.probe_fraction);
                (if probe { RouteMode::Probe } else { RouteMode::Surrogate }, Some(s.clone()))
            }
            None => match task.state() {
                s if s.wraps_requests() && self.config.gateway.identification => (RouteMode::Wrapped, None),
                LifecycleState::Shadow => {
                    let artifact = task.artifact_id.clone();
                    match artifact.map(|a| self.surrogate(&a)) {
                        Some(Ok(s)) => (RouteMode::Shadow, Some(s)),
                        Some(Err(e)) => {
                            log::error!("{task_id}: shadow artifact unavailable: {e:#}");
                            (RouteMode::Llm, None)
                        }
                        None => (RouteMode::Llm, None),
                    }
                }
                _ => (RouteMode::Llm, None),
            },
        };
        Ok(Plan { request, prompt, task_id: Some(task_id), mode, surrogate, generation: table.generation })
    }

    /// Logs the outcome and builds the client response. Surrogate-served
    /// requests whose route was withdrawn in flight come back as [`Stale`]
    /// and must be planned again.
    pub fn finish(&mut self, plan: Plan, outcome: Outcome) -> Result<Result<ChatResponse, GatewayError>, Stale> {
        self.inflight.remove(&plan.request.request_id);
        let task_id = plan.task_id;
        if matches!(plan.mode, RouteMode::Surrogate | RouteMode::Probe) {
            let table = self.routes.load();
            let current = task_id.and_then(|t| table.routes.get(&t));
            let same = match (current, &plan.surrogate) {
                (Some(a), Some(b)) => Arc::ptr_eq(a, b),
                _ => false,
            };
            if !same {
                return Err(Stale);
            }
        }
        let schema = task_id.and_then(|t| self.state.tasks.get(&t)).and_then(|t| t.schema.clone());
        let extract = |text: &str| schema.as_ref().and_then(|s| s.extract(text));
        let req = &plan.request;
        let mut ev = TraceEvent {
            request_id: req.request_id.clone(),
            task_id,
            model: req.model.clone(),
            prompt: plan.prompt.clone(),
            response: String::new(),
            mode: plan.mode,
            served_by: plan.mode.served_by(),
            wrapped: plan.mode == RouteMode::Wrapped,
            prompt_tokens: 0,
            completion_tokens: 0,
            base_prompt_tokens: 0,
            base_completion_tokens: 0,
            latency_ms: 0.0,
            timestamp_ms: req.received_at,
            signals: None,
            user_response: None,
            label: None,
            surrogate_label: outcome.surrogate.as_ref().map(|s| s.label.clone()),
            surrogate_latency_ms: outcome.surrogate.as_ref().map(|s| s.latency_ms),
            llm_latency_ms: None,
            unparseable: false,
            upstream_failed: false,
        };
        let mut failure = None;
        match plan.mode {
            RouteMode::Surrogate | RouteMode::Probe => {
                let (Some(s), Some(ans)) = (&plan.surrogate, &outcome.surrogate) else {
                    return Ok(Err(GatewayError::Internal("surrogate route without an answer".into())));
                };
                ev.response = s.respond(&ans.label);
                ev.prompt_tokens = count_tokens(&plan.prompt);
                ev.completion_tokens = count_tokens(&ev.response);
                ev.base_prompt_tokens = ev.prompt_tokens;
                ev.base_completion_tokens = ev.completion_tokens;
                ev.latency_ms = ans.latency_ms;
                if let Some(Ok(reply)) = &outcome.llm {
                    ev.llm_latency_ms = Some(reply.latency_ms);
                    ev.label = extract(&reply.content);
                }
            }
            RouteMode::Llm | RouteMode::Shadow | RouteMode::Wrapped => match &outcome.llm {
                Some(Ok(reply)) => {
                    ev.prompt_tokens = reply.prompt_tokens;
                    ev.completion_tokens = reply.completion_tokens;
                    ev.latency_ms = reply.latency_ms;
                    ev.llm_latency_ms = Some(reply.latency_ms);
                    if plan.mode == RouteMode::Wrapped {
                        ev.base_prompt_tokens = count_tokens(&plan.prompt);
                        match unwrap_response(&reply.content) {
                            Ok(u) => {
                                ev.response = u.user_response().to_string();
                                ev.base_completion_tokens = count_tokens(&ev.response);
                                ev.user_response = Some(ev.response.clone());
                                ev.signals = Some(u.signals);
                            }
                            Err(e) => {
                                log::warn!("{}: unparseable wrapped answer: {}", req.request_id, e.reason);
                                ev.response = reply.content.clone();
                                ev.base_completion_tokens = reply.completion_tokens;
                                ev.unparseable = true;
                            }
                        }
                    } else {
                        ev.response = reply.content.clone();
                        ev.base_prompt_tokens = reply.prompt_tokens;
                        ev.base_completion_tokens = reply.completion_tokens;
                        ev.user_response = Some(reply.content.clone());
                    }
                    ev.label = ev.user_response.as_deref().and_then(extract);
                }
                Some(Err(e)) => {
                    ev.response = e.to_string();
                    ev.upstream_failed = true;
                    failure = Some(e.to_string());
                }
                None => return Ok(Err(GatewayError::Internal("LLM route without an answer".into()))),
            },
        }
        let response = ChatResponse {
            request_id: ev.request_id.clone(),
            content: ev.response.clone(),
            prompt_tokens: ev.prompt_tokens,
            completion_tokens: ev.completion_tokens,
            upstream_latency_ms: ev.latency_ms,
            served_by: ev.served_by,
            task_id,
        };
        let timestamp = ev.timestamp_ms;
        self.commit(Record::Trace(ev));
        if let Some(t) = task_id {
            if let Err(e) = self.progress(t, &plan.prompt, timestamp) {
                log::error!("{t}: lifecycle step failed: {e:#}");
            }
        }
        Ok(match failure {
            Some(message) => Err(GatewayError::Upstream { request_id: response.request_id, message }),
            None => Ok(response),
        })
    }

    /// Plans, executes and finishes one request, planning again if its route
    /// was withdrawn in flight.
    pub fn handle(&mut self, request: ChatRequest, upstream: &dyn Upstream) -> Result<ChatResponse, GatewayError> {
        let clock = self.clock.clone();
        loop {
            let plan = self.plan(request.clone())?;
            let wrapper = self.wrapper.clone();
            let outcome = execute(&plan, upstream, &wrapper, &*clock);
            if let Ok(r) = self.finish(plan, outcome) {
                return r;
            }
        }
    }

    fn maybe_remine(&mut self, task_id: TaskId, prompt: &str) {
        let t = &self.state.tasks[&task_id];
        if t.registered || !matches!(t.state(), LifecycleState::Detecting | LifecycleState::Collecting) {
            return;
        }
        let Some(current) = &t.record.template else { return };
        if current.matches(prompt) {
            return;
        }
        let template = mine_template(&t.recent_prompts);
        if &template != current {
            self.commit(Record::Template { task_id, template });
        }
    }

    fn progress(&mut self, task_id: TaskId, prompt: &str, ts: u64) -> anyhow::Result<()> {
        self.maybe_remine(task_id, prompt);
        let t = &self.state.tasks[&task_id];
        match t.state() {
            LifecycleState::Detecting => {
                if is_recurring(&t.record, &self.config.miner) {
                    if t.record.template.is_none() {
                        let template = mine_template(&t.recent_prompts);
                        self.commit(Record::Template { task_id, template });
                    }
                    self.transition(task_id, LifecycleEvent::Recurring, ts)?;
                    return self.progress(task_id, prompt, ts);
                }
            }
            LifecycleState::Collecting => {
                let dwell_ok = t.since_rollback.is_none_or(|n| n >= self.config.monitor.min_dwell_requests);
                if t.schema.is_some() && t.record.labeled_count >= t.collect_goal && dwell_ok {
                    self.transition(task_id, LifecycleEvent::EnoughData, ts)?;
                    self.schedule(task_id, ts)?;
                }
            }
            LifecycleState::Searching | LifecycleState::Training => {
                let retry = t.retry_at.is_none_or(|r| t.record.labeled_count >= r);
                if retry && !self.running.contains(&task_id) {
                    self.schedule(task_id, ts)?;
                }
            }
            LifecycleState::Shadow => {
                if t.shadow.len() >= self.config.monitor.window {
                    self.judge_shadow(task_id, ts)?;
                }
            }
            LifecycleState::Deployed => {
                if t.drift.as_ref().is_some_and(|d| d.status() == DriftStatus::Degraded) {
                    self.roll_back(task_id, ts)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Search (or training, if the ranking exists) for a task.
    fn schedule(&mut self, task_id: TaskId, ts: u64) -> anyhow::Result<()> {
        let job = match self.state.tasks[&task_id].state() {
            LifecycleState::Searching => self.search_job(task_id),
            LifecycleState::Training => self.train_job(task_id, ts)?,
            _ => return Ok(()),
        };
        self.running.insert(task_id);
        match self.job_mode {
            JobMode::Queued => self.queued.push(job),
            JobMode::Inline => {
                let clock = self.clock.clone();
                let out = job.run(&*clock);
                self.complete_job(out, ts)?;
            }
        }
        Ok(())
    }

    fn splits(&self, task_id: TaskId) -> [Vec<LabeledExample>; 3] {
        let (all, _) = self.state.tasks[&task_id].labeled_examples();
        let idx = split_indices(all.len(), self.config.lifecycle.split_seed, &self.config.lifecycle.splits);
        idx.map(|ix| ix.into_iter().map(|i| all[i].clone()).collect())
    }

    fn search_job(&self, task_id: TaskId) -> Job {
        let [train, mut search, _] = self.splits(task_id);
        let want = self.config.lifecycle.search_examples;
        search.extend(train.into_iter().take(want.saturating_sub(search.len())));
        search.truncate(want);
        // Candidates must accept the task's input type, as reported by the wrapper.
        let constraints = Constraints { modality: self.state.tasks[&task_id].record.input_type(), ..Constraints::default() };
        Job::Search { task_id, store: self.store.clone(), examples: search, constraints, config: self.config.clone() }
    }

    fn train_job(&self, task_id: TaskId, ts: u64) -> anyhow::Result<Job> {
        let t = &self.state.tasks[&task_id];
        let ranking = t.ranking.as_ref().ok_or_else(|| anyhow::anyhow!("{task_id} has no ranking"))?;
        let model_id = ranking.first().ok_or_else(|| anyhow::anyhow!("{task_id} has an empty ranking"))?.model_id.clone();
        let schema = t.schema.clone().ok_or_else(|| anyhow::anyhow!("{task_id} has no label schema"))?;
        let n = self.state.artifacts.values().filter(|a| a.task_id == task_id).count() + 1;
        let [train, _, validation] = self.splits(task_id);
        Ok(Job::Train {
            task_id,
            store: self.store.clone(),
            model_id,
            artifact_id: format!("art-{}-{n}", task_id.0),
            train,
            validation,
            schema,
            template: t.record.template.clone(),
            created_at: ts,
            config: self.config.clone(),
        })
    }

    /// Commits a finished job and moves the task on.
    pub fn complete_job(&mut self, out: JobOutput, ts: u64) -> anyhow::Result<()> {
        match out {
            JobOutput::Search { task_id, examples, result } => {
                self.running.remove(&task_id);
                match result {
                    Ok(ranking) => {
                        self.commit(Record::Search { task_id, examples, ranking });
                        self.transition(task_id, LifecycleEvent::RankingReady, ts)?;
                        self.schedule(task_id, ts)?;
                    }
                    Err(error) => {
                        log::warn!("{task_id}: search failed: {error}");
                        self.commit(Record::JobFailed { task_id, stage: "search".into(), error });
                    }
                }
            }
            JobOutput::Train { task_id, result } => {
                self.running.remove(&task_id);
                let saved = result.and_then(|artifact| {
                    if let Some(dir) = &self.artifacts_dir {
                        artifact.save(dir).map_err(|e| format!("{e:#}"))?;
                    }
                    let summary = artifact.summary();
                    let s = Surrogate::new(artifact).map_err(|e| format!("{e:#}"))?;
                    self.surrogates.insert(summary.artifact_id.clone(), Arc::new(s));
                    Ok(summary)
                });
                match saved {
                    Ok(summary) => {
                        self.commit(Record::Artifact(summary));
                        self.transition(task_id, LifecycleEvent::ArtifactPersisted, ts)?;
                    }
                    Err(error) => {
                        log::warn!("{task_id}: training failed: {error}");
                        self.commit(Record::JobFailed { task_id, stage: "train".into(), error });
                    }
                }
            }
        }
        Ok(())
    }

    /// Traffic profile measured from a task's ledger statistics.
    pub fn measured_profile(&self, task_id: TaskId) -> Option<TrafficProfile> {
        let t = self.state.tasks.get(&task_id)?;
        let tk = &t.record.tokens;
        let (input, output) = tk.mean_base_tokens()?;
        let (win, wout) = tk.mean_wrapper_overhead().unwrap_or((0, 0));
        Some(TrafficProfile {
            avg_input_tokens: input,
            avg_output_tokens: output,
            wrapper_input_overhead_tokens: win,
            wrapper_output_overhead_tokens: wout,
            switch_index: t.switch_index.unwrap_or(t.record.member_count),
            dev_cost: self.config.dev_cost(),
        })
    }

    /// LLM a task's requests are priced as: the requested model when the
    /// pricing table knows it, else the configured default.
    pub fn llm_model_for(&self, task_id: TaskId) -> String {
        let requested = self.state.tasks.get(&task_id).map(|t| t.model.clone()).unwrap_or_default();
        if self.pricing.get(&requested).is_ok() {
            requested
        } else {
            self.config.cost.llm_model.clone()
        }
    }

    pub fn measured_cost(&self, task_id: TaskId) -> Option<CostModel> {
        let profile = self.measured_profile(task_id)?;
        CostModel::new(profile, &self.llm_model_for(task_id), &self.config.cost.surrogate_model, &self.pricing).ok()
    }

    fn judge_shadow(&mut self, task_id: TaskId, ts: u64) -> anyhow::Result<()> {
        let t = &self.state.tasks[&task_id];
        let report = shadow_compare(&t.shadow, self.config.monitor.window)?;
        let baseline = t.baseline_agreement;
        match shadow_verdict(&report, baseline, &self.config.monitor) {
            Some(LifecycleEvent::AgreementMet) => {
                let surrogate = t
                    .artifact_id
                    .as_ref()
                    .and_then(|a| self.state.artifacts.get(a))
                    .map_or_else(String::new, |a| a.base_model.clone());
                let cost = self.measured_cost(task_id);
                let offer_id = self.state.next_offer_id();
                let llm = self.llm_model_for(task_id);
                let outcome =
                    make_offer(offer_id, task_id, &report, baseline, &self.config.monitor, cost.as_ref(), &llm, &surrogate)?;
                match outcome {
                    OfferOutcome::Issued(offer) => {
                        self.transition(task_id, LifecycleEvent::AgreementMet, ts)?;
                        log::info!("{}", offer.message());
                        self.commit(Record::Offer(offer));
                        if self.config.monitor.auto_approve {
                            self.decide_offer(offer_id, true, ts)?;
                        }
                    }
                    OfferOutcome::Deferred => log::info!("{task_id}: offer deferred, no traffic statistics yet"),
                }
            }
            Some(event) => {
                log::info!(
                    "{task_id}: shadow agreement {:.3} (baseline {baseline:.3}) is below the bar",
                    report.agreement
                );
                self.transition(task_id, event, ts)?;
            }
            None => {}
        }
        Ok(())
    }

    fn roll_back(&mut self, task_id: TaskId, ts: u64) -> anyhow::Result<()> {
        self.transition(task_id, LifecycleEvent::Drift, ts)?;
        let generation = self.state.route_generation + 1;
        self.commit(Record::Routing { task_id, artifact_id: None, generation });
        self.transition(task_id, LifecycleEvent::Rollback, ts)?;
        self.transition(task_id, LifecycleEvent::Recollect, ts)?;
        Ok(())
    }

    pub fn offers(&self) -> Vec<Offer> {
        self.state.offers.values().cloned().collect()
    }

    /// Accepts or rejects a pending offer.
    pub fn decide_offer(&mut self, offer_id: u64, accept: bool, ts: u64) -> Result<Offer, OfferError> {
        let offer = self.state.offers.get(&offer_id).cloned().ok_or(OfferError::Unknown(offer_id))?;
        if offer.status != OfferStatus::Pending {
            return Err(OfferError::NotPending(offer_id, offer.status));
        }
        let unusable = |reason: String| OfferError::Unusable { id: offer_id, reason };
        let task = self.state.tasks.get(&offer.task_id).ok_or_else(|| unusable("task is gone".into()))?;
        if task.state() != LifecycleState::Offered {
            return Err(unusable(format!("task is {}", task.state())));
        }
        let artifact = task.artifact_id.clone().ok_or_else(|| unusable("task has no artifact".into()))?;
        if accept {
            self.surrogate(&artifact).map_err(|e| unusable(format!("{e:#}")))?;
        }
        let status = if accept { OfferStatus::Accepted } else { OfferStatus::Rejected };
        self.commit(Record::OfferDecision { offer_id, status });
        let event = if accept { LifecycleEvent::Accept } else { LifecycleEvent::Reject };
        self.transition(offer.task_id, event, ts).map_err(|e| unusable(format!("{e:#}")))?;
        if accept {
            let generation = self.state.route_generation + 1;
            self.commit(Record::Routing { task_id: offer.task_id, artifact_id: Some(artifact), generation });
        }
        Ok(self.state.offers[&offer_id].clone())
    }

    /// Registers a task by template. A task with an identical template is
    /// reused.
    pub fn register_task(&mut self, template: PromptTemplate, ts: u64) -> (TaskId, bool) {
        if let Some(t) = self.state.tasks.values().find(|t| t.record.template.as_ref() == Some(&template)) {
            return (t.record.task_id, false);
        }
        let task_id = self.state.clusters.next_id();
        let exemplar = template.instantiate::<&str>(&[]);
        self.commit(Record::TaskCreated { task_id, exemplar, timestamp_ms: ts, template: Some(template) });
        (task_id, true)
    }

    pub fn task_view(&self, task_id: TaskId) -> Option<TaskView> {
        task_view(&self.state, task_id)
    }
}

pub fn task_view(state: &SystemState, task_id: TaskId) -> Option<TaskView> {
    let t = state.tasks.get(&task_id)?;
    Some(TaskView {
        task_id,
        state: t.state(),
        task_type: t.record.task_type().map(|k| k.as_str().to_string()),
        members: t.record.member_count,
        labeled: t.record.labeled_count,
        collect_goal: t.collect_goal,
        template: t.record.template.as_ref().map(|tp| tp.to_string()),
        slots: t.record.template.as_ref().map_or(0, |tp| tp.slot_count()),
        schema: t.schema.as_ref().map(|s| s.to_string()),
        artifact_id: t.artifact_id.clone(),
        routed: state.routes.contains_key(&task_id),
    })
}
