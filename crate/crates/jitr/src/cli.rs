//! `jitrctl`: operator commands, simulator and data generators.
//!
//! Exit codes: 0 success, 1 user error (bad arguments, unknown ids, invalid
//! input files), 2 internal error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use jitr_core::cost::{CostModel, Money};
use jitr_core::miner::TaskId;
use jitr_core::zoo::ModelStore;
use serde::Serialize;

use crate::compare::{compare_dev, learning_curve, CompareSizes};
use crate::config::{JitrConfig, UpstreamMode};
use crate::corpus::{bundled_zoo, load_imdb, load_zoo, write_zoo, ReviewGenerator, TraceGenerator};
use crate::dataset::Split;
use crate::engine::{parse_template, task_view, Engine, OfferError};
use crate::gateway::{now_ms, Gateway, SystemClock};
use crate::ledger::read_ledger;
use crate::simulate::{simulate, SimulationOptions};
use crate::state::SystemState;
use crate::trace::{read_trace, write_trace, TraceError};
use crate::upstream::{HttpUpstream, MockLlm, Upstream};

#[derive(Debug, Parser)]
#[command(name = "jitrctl", version, about = "Operate a JITR gateway and run its simulations")]
pub struct Cli {
    /// Configuration file (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ledger file, overriding the configuration.
    #[arg(long, global = true)]
    pub ledger: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP gateway.
    Serve {
        /// Listen address, overriding the configuration.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Inspect or register tasks.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
    /// List and decide replacement offers.
    Offers {
        #[command(subcommand)]
        command: OffersCommand,
    },
    /// Cost and time analyses.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// Write a task's labeled examples as JSONL.
    Export {
        task: TaskId,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a trace through the pipeline with the mock LLM.
    Simulate {
        trace: PathBuf,
        /// Directory for report.json, curves.csv, the ledger and artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// LLM for requests whose trace line names none.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 2_000_000)]
        horizon: u64,
        #[arg(long, default_value_t = 10_000)]
        step: u64,
    },
    /// Compare surrogate development strategies.
    CompareDev {
        /// IMDB-style directory with pos/ and neg/; the bundled generator is used otherwise.
        #[arg(long)]
        imdb: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        seed: u64,
    },
    /// Write synthetic inputs.
    Generate {
        #[command(subcommand)]
        command: GenerateCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum TasksCommand {
    List,
    Show { task: TaskId },
    /// Register a task by template; `<SLOT>` marks each varying region.
    Register {
        #[arg(long)]
        template: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum OffersCommand {
    List,
    Accept { offer: u64 },
    Reject { offer: u64 },
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Cumulative cost of LLM-only versus JITR serving.
    Costs(CostArgs),
    /// Cumulative processing time of LLM-only versus JITR serving.
    Time {
        /// Requests served by the LLM before the switch.
        #[arg(long)]
        switch: Option<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = [100_000u64, 1_000_000, 2_000_000])]
        points: Vec<u64>,
    },
    /// Surrogate accuracy against the number of training examples.
    Learning {
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 250, 500, 1_000, 2_500, 5_000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// LLM priced; the configured default when absent.
    #[arg(long)]
    model: Option<String>,
    /// Use the traffic profile measured for this task instead of the configured one.
    #[arg(long)]
    task: Option<TaskId>,
    #[arg(long, value_delimiter = ',', default_values_t = [10_000u64, 100_000, 1_000_000, 2_000_000])]
    points: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceKind {
    /// Sentiment requests with ground truth.
    Sentiment,
    /// Three templated tasks plus chatter.
    Mixed,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    Trace {
        #[arg(long, value_enum, default_value_t = TraceKind::Sentiment)]
        kind: TraceKind,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        chatter: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled model zoo as a manifest plus prior files.
    Zoo {
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure and whose fault it is.
#[derive(Debug)]
pub enum CliError {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl Into<anyhow::Error>) -> CliError {
    CliError::User(e.into())
}

fn internal(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Internal(e.into())
}

type CliResult = Result<(), CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::User(inner) | CliError::Internal(inner)) = &e;
            let _ = writeln!(err, "error: {inner:#}");
            e.code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<JitrConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => JitrConfig::load(p).map_err(user)?,
        None => JitrConfig::default(),
    };
    if let Some(l) = &cli.ledger {
        cfg.gateway.ledger = l.clone();
    }
    Ok(cfg)
}

fn load_store(cfg: &JitrConfig) -> Result<Arc<ModelStore>, CliError> {
    Ok(Arc::new(match &cfg.gateway.zoo {
        Some(p) => load_zoo(p).map_err(user)?,
        None => bundled_zoo(&cfg.corpus),
    }))
}

fn replay(cfg: &JitrConfig) -> Result<SystemState, CliError> {
    let entries = read_ledger(&cfg.gateway.ledger).map_err(user)?;
    Ok(SystemState::replay(cfg, &entries))
}

fn open_engine(cfg: &JitrConfig) -> Result<Engine, CliError> {
    Engine::open(cfg.clone(), load_store(cfg)?, Arc::new(SystemClock::default())).map_err(user)
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> CliResult {
    serde_json::to_writer_pretty(&mut *out, value).map_err(internal)?;
    writeln!(out).map_err(internal)
}

fn table(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> CliResult {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect())).map_err(internal)?;
    for r in rows {
        writeln!(out, "{}", line(r.clone())).map_err(internal)?;
    }
    Ok(())
}

fn usd(m: Money) -> String {
    format!("{:.6}", m.usd())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::Serve { listen } => serve(cli, listen.as_deref()),
        Command::Tasks { command } => tasks(cli, command, out),
        Command::Offers { command } => offers(cli, command, out),
        Command::Report { command } => report(cli, command, out),
        Command::Export { task, split, seed, out: path } => export(cli, *task, *split, *seed, path.as_deref(), out),
        Command::Simulate { trace, out: dir, model, horizon, step } => {
            let mut cfg = load_config(cli)?;
            if let Some(m) = model {
                cfg.cost.llm_model = m.clone();
            }
            cfg.pricing().map_err(user)?.get(&cfg.cost.llm_model).map_err(user)?;
            let lines = read_trace(trace).map_err(|e| match e {
                TraceError::Malformed { .. } => user(e),
                TraceError::Io(io) => user(anyhow::Error::from(io).context(format!("reading {}", trace.display()))),
            })?;
            let store = load_store(&cfg)?;
            let report = simulate(&cfg, store, &lines, dir.as_deref(), SimulationOptions { horizon: *horizon, step: *step })
                .map_err(internal)?;
            if let Some(d) = dir {
                report.write_files(d).map_err(internal)?;
            }
            if cli.json {
                return emit_json(out, &report);
            }
            writeln!(out, "requests: {}", report.requests).map_err(internal)?;
            for t in &report.tasks {
                writeln!(out, "{}: {} ({} requests)", t.task_id, t.state, t.members).map_err(internal)?;
            }
            if let Some(acc) = report.teacher_accuracy {
                writeln!(out, "teacher accuracy: {acc:.3}").map_err(internal)?;
            }
            if let Some(acc) = report.surrogate_accuracy {
                writeln!(out, "surrogate accuracy: {acc:.3}").map_err(internal)?;
            }
            if let Some(p) = &report.profile {
                writeln!(
                    out,
                    "measured profile: {} in / {} out tokens, wrapper +{} / +{}, switch after {} requests",
                    p.avg_input_tokens,
                    p.avg_output_tokens,
                    p.wrapper_input_overhead_tokens,
                    p.wrapper_output_overhead_tokens,
                    p.switch_index
                )
                .map_err(internal)?;
            }
            let rows: Vec<Vec<String>> = report
                .cost_by_model
                .iter()
                .map(|m| {
                    vec![
                        m.llm_model.clone(),
                        m.break_even_n.map_or("never".into(), |n| n.to_string()),
                        usd(m.savings_at_1m),
                        m.cost_ratio_at_1m.map_or("-".into(), |r| format!("{r:.1}x")),
                    ]
                })
                .collect();
            if !rows.is_empty() {
                table(out, &["llm", "break_even", "savings_1m_usd", "ratio_1m"], &rows)?;
            }
            match &report.time {
                Some(t) => writeln!(
                    out,
                    "time break-even: {} requests; speedup {:.2}x at 1M, {:.2}x at 2M",
                    t.break_even_n, t.speedup_at_1m, t.speedup_at_2m
                )
                .map_err(internal)?,
                None => writeln!(out, "break-even: none (no task traffic)").map_err(internal)?,
            }
            Ok(())
        }
        Command::CompareDev { imdb, seed } => {
            let cfg = load_config(cli)?;
            let store = load_store(&cfg)?;
            let sizes = CompareSizes::default();
            let examples = match imdb {
                Some(dir) => load_imdb(dir, None).map_err(user)?,
                None => ReviewGenerator::new(cfg.corpus.clone()).examples(sizes.total(), *seed),
            };
            let r = compare_dev(&store, &examples, sizes, &cfg).map_err(user)?;
            if cli.json {
                return emit_json(out, &r);
            }
            let rows: Vec<Vec<String>> = r
                .strategies
                .iter()
                .map(|s| {
                    vec![
                        s.strategy.clone(),
                        s.model_id.clone(),
                        s.train_examples.to_string(),
                        format!("{:.3}", s.wall_time_s),
                        format!("{:.4}", s.test_accuracy),
                    ]
                })
                .collect();
            table(out, &["strategy", "model", "train", "wall_s", "accuracy"], &rows)
        }
        Command::Generate { command } => generate(cli, command, out),
    }
}

fn serve(cli: &Cli, listen: Option<&str>) -> CliResult {
    let cfg = load_config(cli)?;
    let listen = listen.unwrap_or(&cfg.gateway.listen).to_string();
    let engine = open_engine(&cfg)?;
    let upstream: Box<dyn Upstream> = match cfg.upstream.mode {
        UpstreamMode::Mock => Box::new(MockLlm::new(cfg.mock.clone(), cfg.wrapper().map_err(user)?, &cfg.corpus)),
        UpstreamMode::Http => {
            let key = std::env::var(&cfg.upstream.api_key_env).ok();
            if key.is_none() {
                log::warn!("{} is not set; calling the upstream without a key", cfg.upstream.api_key_env);
            }
            Box::new(HttpUpstream::new(&cfg.upstream.url, key, Duration::from_secs_f64(cfg.upstream.timeout_s)))
        }
    };
    let gateway = Gateway::new(engine, upstream, Arc::new(SystemClock::default()), cfg.gateway.background_jobs);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(internal)?;
    rt.block_on(crate::http::serve(gateway, &listen)).map_err(user)
}

fn tasks(cli: &Cli, command: &TasksCommand, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(cli)?;
    match command {
        TasksCommand::List => {
            let state = replay(&cfg)?;
            let views: Vec<_> = state.tasks.keys().filter_map(|&t| task_view(&state, t)).collect();
            if cli.json {
                return emit_json(out, &views);
            }
            let rows: Vec<Vec<String>> = views
                .iter()
                .map(|v| {
                    vec![
                        v.task_id.to_string(),
                        v.state.to_string(),
                        v.task_type.clone().unwrap_or_else(|| "-".into()),
                        v.members.to_string(),
                        v.labeled.to_string(),
                        v.artifact_id.clone().unwrap_or_else(|| "-".into()),
                    ]
                })
                .collect();
            table(out, &["task", "state", "type", "requests", "labeled", "artifact"], &rows)
        }
        TasksCommand::Show { task } => {
            let state = replay(&cfg)?;
            let t = state.task(*task).ok_or_else(|| user(anyhow::anyhow!("unknown task {task}")))?;
            #[derive(Serialize)]
            struct Detail<'a> {
                task_id: TaskId,
                state: String,
                task_type: Option<&'a str>,
                requests: u64,
                labeled: u64,
                unparseable: u64,
                collect_goal: u64,
                template: Option<String>,
                schema: Option<String>,
                artifact_id: Option<&'a str>,
                baseline_agreement: f64,
                ranking: Option<&'a [jitr_core::zoo::CandidateScore]>,
                failures: &'a [String],
            }
            let d = Detail {
                task_id: *task,
                state: t.state().to_string(),
                task_type: t.record.task_type().map(|k| k.as_str()),
                requests: t.record.member_count,
                labeled: t.record.labeled_count,
                unparseable: t.record.unparseable_count,
                collect_goal: t.collect_goal,
                template: t.record.template.as_ref().map(|tp| tp.to_string()),
                schema: t.schema.as_ref().map(|s| s.to_string()),
                artifact_id: t.artifact_id.as_deref(),
                baseline_agreement: t.baseline_agreement,
                ranking: t.ranking.as_deref(),
                failures: &t.failures,
            };
            if cli.json {
                return emit_json(out, &d);
            }
            let w = |out: &mut dyn Write, k: &str, v: String| writeln!(out, "{k:<12} {v}").map_err(internal);
            w(out, "task", d.task_id.to_string())?;
            w(out, "state", d.state.clone())?;
            w(out, "type", d.task_type.unwrap_or("-").into())?;
            w(out, "requests", d.requests.to_string())?;
            w(out, "labeled", format!("{} (goal {}, unparseable {})", d.labeled, d.collect_goal, d.unparseable))?;
            w(out, "schema", d.schema.clone().unwrap_or_else(|| "-".into()))?;
            w(out, "artifact", d.artifact_id.unwrap_or("-").into())?;
            if let Some(r) = d.ranking {
                let top: Vec<String> = r.iter().take(3).map(|c| format!("{} ({:.3})", c.model_id, c.proxy_accuracy)).collect();
                w(out, "ranking", top.join(", "))?;
            }
            for f in d.failures {
                w(out, "failure", f.clone())?;
            }
            w(out, "template", d.template.clone().unwrap_or_else(|| "-".into()))
        }
        TasksCommand::Register { template } => {
            let mut engine = open_engine(&cfg)?;
            let (id, created) = engine.register_task(parse_template(template), now_ms());
            if cli.json {
                return emit_json(out, &serde_json::json!({ "task_id": id, "created": created }));
            }
            let verb = if created { "registered" } else { "already registered as" };
            writeln!(out, "{verb} {id}").map_err(internal)
        }
    }
}

fn offers(cli: &Cli, command: &OffersCommand, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(cli)?;
    match command {
        OffersCommand::List => {
            let state = replay(&cfg)?;
            let offers: Vec<_> = state.offers.values().collect();
            if cli.json {
                return emit_json(out, &offers);
            }
            let rows: Vec<Vec<String>> = offers
                .iter()
                .map(|o| {
                    vec![
                        o.offer_id.to_string(),
                        o.task_id.to_string(),
                        o.status.to_string(),
                        o.current_model.clone(),
                        o.surrogate.clone(),
                        format!("{:.3}", o.agreement),
                        format!("{:.2}", o.savings_per_million.usd()),
                    ]
                })
                .collect();
            table(out, &["offer", "task", "status", "llm", "surrogate", "agreement", "savings_per_1m_usd"], &rows)
        }
        OffersCommand::Accept { offer } | OffersCommand::Reject { offer } => {
            let accept = matches!(command, OffersCommand::Accept { .. });
            let mut engine = open_engine(&cfg)?;
            let o = engine.decide_offer(*offer, accept, now_ms()).map_err(|e| match e {
                OfferError::Unknown(_) | OfferError::NotPending(..) => user(e),
                OfferError::Unusable { .. } => user(e),
            })?;
            if cli.json {
                return emit_json(out, &o);
            }
            writeln!(out, "offer {} {}: {} is now served by {}", o.offer_id, o.status, o.task_id, if accept { &o.surrogate } else { &o.current_model })
                .map_err(internal)
        }
    }
}

fn report(cli: &Cli, command: &ReportCommand, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(cli)?;
    let pricing = cfg.pricing().map_err(user)?;
    match command {
        ReportCommand::Costs(args) => {
            let (profile, default_model) = match args.task {
                Some(t) => {
                    let engine = open_engine(&cfg)?;
                    if engine.state().task(t).is_none() {
                        return Err(user(anyhow::anyhow!("unknown task {t}")));
                    }
                    let p = engine
                        .measured_profile(t)
                        .ok_or_else(|| user(anyhow::anyhow!("{t} has no wrapped traffic to measure yet")))?;
                    (p, engine.llm_model_for(t))
                }
                None => (cfg.profile(), cfg.cost.llm_model.clone()),
            };
            let model = args.model.clone().unwrap_or(default_model);
            let cm = CostModel::new(profile, &model, &cfg.cost.surrogate_model, &pricing).map_err(user)?;
            let r = cm.report(&args.points);
            if cli.json {
                #[derive(Serialize)]
                struct Out<'a> {
                    llm_model: &'a str,
                    surrogate_model: &'a str,
                    profile: jitr_core::cost::TrafficProfile,
                    #[serde(flatten)]
                    report: jitr_core::cost::CostReport,
                }
                return emit_json(out, &Out { llm_model: &model, surrogate_model: &cfg.cost.surrogate_model, profile, report: r });
            }
            writeln!(
                out,
                "{model} -> {}: {} in / {} out tokens, wrapper +{} / +{}, switch after {}, development {} USD",
                cfg.cost.surrogate_model,
                profile.avg_input_tokens,
                profile.avg_output_tokens,
                profile.wrapper_input_overhead_tokens,
                profile.wrapper_output_overhead_tokens,
                profile.switch_index,
                usd(profile.dev_cost)
            )
            .map_err(internal)?;
            let rows: Vec<Vec<String>> = r
                .samples
                .iter()
                .map(|s| {
                    vec![
                        s.requests.to_string(),
                        usd(s.llm_cumulative),
                        usd(s.jitr_cumulative),
                        usd(s.savings()),
                        cm.cost_ratio_at(s.requests).map_or("-".into(), |x| format!("{x:.2}x")),
                    ]
                })
                .collect();
            table(out, &["requests", "llm_usd", "jitr_usd", "savings_usd", "ratio"], &rows)?;
            writeln!(out, "break-even: {}", r.break_even_n.map_or("never".into(), |n| n.to_string())).map_err(internal)
        }
        ReportCommand::Time { switch, points } => {
            let tm = cfg.time_model_at(switch.unwrap_or(cfg.cost.switch_index)).map_err(user)?;
            #[derive(Serialize)]
            struct Row {
                requests: u64,
                llm_time_s: f64,
                jitr_time_s: f64,
                speedup: f64,
            }
            let rows: Vec<Row> = points
                .iter()
                .map(|&n| Row { requests: n, llm_time_s: tm.llm_time(n), jitr_time_s: tm.jitr_time(n), speedup: tm.speedup(n) })
                .collect();
            if cli.json {
                return emit_json(out, &serde_json::json!({ "model": tm, "break_even_n": tm.break_even(), "samples": rows }));
            }
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.requests.to_string(),
                        format!("{:.1}", r.llm_time_s),
                        format!("{:.1}", r.jitr_time_s),
                        format!("{:.2}x", r.speedup),
                    ]
                })
                .collect();
            table(out, &["requests", "llm_s", "jitr_s", "speedup"], &cells)?;
            writeln!(out, "break-even: {}", tm.break_even()).map_err(internal)
        }
        ReportCommand::Learning { sizes, seed } => {
            let store = load_store(&cfg)?;
            let max = sizes.iter().copied().max().unwrap_or(0);
            let examples = ReviewGenerator::new(cfg.corpus.clone()).examples(max + 2_500, *seed);
            let curve = learning_curve(&store, &examples, sizes, &cfg).map_err(user)?;
            if cli.json {
                return emit_json(out, &curve);
            }
            let rows: Vec<Vec<String>> = curve
                .iter()
                .map(|p| vec![p.model_id.clone(), p.train_examples.to_string(), format!("{:.4}", p.teacher_agreement), format!("{:.4}", p.test_accuracy)])
                .collect();
            table(out, &["model", "train", "teacher_agreement", "accuracy"], &rows)
        }
    }
}

fn export(cli: &Cli, task: TaskId, split: Split, seed: Option<u64>, path: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(cli)?;
    let state = replay(&cfg)?;
    let t = state.task(task).ok_or_else(|| user(anyhow::anyhow!("unknown task {task}")))?;
    let (examples, skipped) = t.export(split, seed.unwrap_or(cfg.lifecycle.split_seed), &cfg);
    let mut buf = Vec::new();
    for e in &examples {
        serde_json::to_writer(&mut buf, e).map_err(internal)?;
        buf.push(b'\n');
    }
    match path {
        Some(p) => {
            std::fs::write(p, &buf).with_context(|| format!("writing {}", p.display())).map_err(user)?;
            log::info!("wrote {} examples to {} ({skipped} unparseable rows dropped)", examples.len(), p.display());
        }
        None => out.write_all(&buf).map_err(internal)?,
    }
    Ok(())
}

fn generate(cli: &Cli, command: &GenerateCommand, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(cli)?;
    match command {
        GenerateCommand::Trace { kind, n, seed, chatter, out: path } => {
            let g = TraceGenerator::new(cfg.corpus.clone());
            let lines = match kind {
                TraceKind::Sentiment => g.sentiment(*n, *seed),
                TraceKind::Mixed => {
                    if !(0.0..=1.0).contains(chatter) {
                        return Err(user(anyhow::anyhow!("--chatter must be in [0, 1]")));
                    }
                    g.mixed(*n, *chatter, *seed).0
                }
            };
            write_trace(path, &lines).with_context(|| format!("writing {}", path.display())).map_err(user)?;
            writeln!(out, "wrote {} trace lines to {}", lines.len(), path.display()).map_err(internal)
        }
        GenerateCommand::Zoo { out: dir } => {
            let manifest = write_zoo(dir, &bundled_zoo(&cfg.corpus)).map_err(user)?;
            writeln!(out, "wrote {}", manifest.display()).map_err(internal)
        }
    }
}
