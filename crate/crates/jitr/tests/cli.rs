mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use jitr::config::JitrConfig;
use jitr::ledger::{read_ledger, Record};
use jitr_core::cost::CostModel;
use jitr_core::lifecycle::LifecycleState;
use jitr_core::miner::TaskId;
use jitr_core::monitor::OfferStatus;
use serde_json::Value;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["jitrctl"];
    argv.extend_from_slice(args);
    let code = jitr::cli::run(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn write_config(dir: &Path, cfg: &JitrConfig) -> String {
    let p = dir.join("jitr.toml");
    std::fs::write(&p, toml::to_string(cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn file_config(dir: &Path) -> JitrConfig {
    let mut cfg = fast_config();
    cfg.gateway.ledger = dir.join("ledger.log");
    cfg.gateway.artifacts_dir = dir.join("artifacts");
    cfg.monitor.auto_approve = false;
    cfg
}

#[test]
fn empty_ledger_lists_nothing_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("none.log");
    let l = ledger.to_str().unwrap();
    let r = run(&["--ledger", l, "tasks", "list"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.lines().count(), 1, "header only: {}", r.out);
    let r = run(&["--ledger", l, "--json", "offers", "list"]);
    assert_eq!(r.code, 0);
    assert_eq!(serde_json::from_str::<Value>(&r.out).unwrap(), serde_json::json!([]));
}

#[test]
fn unknown_ids_and_bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_config(dir.path());
    let c = write_config(dir.path(), &cfg);
    for args in [
        vec!["--config", &c, "tasks", "show", "task-7"],
        vec!["--config", &c, "offers", "accept", "3"],
        vec!["--config", &c, "export", "task-2"],
        vec!["--config", &c, "report", "costs", "--model", "no-such-llm"],
        vec!["tasks", "frobnicate"],
    ] {
        let r = run(&args);
        assert_eq!(r.code, 1, "{args:?}: {}", r.out);
        assert!(!r.err.is_empty());
    }
    assert_eq!(run(&["--help"]).code, 0);
}

#[test]
fn offer_accept_through_the_cli_appends_a_route() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_config(dir.path());
    let c = write_config(dir.path(), &cfg);
    {
        let mut e = jitr::engine::Engine::open(
            cfg.clone(),
            std::sync::Arc::new(jitr::corpus::bundled_zoo(&cfg.corpus)),
            std::sync::Arc::new(jitr_core::clock::FrozenClock),
        )
        .unwrap();
        let m = mock(&cfg);
        for (i, l) in trace(&cfg, 3_000, 1).iter().enumerate() {
            if e.state().task(TaskId(0)).is_some_and(|t| t.state() == LifecycleState::Offered) {
                break;
            }
            m.set_truth(&l.prompt, l.ground_truth_label.as_deref().unwrap());
            e.handle(request(l, &format!("o-{i}")), &*m).unwrap();
        }
    }
    let r = run(&["--config", &c, "--json", "offers", "list"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let offers: Value = serde_json::from_str(&r.out).unwrap();
    let id = offers[0]["offer_id"].as_u64().expect("one pending offer");
    assert_eq!(offers[0]["status"], "pending");

    let before = read_ledger(&cfg.gateway.ledger).unwrap().len();
    let r = run(&["--config", &c, "offers", "accept", &id.to_string()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let entries = read_ledger(&cfg.gateway.ledger).unwrap();
    let new: Vec<&Record> = entries[before..].iter().map(|e| &e.record).collect();
    assert!(new.iter().any(|r| matches!(r, Record::Routing { artifact_id: Some(_), .. })));

    let r = run(&["--config", &c, "--json", "tasks", "show", "task-0"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["state"], "DEPLOYED");
    // A second decision on the same offer is a conflict, which is the user's fault.
    assert_eq!(run(&["--config", &c, "offers", "reject", &id.to_string()]).code, 1);
    let state = jitr::state::SystemState::replay(&cfg, &entries);
    assert_eq!(state.offers[&id].status, OfferStatus::Accepted);

    let r = run(&["--config", &c, "export", "task-0", "--split", "validation"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let first: Value = serde_json::from_str(r.out.lines().next().unwrap()).unwrap();
    assert!(first["label"].is_string() && first["text"].is_string());
}

#[test]
fn cost_report_matches_the_cost_model() {
    let cfg = JitrConfig::default();
    let r = run(&["--json", "report", "costs", "--model", "gpt-4.1", "--points", "1000000"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    let cm = CostModel::new(cfg.profile(), "gpt-4.1", &cfg.cost.surrogate_model, &cfg.pricing().unwrap()).unwrap();
    let want = serde_json::to_value(cm.report(&[1_000_000])).unwrap();
    assert_eq!(v["break_even_n"], want["break_even_n"]);
    assert_eq!(v["samples"], want["samples"]);
    assert_eq!(v["llm_model"], "gpt-4.1");
}

#[test]
fn malformed_trace_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    let good = serde_json::to_string(&trace(&fast_config(), 1, 1)[0]).unwrap();
    std::fs::write(&p, format!("{good}\n{good}\n{{not json\n")).unwrap();
    let r = run(&["simulate", p.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains('3'), "{}", r.err);
}

#[test]
fn empty_trace_has_no_break_even() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    std::fs::write(&p, "").unwrap();
    let r = run(&["simulate", p.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("break-even: none"), "{}", r.out);
    assert!(r.out.contains("requests: 0"));
}

#[test]
fn simulate_is_deterministic_and_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fast_config();
    let c = write_config(dir.path(), &cfg);
    let t = dir.path().join("trace.jsonl");
    let r = run(&["--config", &c, "generate", "trace", "--n", "1500", "--seed", "4", "--out", t.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let r = run(&["--config", &c, "simulate", t.to_str().unwrap(), "--out", out.to_str().unwrap(), "--step", "100000"]);
        assert_eq!(r.code, 0, "{}", r.err);
        assert!(out.join("curves.csv").exists() && out.join("ledger.log").exists());
        reports.push(std::fs::read_to_string(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(v["requests"], 1500);
    assert!(v["deployed"].as_bool().unwrap());

    // The same output directory is refused rather than appended to.
    let again = run(&["--config", &c, "simulate", t.to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap()]);
    assert_ne!(again.code, 0);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_jitrctl");
    let dir = tempfile::tempdir().unwrap();
    let l = dir.path().join("l.log");
    let ok = Command::new(bin).args(["--ledger", l.to_str().unwrap(), "tasks", "list"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["--ledger", l.to_str().unwrap(), "tasks", "show", "task-9"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown task"));
    let time = Command::new(bin).args(["report", "time"]).output().unwrap();
    assert_eq!(time.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&time.stdout).contains("break-even"));
}
