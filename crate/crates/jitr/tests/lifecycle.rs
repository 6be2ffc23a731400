mod common;

use common::*;
use jitr::ledger::{decode, Record, RouteMode};
use jitr::state::SystemState;
use jitr::wire::ServedBy;
use jitr_core::lifecycle::{LifecycleEvent, LifecycleState};
use jitr_core::miner::TaskId;

const TASK: TaskId = TaskId(0);

#[test]
fn task_deploys_and_replay_matches_live_state_at_every_checkpoint() {
    let cfg = fast_config();
    let mut e = engine(&cfg);
    let m = mock(&cfg);
    let lines = trace(&cfg, 1_600, 11);
    let mut checkpoints = Vec::new();
    for (i, chunk) in lines.chunks(200).enumerate() {
        drive(&mut e, &m, chunk, &format!("c{i}"));
        checkpoints.push((e.state().next_offset, e.state().clone()));
    }
    assert_eq!(e.state().task(TASK).unwrap().state(), LifecycleState::Deployed);

    let entries = decode(e.ledger().memory().unwrap()).unwrap();
    assert_eq!(&SystemState::replay(&cfg, &entries), e.state());
    for (offset, live) in &checkpoints {
        let replayed = SystemState::replay(&cfg, &entries[..*offset as usize]);
        assert_eq!(&replayed, live, "prefix of {offset} records");
    }

    let path: Vec<LifecycleState> = e.state().transitions.iter().map(|t| t.to).collect();
    for want in [
        LifecycleState::Collecting,
        LifecycleState::Searching,
        LifecycleState::Training,
        LifecycleState::Shadow,
        LifecycleState::Offered,
        LifecycleState::Deployed,
    ] {
        assert!(path.contains(&want), "{want} missing from {path:?}");
    }
}

#[test]
fn deployed_task_is_served_by_exactly_one_route() {
    let cfg = fast_config();
    let mut e = engine(&cfg);
    let m = mock(&cfg);
    drive_until(&mut e, &m, &cfg, TASK, LifecycleState::Deployed, 3_000, 1);
    let before_calls = m.calls();
    let responses = drive(&mut e, &m, &trace(&cfg, 400, 2), "after");
    assert!(responses.iter().all(|r| r.served_by == ServedBy::Surrogate));

    let entries = decode(e.ledger().memory().unwrap()).unwrap();
    let traces: Vec<_> = entries
        .iter()
        .filter_map(|en| match &en.record {
            Record::Trace(t) if t.request_id.starts_with("after-") => Some(t),
            _ => None,
        })
        .collect();
    assert_eq!(traces.len(), 400);
    let probes = traces.iter().filter(|t| t.mode == RouteMode::Probe).count() as u64;
    // Only probes reach the LLM, and the client never sees their LLM answer.
    assert_eq!(m.calls() - before_calls, probes);
    assert!(probes > 40 && probes < 130, "{probes} probes at p = 0.2");
    for t in traces {
        assert_eq!(t.served_by, ServedBy::Surrogate);
        assert_eq!(t.llm_latency_ms.is_some(), t.mode == RouteMode::Probe);
        assert_eq!(t.response, format!("{{\"sentiment\":\"{}\"}}", t.surrogate_label.as_ref().unwrap()));
    }
}

#[test]
fn drift_rolls_back_atomically_within_two_windows() {
    let cfg = fast_config();
    let mut e = engine(&cfg);
    let m = mock(&cfg);
    drive_until(&mut e, &m, &cfg, TASK, LifecycleState::Deployed, 3_000, 1);
    let injected_at = e.state().next_offset;
    m.set_flip_fraction(0.3);
    drive_until(&mut e, &m, &cfg, TASK, LifecycleState::Collecting, 20_000, 5);

    let entries = decode(e.ledger().memory().unwrap()).unwrap();
    let after = &entries[injected_at as usize..];
    let drift_at = after
        .iter()
        .position(|en| matches!(&en.record, Record::Transition(t) if t.event == LifecycleEvent::Drift))
        .expect("drift transition");
    let probes = after[..drift_at]
        .iter()
        .filter(|en| matches!(&en.record, Record::Trace(t) if t.mode == RouteMode::Probe))
        .count();
    assert!(probes <= 2 * cfg.monitor.window, "{probes} probes before rollback");

    // Drift, route removal, rollback and recollect are adjacent records.
    let tail: Vec<&Record> = after[drift_at..drift_at + 4].iter().map(|en| &en.record).collect();
    assert!(matches!(tail[0], Record::Transition(t) if t.to == LifecycleState::Degraded));
    assert!(matches!(tail[1], Record::Routing { artifact_id: None, .. }));
    assert!(matches!(tail[2], Record::Transition(t) if t.to == LifecycleState::RolledBack));
    assert!(matches!(tail[3], Record::Transition(t) if t.to == LifecycleState::Collecting));
    assert!(e.routes().load().routes.is_empty());

    // Nothing is served by the surrogate after the rollback.
    let later = drive(&mut e, &m, &trace(&cfg, 50, 6), "later");
    assert!(later.iter().all(|r| r.served_by == ServedBy::LlmWrapped));
    let all = decode(e.ledger().memory().unwrap()).unwrap();
    assert_eq!(&SystemState::replay(&cfg, &all), e.state());
}

#[test]
fn rejected_offer_abandons_the_task() {
    let mut cfg = fast_config();
    cfg.monitor.min_agreement = 0.0;
    let mut e = engine(&cfg);
    let m = mock(&cfg);
    let lines = trace(&cfg, 3_000, 3);
    let mut offer = None;
    for (i, l) in lines.iter().enumerate() {
        m.set_truth(&l.prompt, l.ground_truth_label.as_deref().unwrap());
        e.handle(request(l, &format!("r-{i}")), &*m).unwrap();
        if let Some(o) = e.offers().first() {
            offer = Some(o.offer_id);
            break;
        }
    }
    let id = offer.expect("an offer");
    let o = e.decide_offer(id, false, 0).unwrap();
    assert_eq!(o.status, jitr_core::monitor::OfferStatus::Rejected);
    assert_eq!(e.state().task(TASK).unwrap().state(), LifecycleState::Abandoned);
    assert!(e.routes().load().routes.is_empty());
    assert!(e.decide_offer(id, true, 0).is_err());
    assert!(matches!(e.decide_offer(99, true, 0), Err(jitr::engine::OfferError::Unknown(99))));
}

#[test]
fn restart_restores_routes_from_ledger_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fast_config();
    cfg.gateway.ledger = dir.path().join("ledger.log");
    cfg.gateway.artifacts_dir = dir.path().join("artifacts");
    cfg.monitor.probe_fraction = 0.0;
    let store = std::sync::Arc::new(jitr::corpus::bundled_zoo(&cfg.corpus));
    let clock = std::sync::Arc::new(jitr_core::clock::FrozenClock);
    let m = mock(&cfg);
    let live = {
        let mut e = jitr::engine::Engine::open(cfg.clone(), store.clone(), clock.clone()).unwrap();
        drive_until(&mut e, &m, &cfg, TASK, LifecycleState::Deployed, 3_000, 1);
        e.state().clone()
    };
    let mut e = jitr::engine::Engine::open(cfg.clone(), store, clock).unwrap();
    assert_eq!(e.state(), &live);
    assert!(e.routes().load().routes.contains_key(&TASK));
    let before = m.calls();
    let r = drive(&mut e, &m, &trace(&cfg, 5, 9), "again");
    assert!(r.iter().all(|r| r.served_by == ServedBy::Surrogate));
    assert_eq!(m.calls(), before);
}
