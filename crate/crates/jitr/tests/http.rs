mod common;

use std::sync::Arc;

use common::*;
use jitr::gateway::Gateway;
use jitr_core::clock::FrozenClock;
use serde_json::{json, Value};

fn start(gw: Gateway) -> (String, tokio::runtime::Runtime) {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, jitr::http::router(gw)).await.unwrap() });
    (format!("http://{addr}"), rt)
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn post(a: &ureq::Agent, url: &str, body: &Value) -> (u16, Value) {
    let mut r = a.post(url).send_json(body).unwrap();
    let status = r.status().as_u16();
    (status, r.body_mut().read_json().unwrap())
}

#[test]
fn chat_offers_and_tasks_over_http() {
    let mut cfg = fast_config();
    cfg.monitor.auto_approve = false;
    let m = mock(&cfg);
    let gw = Gateway::new(engine(&cfg), Box::new(m.clone()), Arc::new(FrozenClock), false);
    let (base, _rt) = start(gw.clone());
    let a = agent();

    let health = a.get(&format!("{base}/healthz")).call().unwrap().body_mut().read_to_string().unwrap();
    assert_eq!(health, "ok");

    let lines = trace(&cfg, 3_000, 1);
    let chat = format!("{base}/v1/chat/completions");
    let mut offer = None;
    for (i, l) in lines.iter().enumerate() {
        m.set_truth(&l.prompt, l.ground_truth_label.as_deref().unwrap());
        let body = json!({ "model": "gpt-4.1", "messages": [{ "role": "user", "content": l.prompt }], "request_id": format!("h-{i}") });
        let (status, v) = post(&a, &chat, &body);
        assert_eq!(status, 200, "{v}");
        assert_eq!(v["object"], "chat.completion");
        assert!(v["choices"][0]["message"]["content"].as_str().unwrap().contains("sentiment"));
        if i == 0 {
            assert_eq!(v["jitr"]["served_by"], "llm_wrapped");
            assert_eq!(v["jitr"]["task_id"], 0);
        }
        let mut r = a.get(&format!("{base}/offers")).call().unwrap();
        let offers: Value = r.body_mut().read_json().unwrap();
        if let Some(o) = offers.as_array().unwrap().iter().find(|o| o["status"] == "pending") {
            offer = o["offer_id"].as_u64();
            break;
        }
    }
    let id = offer.expect("an offer over HTTP");

    let (status, _) = post(&a, &format!("{base}/offers"), &json!({ "offer_id": id, "action": "maybe" }));
    assert_eq!(status, 400);
    let (status, _) = post(&a, &format!("{base}/offers"), &json!({ "offer_id": 999, "action": "accept" }));
    assert_eq!(status, 404);
    let (status, v) = post(&a, &format!("{base}/offers"), &json!({ "offer_id": id, "action": "accept" }));
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["status"], "accepted");
    let (status, _) = post(&a, &format!("{base}/offers"), &json!({ "offer_id": id, "action": "reject" }));
    assert_eq!(status, 409);

    let body = json!({ "model": "gpt-4.1", "messages": [{ "role": "user", "content": lines[2_999].prompt }] });
    let (status, v) = post(&a, &chat, &body);
    assert_eq!(status, 200);
    assert_eq!(v["jitr"]["served_by"], "surrogate");

    let mut r = a.get(&format!("{base}/tasks")).call().unwrap();
    let tasks: Value = r.body_mut().read_json().unwrap();
    assert_eq!(tasks[0]["routed"], true);
}

#[test]
fn malformed_and_failing_requests_map_to_status_codes() {
    let cfg = fast_config();
    let m = mock(&cfg);
    let gw = Gateway::new(engine(&cfg), Box::new(m.clone()), Arc::new(FrozenClock), false);
    let (base, _rt) = start(gw);
    let a = agent();
    let chat = format!("{base}/v1/chat/completions");

    let mut r = a.post(&chat).header("content-type", "application/json").send("{\"model\": ").unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let v: Value = r.body_mut().read_json().unwrap();
    assert_eq!(v["error"]["type"], "invalid_request_error");

    let (status, _) = post(&a, &chat, &json!({ "model": "gpt-4.1", "messages": [] }));
    assert_eq!(status, 400);

    m.script(Err(jitr::upstream::UpstreamError("timed out".into())));
    let (status, v) = post(&a, &chat, &json!({ "model": "gpt-4.1", "messages": [{ "role": "user", "content": "hi" }] }));
    assert_eq!(status, 502);
    assert!(v["error"]["message"].as_str().unwrap().contains("timed out"));
}
