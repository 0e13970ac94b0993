use std::io::{BufRead, BufReader};
use std::net::SocketAddr;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use gamebench::registry::Registry;
use gamebench::runtime::service::{serve_session, ServiceHandle, Shared, SharedRun};
use gamebench::runtime::{split_preset, RunConfig};

fn start(preset: &str, seed: u64) -> (Shared, ServiceHandle) {
    let cfg = RunConfig::new(split_preset(preset).unwrap(), seed);
    let shared = SharedRun::start(&Registry::bundled(), cfg).unwrap();
    let handle = serve_session(shared.clone(), SocketAddr::from(([127, 0, 0, 1], 0))).unwrap();
    (shared, handle)
}

fn key(k: &str) -> Value {
    json!({"type": "press_key", "key": k})
}

#[test]
fn read_endpoints() {
    let (_, svc) = start("g2048+t04+oracle", 5);
    let base = svc.base_url();
    let c = Client::new();

    let state: Value = c.get(format!("{base}/state")).send().unwrap().json().unwrap();
    assert_eq!(state["gameId"], "g2048");
    assert!(state["game_state"]["board"].is_array());

    let ppm = c.get(format!("{base}/observation.ppm")).send().unwrap();
    assert_eq!(ppm.headers()["content-type"], "image/x-portable-pixmap");
    let frame = ppm.bytes().unwrap();
    assert!(frame.starts_with(b"P6"));
    let again = c.get(format!("{base}/observation.ppm")).send().unwrap().bytes().unwrap();
    assert_eq!(frame, again);

    let txt = c.get(format!("{base}/observation.txt")).send().unwrap().text().unwrap();
    assert!(!txt.trim().is_empty());

    let run: Value = c.get(format!("{base}/run")).send().unwrap().json().unwrap();
    assert_eq!(run["status"], "running");
    assert_eq!(run["steps_used"], 0);
    assert_eq!(run["max_steps"], 100);
}

#[test]
fn one_action_per_step_until_the_budget_is_spent() {
    let (shared, svc) = start("g2048+t04+oracle", 5);
    let base = svc.base_url();
    let c = Client::new();
    let keys = ["ArrowDown", "ArrowLeft", "ArrowRight", "ArrowUp"];
    for i in 0..100u32 {
        let resp = c.post(format!("{base}/action")).json(&key(keys[i as usize % 4])).send().unwrap();
        assert_eq!(resp.status(), StatusCode::OK, "step {}", i + 1);
        let body: Value = resp.json().unwrap();
        assert_eq!(body["step"], i + 1);
        assert_eq!(body["steps_used"], i + 1);
        assert_eq!(body["budget_remaining"], 99 - i);
        assert_eq!(body["classification"], "valid");
        assert_eq!(body["snapshot"]["gameId"], "g2048");
    }
    let resp = c.post(format!("{base}/action")).json(&key("ArrowDown")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["error"], "budget_exhausted");
    assert_eq!(body["status"], "budget_exhausted");
    assert_eq!(body["steps_used"], 100);
    assert_eq!(shared.lock().record().steps_used, 100);
}

#[test]
fn invalid_actions_are_scored_and_malformed_bodies_rejected() {
    let (_, svc) = start("snake+t01+oracle", 3);
    let base = svc.base_url();
    let c = Client::new();

    let resp = c.post(format!("{base}/action")).body("{not json").send().unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let click = json!({"type": "click", "x": 10, "y": 10});
    let body: Value = c.post(format!("{base}/action")).json(&click).send().unwrap().json().unwrap();
    assert_eq!(body["classification"], "OOS");
    assert_eq!(body["verdict"]["valid"], false);
    assert_eq!(body["steps_used"], 1);

    let run: Value = c.get(format!("{base}/run")).send().unwrap().json().unwrap();
    assert_eq!(run["validity"]["oos"], 1);
}

#[test]
fn reset_restarts_the_run() {
    let (_, svc) = start("g2048+t04+oracle", 5);
    let base = svc.base_url();
    let c = Client::new();
    let before: Value = c.get(format!("{base}/state")).send().unwrap().json().unwrap();
    for _ in 0..3 {
        c.post(format!("{base}/action")).json(&key("ArrowLeft")).send().unwrap();
    }
    let resp = c.post(format!("{base}/reset")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let run: Value = c.get(format!("{base}/run")).send().unwrap().json().unwrap();
    assert_eq!(run["steps_used"], 0);
    let after: Value = c.get(format!("{base}/state")).send().unwrap().json().unwrap();
    assert_eq!(after["game_state"], before["game_state"]);
}

#[test]
fn events_stream_one_line_per_step() {
    let (_, svc) = start("g2048+t04+oracle", 5);
    let base = svc.base_url();
    let c = Client::new();
    let stream = c.get(format!("{base}/events")).send().unwrap();
    assert_eq!(stream.headers()["content-type"], "application/x-ndjson");
    assert_eq!(stream.headers()["transfer-encoding"], "chunked");
    let mut lines = BufReader::new(stream).lines();
    let hello: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(hello["event"], "hello");
    assert_eq!(hello["steps_used"], 0);
    for k in ["ArrowDown", "ArrowLeft"] {
        c.post(format!("{base}/action")).json(&key(k)).send().unwrap();
    }
    for step in 1..=2 {
        let ev: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
        assert_eq!(ev["event"], "step");
        assert_eq!(ev["step"], step);
    }
    drop(lines);
    svc.stop();
}

#[test]
fn driven_runs_are_visible_to_viewers() {
    let (shared, svc) = start("snake+t01+oracle", 1);
    let base = svc.base_url();
    let profile = shared.lock().profile.clone();
    let mut agent = gamebench::agent::build_agent(&profile, 1).unwrap();
    let out = shared.drive(agent.as_mut()).unwrap();
    let run: Value = Client::new().get(format!("{base}/run")).send().unwrap().json().unwrap();
    assert_eq!(run["status"], out.record.status.as_str());
    assert_eq!(run["steps_used"], out.record.steps_used);
}

#[test]
fn occupied_port_is_an_error() {
    let (shared, svc) = start("snake+t01+oracle", 1);
    assert!(serve_session(shared, svc.addr).is_err());
}
