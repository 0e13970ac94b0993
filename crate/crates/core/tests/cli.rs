use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

fn bench(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "bench {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().to_str().unwrap();
    let line = stdout(&bench(&["run", "--config", "snake+t01+oracle", "--out", runs]));
    assert!(line.contains("status=success"), "{line}");
    let run_id = line.split_whitespace().next().unwrap();
    assert!(tmp.path().join(run_id).join(gamebench::runtime::rundir::RECORD_FILE).exists());

    let again = stdout(&bench(&["run", "--config", "snake+t01+oracle", "--out", runs]));
    assert_eq!(line, again, "same repeat, same run");

    let board = stdout(&bench(&["report", "--runs", runs]));
    assert!(board.contains("| oracle"), "{board}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 1);
    assert!(tmp.path().join("leaderboard.txt").exists());
}

#[test]
fn report_on_empty_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["report", "--runs", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn easy_suite_ranks_oracle_first() {
    let tmp = tempfile::tempdir().unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/suites/easy.yaml");
    let board = stdout(&bench(&[
        "suite",
        "--file",
        file.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let first = board.lines().find(|l| l.starts_with("| 1 ")).unwrap();
    assert!(first.contains("oracle"), "{board}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 12);
}

#[test]
fn serve_human_accepts_actions() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["serve", "--config", "g2048+t04+oracle", "--human", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let c = reqwest::blocking::Client::new();
    let deadline = Instant::now() + Duration::from_secs(20);
    let state = loop {
        match c.get(format!("{base}/state")).send() {
            Ok(r) => break r.json::<Value>().unwrap(),
            Err(_) if Instant::now() < deadline => sleep(Duration::from_millis(50)),
            Err(e) => {
                child.kill().ok();
                panic!("service never came up: {e}");
            }
        }
    };
    assert_eq!(state["gameId"], "g2048");
    let body: Value = c
        .post(format!("{base}/action"))
        .json(&json!({"type": "press_key", "key": "ArrowLeft"}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(body["steps_used"], 1);
    child.kill().unwrap();
    child.wait().unwrap();
}
