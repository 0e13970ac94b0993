use std::fs;
use std::io::Write;

use serde_json::Value;

use gamebench::canonical::canonical_value_string;
use gamebench::control::NormalizedAction;
use gamebench::eval::RunStatus;
use gamebench::registry::Registry;
use gamebench::report::aggregate;
use gamebench::runtime::rundir::{
    collect_records, read_record, read_trajectory, CONFIG_FILE, FRAMES_DIR, RECORD_FILE, TRAJECTORY_FILE,
};
use gamebench::runtime::{run_task, split_preset, RunConfig, RunState, StepInput};

#[test]
fn finished_run_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("snake-run");
    let mut cfg = RunConfig::new(split_preset("snake+t01+oracle").unwrap(), 17);
    cfg.run_dir = Some(dir.clone());
    cfg.log_frames = true;
    let out = run_task(&Registry::bundled(), cfg).unwrap();
    let steps = out.record.steps_used as usize;

    let resolved: Value = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE)).unwrap()).unwrap();
    assert_eq!(resolved["run"]["seed"], 17);
    assert_eq!(resolved["task"]["task_id"], "t01");
    assert_eq!(resolved["profile"]["agent_id"], "oracle");

    let log = fs::read_to_string(dir.join(TRAJECTORY_FILE)).unwrap();
    assert_eq!(log.lines().count(), steps);
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(canonical_value_string(&v), line, "trajectory lines are canonical");
    }
    let entries = read_trajectory(&dir).unwrap();
    assert_eq!(entries.last().unwrap().chain, out.chain);
    assert_eq!(fs::read_dir(dir.join(FRAMES_DIR)).unwrap().count(), steps);

    let rec = read_record(&dir).unwrap();
    assert_eq!(rec, out.record);
    assert_eq!(rec.status, RunStatus::Success);
}

#[test]
fn interrupted_run_leaves_prefix_and_running_record() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cut");
    let mut cfg = RunConfig::new(split_preset("g2048+t04+oracle").unwrap(), 3);
    cfg.run_dir = Some(dir.clone());
    let mut state = RunState::start(&Registry::bundled(), cfg).unwrap();
    for k in ["ArrowDown", "ArrowLeft", "ArrowDown"] {
        let (_, obs) = state.observe();
        let a = NormalizedAction::PressKey {
            key: k.into(),
            duration_ms: None,
        };
        state.apply(&obs, StepInput::Direct(a)).unwrap();
    }
    let chain = state.chain().to_string();
    // Simulate a crash in the middle of writing the fourth line.
    drop(state);
    let mut f = fs::OpenOptions::new().append(true).open(dir.join(TRAJECTORY_FILE)).unwrap();
    f.write_all(br#"{"action":{"key":"Arr"#).unwrap();

    let entries = read_trajectory(&dir).unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[2].chain, chain);
    assert_eq!(entries.iter().map(|e| e.step).collect::<Vec<_>>(), [1, 2, 3]);
    let rec = read_record(&dir).unwrap();
    assert_eq!(rec.status, RunStatus::Running);
    assert!(dir.join(RECORD_FILE).exists());

    let report = aggregate(&collect_records(tmp.path()).unwrap());
    assert!(report.profiles.is_empty());
    assert_eq!(report.excluded, [rec.run_id]);
}
