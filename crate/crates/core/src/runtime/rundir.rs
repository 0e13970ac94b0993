//! On-disk layout of one run: `config.resolved`, `trajectory.log`,
//! `frames/`, `run_record.json`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{RunConfig, TrajectoryEntry};
use crate::agent::AgentProfile;
use crate::canonical::to_canonical_string;
use crate::eval::{RunRecord, TaskSpec};
use crate::kernel::Observation;

pub const CONFIG_FILE: &str = "config.resolved";
pub const TRAJECTORY_FILE: &str = "trajectory.log";
pub const RECORD_FILE: &str = "run_record.json";
pub const FRAMES_DIR: &str = "frames";

pub struct RunDir {
    path: PathBuf,
    log: File,
}

/// Writes via a temporary file and a rename so readers never observe a
/// torn record.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl RunDir {
    pub fn create(
        path: &Path,
        cfg: &RunConfig,
        task: &TaskSpec,
        profile: &AgentProfile,
        initial: &RunRecord,
    ) -> io::Result<Self> {
        fs::create_dir_all(path)?;
        let resolved = json!({"run": cfg, "task": task, "profile": profile});
        write_atomic(&path.join(CONFIG_FILE), to_canonical_string(&resolved).as_bytes())?;
        write_atomic(&path.join(RECORD_FILE), to_canonical_string(initial).as_bytes())?;
        let log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path.join(TRAJECTORY_FILE))?;
        Ok(Self {
            path: path.to_path_buf(),
            log,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// One canonical document per line, flushed before returning.
    pub fn append(&mut self, entry: &TrajectoryEntry) -> io::Result<()> {
        let mut line = to_canonical_string(entry);
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.flush()
    }

    pub fn write_frame(&self, step: u32, obs: &Observation) -> io::Result<()> {
        let dir = self.path.join(FRAMES_DIR);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("step_{step:04}.ppm")), obs.frame.to_ppm())
    }

    pub fn write_record(&self, rec: &RunRecord) -> io::Result<()> {
        write_atomic(&self.path.join(RECORD_FILE), to_canonical_string(rec).as_bytes())
    }
}

pub fn read_record(dir: &Path) -> io::Result<RunRecord> {
    let text = fs::read_to_string(dir.join(RECORD_FILE))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Reads the parseable prefix of a trajectory log. A torn final line, as
/// left by an interrupted run, is dropped.
pub fn read_trajectory(dir: &Path) -> io::Result<Vec<TrajectoryEntry>> {
    let f = File::open(dir.join(TRAJECTORY_FILE))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        match serde_json::from_str(&line) {
            Ok(e) => out.push(e),
            Err(_) => break,
        }
    }
    Ok(out)
}

/// Every `run_record.json` below `root`, sorted by run id.
pub fn collect_records(root: &Path) -> io::Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == RECORD_FILE) {
                if let Some(parent) = p.parent() {
                    out.push(read_record(parent)?);
                }
            }
        }
    }
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}
