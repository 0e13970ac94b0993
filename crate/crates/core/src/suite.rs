//! Suite expansion and bounded-parallel execution in repeat waves.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::RunRecord;
use crate::registry::{Registry, RegistryError};
use crate::rng::mix;
use crate::runtime::{run_task, Mode, Preset, RunConfig};

pub const DEFAULT_PORT_BASE: u16 = 18_000;
pub const DEFAULT_PORT_SPAN: u16 = 2_000;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite file: {0}")]
    Parse(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("max_parallel must be at least 1")]
    NoParallelism,
    #[error("port range {base}+{span} is empty or overflows")]
    BadPorts { base: u16, span: u16 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteCase {
    pub games: Vec<String>,
    pub tasks: Vec<String>,
    pub models: Vec<String>,
}

fn one() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}
fn port_base() -> u16 {
    DEFAULT_PORT_BASE
}
fn port_span() -> u16 {
    DEFAULT_PORT_SPAN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuitePlan {
    #[serde(default)]
    pub cases: Vec<SuiteCase>,
    #[serde(default = "one")]
    pub repeats: u32,
    #[serde(default = "one_usize")]
    pub max_parallel: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "port_base")]
    pub port_base: u16,
    #[serde(default = "port_span")]
    pub port_span: u16,
    #[serde(default)]
    pub log_frames: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_latency_ms: Option<u64>,
}

impl SuitePlan {
    pub fn parse(text: &str) -> Result<SuitePlan, SuiteError> {
        let de = serde_yaml::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| SuiteError::Parse(e.to_string()))
    }

    pub fn check(&self, reg: &Registry) -> Result<(), SuiteError> {
        if self.max_parallel == 0 {
            return Err(SuiteError::NoParallelism);
        }
        if self.port_span == 0 || self.port_base.checked_add(self.port_span - 1).is_none() {
            return Err(SuiteError::BadPorts {
                base: self.port_base,
                span: self.port_span,
            });
        }
        let unknown = |kind, id: &String| {
            SuiteError::Registry(RegistryError::Unknown {
                kind,
                id: id.clone(),
            })
        };
        for c in &self.cases {
            for g in &c.games {
                reg.game(g).ok_or_else(|| unknown("game", g))?;
                for t in &c.tasks {
                    reg.task(g, t).ok_or_else(|| unknown("task", t))?;
                }
            }
            for m in &c.models {
                reg.profile(m).ok_or_else(|| unknown("model", m))?;
            }
        }
        Ok(())
    }

    /// Number of runs the plan expands to.
    pub fn size(&self) -> usize {
        self.cases
            .iter()
            .map(|c| c.games.len() * c.tasks.len() * c.models.len())
            .sum::<usize>()
            * self.repeats as usize
    }
}

/// Enumerates runs in case, game, task, profile, repeat order. Each run gets
/// its own port from the configured range, a session id, and (with
/// `out_dir`) its own directory.
pub fn expand_suite(plan: &SuitePlan, reg: &Registry, out_dir: Option<&Path>) -> Result<Vec<RunConfig>, SuiteError> {
    plan.check(reg)?;
    let mut out = Vec::with_capacity(plan.size());
    for (ci, case) in plan.cases.iter().enumerate() {
        for g in &case.games {
            for t in &case.tasks {
                let task = reg.task(g, t).ok_or_else(|| RegistryError::Unknown {
                    kind: "task",
                    id: t.clone(),
                })?;
                for m in &case.models {
                    for r in 0..plan.repeats {
                        let run_id = format!("c{ci:02}__{g}__{t}__{m}__r{r:02}");
                        let preset = Preset {
                            game_id: g.clone(),
                            task_id: t.clone(),
                            model_spec: m.clone(),
                        };
                        let mut cfg = RunConfig::new(preset, mix(task.seed, u64::from(r)));
                        cfg.port = plan.port_base + (out.len() % plan.port_span as usize) as u16;
                        cfg.session_id = format!("{run_id}@{}", cfg.port);
                        cfg.run_dir = out_dir.map(|d| d.join(&run_id));
                        cfg.run_id = run_id;
                        cfg.mode = plan.mode;
                        cfg.repeat = r;
                        cfg.log_frames = plan.log_frames;
                        cfg.injected_latency_ms = plan.injected_latency_ms;
                        out.push(cfg);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Groups expanded runs into waves; wave `k` holds every run's `k`-th repeat.
pub fn waves(runs: &[RunConfig]) -> Vec<Vec<&RunConfig>> {
    let n = runs.iter().map(|r| r.repeat + 1).max().unwrap_or(0);
    (0..n)
        .map(|k| runs.iter().filter(|r| r.repeat == k).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub repeat: u32,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
    /// Milliseconds since the suite started.
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSummary {
    pub results: Vec<RunResult>,
    pub peak_concurrency: usize,
}

impl ExecutionSummary {
    pub fn records(&self) -> Vec<RunRecord> {
        self.results.iter().filter_map(|r| r.record.clone()).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.results.iter().filter(|r| r.record.is_none())
    }
}

/// Runs every wave to completion before starting the next; within a wave
/// at most `max_parallel` runs execute at once. A run that errors or panics
/// is recorded and never affects its siblings. Results keep the expansion
/// order.
pub fn execute_with<F>(runs: &[RunConfig], max_parallel: usize, runner: F) -> ExecutionSummary
where
    F: Fn(&RunConfig) -> Result<RunRecord, String> + Sync,
{
    let start = Instant::now();
    let active = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<RunResult>>> = runs.iter().map(|_| Mutex::new(None)).collect();
    let index_of = |cfg: &RunConfig| runs.iter().position(|r| std::ptr::eq(r, cfg)).unwrap_or(0);
    for wave in waves(runs) {
        let next = AtomicUsize::new(0);
        let workers = max_parallel.max(1).min(wave.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(cfg) = wave.get(i) else { break };
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let started_ms = start.elapsed().as_millis() as u64;
                    let outcome = catch_unwind(AssertUnwindSafe(|| runner(cfg)))
                        .unwrap_or_else(|p| Err(panic_message(p.as_ref())));
                    active.fetch_sub(1, Ordering::SeqCst);
                    let finished_ms = start.elapsed().as_millis() as u64;
                    let (record, error) = match outcome {
                        Ok(r) => (Some(r), None),
                        Err(e) => {
                            tracing::error!(run = %cfg.run_id, error = %e, "run failed");
                            (None, Some(e))
                        }
                    };
                    *slots[index_of(cfg)].lock().unwrap_or_else(|p| p.into_inner()) = Some(RunResult {
                        run_id: cfg.run_id.clone(),
                        repeat: cfg.repeat,
                        record,
                        error,
                        started_ms,
                        finished_ms,
                    });
                });
            }
        });
    }
    ExecutionSummary {
        results: slots
            .into_iter()
            .filter_map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()))
            .collect(),
        peak_concurrency: peak.load(Ordering::SeqCst),
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("run panicked: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("run panicked: {s}")
    } else {
        "run panicked".into()
    }
}

/// Executes the plan's runs with the standard coordinator.
pub fn execute(reg: &Registry, runs: &[RunConfig], max_parallel: usize) -> ExecutionSummary {
    execute_with(runs, max_parallel, |cfg| {
        run_task(reg, cfg.clone()).map(|o| o.record).map_err(|e| e.to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(games: &[&str], tasks: &[&str], models: &[&str], repeats: u32) -> SuitePlan {
        SuitePlan {
            cases: vec![SuiteCase {
                games: games.iter().map(|s| s.to_string()).collect(),
                tasks: tasks.iter().map(|s| s.to_string()).collect(),
                models: models.iter().map(|s| s.to_string()).collect(),
            }],
            repeats,
            max_parallel: 4,
            mode: Mode::Paused,
            port_base: DEFAULT_PORT_BASE,
            port_span: DEFAULT_PORT_SPAN,
            log_frames: false,
            injected_latency_ms: None,
        }
    }

    #[test]
    fn expansion_product_and_waves() {
        let reg = Registry::bundled();
        let p = plan(&["g2048", "snake"], &["t01", "t02", "t03", "t04", "t05"], &["random"], 10);
        let runs = expand_suite(&p, &reg, None).unwrap();
        assert_eq!(runs.len(), 100);
        let w = waves(&runs);
        assert_eq!(w.len(), 10);
        assert!(w.iter().enumerate().all(|(k, wave)| wave.len() == 10 && wave.iter().all(|r| r.repeat == k as u32)));
        let ports: std::collections::BTreeSet<u16> = runs.iter().map(|r| r.port).collect();
        assert_eq!(ports.len(), 100);
        assert!(expand_suite(&SuitePlan { cases: vec![], ..p }, &reg, None).unwrap().is_empty());
    }

    #[test]
    fn repeat_seed_is_mixed_from_task_seed() {
        let reg = Registry::bundled();
        let runs = expand_suite(&plan(&["snake"], &["t01"], &["oracle"], 3), &reg, None).unwrap();
        let seed = reg.task("snake", "t01").unwrap().seed;
        for r in &runs {
            assert_eq!(r.seed, mix(seed, u64::from(r.repeat)));
        }
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let reg = Registry::bundled();
        assert!(expand_suite(&plan(&["pong"], &["t01"], &["oracle"], 1), &reg, None).is_err());
        assert!(expand_suite(&plan(&["snake"], &["t01"], &["nobody"], 1), &reg, None).is_err());
    }

    #[test]
    fn suite_files_parse() {
        for (name, text) in crate::registry::BUNDLED_SUITES {
            let p = SuitePlan::parse(text).unwrap();
            p.check(&Registry::bundled()).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
