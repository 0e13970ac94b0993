use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gamebench::agent::build_agent;
use gamebench::registry::Registry;
use gamebench::report::{aggregate, emit_reports, render_leaderboard};
use gamebench::rng::mix;
use gamebench::runtime::rundir::collect_records;
use gamebench::runtime::service::{serve_session, SharedRun};
use gamebench::runtime::{parse_preset, run_task, Mode, RunConfig};
use gamebench::suite::{execute, expand_suite, SuitePlan};

#[derive(Parser)]
#[command(name = "bench", version, about = "Run and score game-playing agents")]
struct Cli {
    /// Load games, tasks and profiles from this directory instead of the
    /// bundled catalog.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One run of a `game+task+model` preset.
    Run {
        /// Preset such as `snake+t01+oracle`.
        #[arg(long = "config")]
        preset: String,
        /// paused or rt.
        #[arg(long, default_value = "paused")]
        mode: Mode,
        /// Repeat index; the game seed is mixed from the task seed.
        #[arg(long, default_value_t = 0)]
        repeat: u32,
        /// Explicit game seed, overriding the repeat mix.
        #[arg(long)]
        seed: Option<u64>,
        /// Parent directory for the run directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Write one P6 frame per step.
        #[arg(long)]
        frames: bool,
        /// Replace measured decision latency with a fixed value.
        #[arg(long)]
        latency_ms: Option<u64>,
        /// Override the profile's memory depth.
        #[arg(long)]
        memory_rounds: Option<u32>,
    },
    /// Expand a suite file and execute it.
    Suite {
        /// Suite YAML file.
        #[arg(long)]
        file: PathBuf,
        /// Overrides the file's max_parallel.
        #[arg(long)]
        max_parallel: Option<usize>,
        /// Overrides the file's repeats.
        #[arg(long)]
        repeats: Option<u32>,
        /// Overrides the file's mode (paused or rt).
        #[arg(long)]
        mode: Option<Mode>,
        /// Run directories and reports go here.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Aggregate every run record below a directory.
    Report {
        /// Directory searched recursively for run records.
        #[arg(long)]
        runs: PathBuf,
        /// Where to write summary.json and leaderboard.txt; defaults to
        /// the runs directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one session over HTTP.
    Serve {
        /// Preset such as `g2048+t01+oracle`.
        #[arg(long = "config")]
        preset: String,
        /// Wait for actions from POST /action instead of driving the
        /// profile's agent.
        #[arg(long)]
        human: bool,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long, default_value_t = 0)]
        repeat: u32,
        /// Persist the run directory under this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn registry(dir: Option<&Path>) -> Result<Registry> {
    match dir {
        Some(d) => Registry::load_dir(d).with_context(|| format!("loading registry from {}", d.display())),
        None => Ok(Registry::bundled()),
    }
}

fn run_config(reg: &Registry, preset: &str, repeat: u32, seed: Option<u64>) -> Result<RunConfig> {
    let p = parse_preset(preset, reg)?;
    let task = reg
        .task(&p.game_id, &p.task_id)
        .with_context(|| format!("unknown task {}", p.task_id))?;
    let seed = seed.unwrap_or_else(|| mix(task.seed, u64::from(repeat)));
    let mut cfg = RunConfig::new(p, seed);
    cfg.repeat = repeat;
    Ok(cfg)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let reg = registry(cli.registry.as_deref())?;
    match cli.cmd {
        Cmd::Run {
            preset,
            mode,
            repeat,
            seed,
            out,
            frames,
            latency_ms,
            memory_rounds,
        } => {
            let mut cfg = run_config(&reg, &preset, repeat, seed)?;
            cfg.mode = mode;
            cfg.log_frames = frames;
            cfg.injected_latency_ms = latency_ms;
            cfg.memory_rounds = memory_rounds;
            cfg.run_dir = Some(out.join(&cfg.run_id));
            let output = run_task(&reg, cfg)?;
            let r = &output.record;
            println!(
                "{} status={} progress={:.3} steps={} chain={}",
                r.run_id,
                r.status.as_str(),
                r.run_progress,
                r.steps_used,
                output.chain
            );
        }
        Cmd::Suite {
            file,
            max_parallel,
            repeats,
            mode,
            out,
        } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let mut plan = SuitePlan::parse(&text)?;
            if let Some(n) = max_parallel {
                plan.max_parallel = n;
            }
            if let Some(k) = repeats {
                plan.repeats = k;
            }
            if let Some(m) = mode {
                plan.mode = m;
            }
            let runs = expand_suite(&plan, &reg, Some(&out))?;
            eprintln!("{} runs, max_parallel={}", runs.len(), plan.max_parallel);
            let summary = execute(&reg, &runs, plan.max_parallel);
            for f in summary.failures() {
                eprintln!("failed: {}: {}", f.run_id, f.error.as_deref().unwrap_or("unknown"));
            }
            let report = aggregate(&summary.records());
            emit_reports(&report, &out)?;
            print!("{}", render_leaderboard(&report));
        }
        Cmd::Report { runs, out } => {
            let records = collect_records(&runs).with_context(|| format!("reading runs in {}", runs.display()))?;
            if records.is_empty() {
                bail!("no run records under {}", runs.display());
            }
            let report = aggregate(&records);
            emit_reports(&report, out.as_deref().unwrap_or(&runs))?;
            print!("{}", render_leaderboard(&report));
        }
        Cmd::Serve {
            preset,
            human,
            port,
            bind,
            repeat,
            out,
        } => {
            let mut cfg = run_config(&reg, &preset, repeat, None)?;
            cfg.port = port;
            cfg.run_dir = out.map(|o| o.join(&cfg.run_id));
            let shared = SharedRun::start(&reg, cfg)?;
            let handle = serve_session(shared.clone(), SocketAddr::new(bind, port))?;
            eprintln!("serving {} at {}", preset, handle.base_url());
            if human {
                handle.join();
            } else {
                let profile = shared.lock().profile.clone();
                let seed = shared.lock().cfg.seed;
                let mut agent = build_agent(&profile, seed)?;
                let output = shared.drive(agent.as_mut())?;
                println!(
                    "{} status={} progress={:.3}",
                    output.record.run_id,
                    output.record.status.as_str(),
                    output.record.run_progress
                );
                handle.join();
            }
        }
    }
    Ok(())
}
