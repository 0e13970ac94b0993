//! Aggregation of persisted run records into leaderboards.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical_string;
use crate::control::ValidityCounters;
use crate::eval::{aggregate_metrics, compute_iar, mean, std_dev, Aggregate, RunRecord, RunStatus};
use crate::kernel::Genre;

pub const SUMMARY_FILE: &str = "summary.json";
pub const LEADERBOARD_FILE: &str = "leaderboard.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrPg {
    pub sr: f64,
    pub pg: f64,
    pub n: usize,
}

impl From<Aggregate> for SrPg {
    fn from(a: Aggregate) -> Self {
        SrPg {
            sr: a.sr,
            pg: a.pg,
            n: a.n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatStat {
    pub repeat: u32,
    pub sr: f64,
    pub pg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        MeanStd {
            mean: mean(xs).unwrap_or(0.0),
            std: std_dev(xs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub counters: ValidityCounters,
    pub iar: Option<f64>,
    pub ntc_rate: Option<f64>,
    pub oos_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub rank: usize,
    pub profile_id: String,
    pub overall: SrPg,
    /// Keyed by genre name; genres without runs are absent.
    pub genres: BTreeMap<String, SrPg>,
    pub games: BTreeMap<String, SrPg>,
    pub levels: BTreeMap<String, SrPg>,
    pub repeats: Vec<RepeatStat>,
    pub repeat_sr: MeanStd,
    pub repeat_pg: MeanStd,
    pub validity: Validity,
    pub mean_input_tokens: f64,
    pub sec_per_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: usize,
    /// Records left out of every aggregate: aborted or never finished.
    pub excluded: Vec<String>,
    pub profiles: Vec<ProfileSummary>,
}

fn finished(r: &RunRecord) -> bool {
    r.status.is_finished() && r.status != RunStatus::Aborted
}

fn srpg<'a>(rs: impl IntoIterator<Item = &'a RunRecord>) -> Option<SrPg> {
    aggregate_metrics(rs).ok().map(SrPg::from)
}

fn group<'a, K: Ord>(rs: &[&'a RunRecord], key: impl Fn(&RunRecord) -> K) -> BTreeMap<K, Vec<&'a RunRecord>> {
    let mut m: BTreeMap<K, Vec<&RunRecord>> = BTreeMap::new();
    for r in rs {
        m.entry(key(r)).or_default().push(r);
    }
    m
}

fn flat<T: Copy>(rs: &[&RunRecord], f: impl Fn(&RunRecord) -> &[T]) -> Vec<T> {
    rs.iter().flat_map(|r| f(r).iter().copied()).collect()
}

fn summarize(profile_id: &str, rs: &[&RunRecord]) -> ProfileSummary {
    let overall = srpg(rs.iter().copied()).unwrap_or(SrPg { sr: 0.0, pg: 0.0, n: 0 });
    let by = |f: &dyn Fn(&RunRecord) -> String| -> BTreeMap<String, SrPg> {
        group(rs, f)
            .into_iter()
            .filter_map(|(k, v)| srpg(v).map(|a| (k, a)))
            .collect()
    };
    let genres = by(&|r| r.genre.as_str().to_string());
    let games = by(&|r| r.game_id.clone());
    let levels = by(&|r| format!("{:02}", r.curriculum_level));
    let repeats: Vec<RepeatStat> = group(rs, |r| r.repeat)
        .into_iter()
        .filter_map(|(repeat, v)| srpg(v).map(|a| RepeatStat { repeat, sr: a.sr, pg: a.pg }))
        .collect();
    let repeat_sr = MeanStd::of(&repeats.iter().map(|r| r.sr).collect::<Vec<_>>());
    let repeat_pg = MeanStd::of(&repeats.iter().map(|r| r.pg).collect::<Vec<_>>());
    let mut counters = ValidityCounters::default();
    for r in rs {
        counters.proposed += r.validity.proposed;
        counters.valid += r.validity.valid;
        counters.ntc += r.validity.ntc;
        counters.oos += r.validity.oos;
    }
    let rates = compute_iar(&counters).ok();
    let tokens: Vec<f64> = flat(rs, |r| &r.input_tokens).into_iter().map(|t| t as f64).collect();
    let secs = flat(rs, |r| &r.step_seconds);
    ProfileSummary {
        rank: 0,
        profile_id: profile_id.to_string(),
        overall,
        genres,
        games,
        levels,
        repeats,
        repeat_sr,
        repeat_pg,
        validity: Validity {
            counters,
            iar: rates.map(|r| r.iar),
            ntc_rate: rates.map(|r| r.ntc_rate),
            oos_rate: rates.map(|r| r.oos_rate),
        },
        mean_input_tokens: mean(&tokens).unwrap_or(0.0),
        sec_per_step: mean(&secs).unwrap_or(0.0),
    }
}

/// Builds the report. Input order does not matter; records are processed
/// in run-id order so sums are reproducible.
pub fn aggregate(records: &[RunRecord]) -> Report {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let excluded = sorted.iter().filter(|r| !finished(r)).map(|r| r.run_id.clone()).collect();
    let kept: Vec<&RunRecord> = sorted.into_iter().filter(|r| finished(r)).collect();
    let mut profiles: Vec<ProfileSummary> = group(&kept, |r| r.profile_id.clone())
        .iter()
        .map(|(id, rs)| summarize(id, rs))
        .collect();
    profiles.sort_by(|a, b| {
        b.overall
            .pg
            .total_cmp(&a.overall.pg)
            .then(b.overall.sr.total_cmp(&a.overall.sr))
            .then(a.profile_id.cmp(&b.profile_id))
    });
    for (i, p) in profiles.iter_mut().enumerate() {
        p.rank = i + 1;
    }
    Report {
        runs: records.len(),
        excluded,
        profiles,
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Fixed-width table: rank, model, SR/PG per genre, overall SR/PG.
pub fn render_leaderboard(report: &Report) -> String {
    let mut header = vec!["Rank".to_string(), "Model".to_string()];
    for g in Genre::ALL {
        header.push(format!("{g} SR"));
        header.push(format!("{g} PG"));
    }
    header.push("Overall SR".into());
    header.push("Overall PG".into());
    let mut rows = vec![header];
    for p in &report.profiles {
        let mut row = vec![p.rank.to_string(), p.profile_id.clone()];
        for g in Genre::ALL {
            match p.genres.get(g.as_str()) {
                Some(a) => {
                    row.push(pct(a.sr));
                    row.push(pct(a.pg));
                }
                None => {
                    row.push("-".into());
                    row.push("-".into());
                }
            }
        }
        row.push(pct(p.overall.sr));
        row.push(pct(p.overall.pg));
        rows.push(row);
    }
    let mut out = table(&rows);
    out.push('\n');
    for p in &report.profiles {
        let _ = writeln!(
            out,
            "{}: repeats={} SR {} ± {} PG {} ± {} IAR {}",
            p.profile_id,
            p.repeats.len(),
            pct(p.repeat_sr.mean),
            pct(p.repeat_sr.std),
            pct(p.repeat_pg.mean),
            pct(p.repeat_pg.std),
            p.validity.iar.map_or("-".into(), pct),
        );
    }
    if !report.excluded.is_empty() {
        let _ = writeln!(out, "excluded: {}", report.excluded.join(", "));
    }
    out
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "| {} |", rule.join(" | "));
        }
    }
    out
}

pub fn render_summary(report: &Report) -> String {
    to_canonical_string(report)
}

/// Writes `summary.json` and `leaderboard.txt` into `dir`.
pub fn emit_reports(report: &Report, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SUMMARY_FILE), render_summary(report))?;
    std::fs::write(dir.join(LEADERBOARD_FILE), render_leaderboard(report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryRow {
    pub memory_rounds: u32,
    pub model: String,
    pub input_tokens: f64,
    pub sec_per_step: f64,
    pub pg: f64,
}

/// One row per (memory rounds, model) group of records.
pub fn memory_rows(groups: &[(u32, Vec<RunRecord>)]) -> Vec<MemoryRow> {
    let mut out = Vec::new();
    for (rounds, records) in groups {
        for p in aggregate(records).profiles {
            out.push(MemoryRow {
                memory_rounds: *rounds,
                model: p.profile_id,
                input_tokens: p.mean_input_tokens,
                sec_per_step: p.sec_per_step,
                pg: p.overall.pg,
            });
        }
    }
    out.sort_by(|a, b| a.memory_rounds.cmp(&b.memory_rounds).then(a.model.cmp(&b.model)));
    out
}

pub fn render_memory_table(rows: &[MemoryRow]) -> String {
    let mut t = vec![vec![
        "Memory Rounds".to_string(),
        "Model".into(),
        "Input Tokens".into(),
        "sec/step".into(),
        "PG".into(),
    ]];
    for r in rows {
        t.push(vec![
            r.memory_rounds.to_string(),
            r.model.clone(),
            format!("{:.0}", r.input_tokens),
            format!("{:.2}", r.sec_per_step),
            pct(r.pg),
        ]);
    }
    table(&t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, profile: &str, genre: Genre, repeat: u32, status: RunStatus, progress: f64) -> RunRecord {
        let mut task = crate::eval::tests::task(0.0, 1.0, 10, false);
        task.genre = genre;
        let mut r = RunRecord::new(id, &task, profile, 0);
        r.repeat = repeat;
        r.status = status;
        r.run_progress = progress;
        r
    }

    #[test]
    fn ranking_and_exclusions() {
        let rs = vec![
            rec("b1", "b", Genre::Puzzle, 0, RunStatus::Success, 1.0),
            rec("a1", "a", Genre::Puzzle, 0, RunStatus::Fail, 0.5),
            rec("a2", "a", Genre::Arcade, 1, RunStatus::Success, 1.0),
            rec("c1", "c", Genre::Puzzle, 0, RunStatus::Running, 0.9),
            rec("c2", "c", Genre::Puzzle, 0, RunStatus::Aborted, 0.9),
        ];
        let rep = aggregate(&rs);
        assert_eq!(rep.excluded, vec!["c1", "c2"]);
        let ids: Vec<&str> = rep.profiles.iter().map(|p| p.profile_id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        let a = &rep.profiles[1];
        assert_eq!(a.overall.pg, 0.75);
        assert_eq!(a.repeats.len(), 2);
        assert_eq!(a.repeat_pg.mean, 0.75);
        let mut shuffled = rs.clone();
        shuffled.reverse();
        assert_eq!(render_summary(&aggregate(&shuffled)), render_summary(&rep));
        assert!(render_leaderboard(&rep).contains("| 2    | a "));
    }

    #[test]
    fn ties_break_on_sr_then_id() {
        let rs = vec![
            rec("x", "zeta", Genre::Runner, 0, RunStatus::Success, 0.5),
            rec("y", "alpha", Genre::Runner, 0, RunStatus::Fail, 0.5),
            rec("z", "beta", Genre::Runner, 0, RunStatus::Fail, 0.5),
        ];
        let ids: Vec<String> = aggregate(&rs).profiles.into_iter().map(|p| p.profile_id).collect();
        assert_eq!(ids, ["zeta", "alpha", "beta"]);
    }

    #[test]
    fn memory_table_header() {
        let t = render_memory_table(&[]);
        assert!(t.starts_with("| Memory Rounds | Model | Input Tokens | sec/step | PG |"), "{t}");
    }
}
