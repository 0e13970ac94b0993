//! The verifiable game-state contract: every environment tick yields a
//! [`StateSnapshot`], and the evaluator reads task scores out of it through a
//! [`ScoreResolver`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::{self, MAX_EXACT_INT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnapshotError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("schema violation at `{field}`: {message}")]
    SchemaViolation { field: String, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invalid score resolver: {0}")]
    InvalidResolver(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleStatus {
    Loading,
    Menu,
    Ready,
    Playing,
    Paused,
    Terminal,
}

impl LifecycleStatus {
    pub const ALL: [LifecycleStatus; 6] = [
        LifecycleStatus::Loading,
        LifecycleStatus::Menu,
        LifecycleStatus::Ready,
        LifecycleStatus::Playing,
        LifecycleStatus::Paused,
        LifecycleStatus::Terminal,
    ];

    /// Statuses the readiness gate treats as safe for agent control.
    pub fn is_actionable(self) -> bool {
        matches!(self, LifecycleStatus::Ready | LifecycleStatus::Playing)
    }

    /// Edges of the lifecycle graph. Resets (terminal or any status back to
    /// loading) are modelled separately by [`LifecycleStatus::can_reset_to`].
    pub fn can_transition_to(self, next: LifecycleStatus) -> bool {
        use LifecycleStatus::*;
        matches!(
            (self, next),
            (Loading, Menu)
                | (Loading, Ready)
                | (Menu, Ready)
                | (Ready, Playing)
                | (Playing, Paused)
                | (Paused, Playing)
                | (Playing, Terminal)
                | (Terminal, Ready)
                | (Terminal, Playing)
        )
    }

    /// A reset always lands in `loading` (and then walks the normal graph) or
    /// directly in `ready`/`playing`.
    pub fn can_reset_to(next: LifecycleStatus) -> bool {
        matches!(
            next,
            LifecycleStatus::Loading | LifecycleStatus::Ready | LifecycleStatus::Playing
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleStatus::Loading => "loading",
            LifecycleStatus::Menu => "menu",
            LifecycleStatus::Ready => "ready",
            LifecycleStatus::Playing => "playing",
            LifecycleStatus::Paused => "paused",
            LifecycleStatus::Terminal => "terminal",
        }
    }
}

impl fmt::Display for LifecycleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalOutcome {
    Win,
    Lose,
    Timeout,
}

impl TerminalOutcome {
    pub fn is_failure(self) -> bool {
        !matches!(self, TerminalOutcome::Win)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalInfo {
    #[serde(rename = "isTerminal")]
    pub is_terminal: bool,
    #[serde(default)]
    pub outcome: Option<TerminalOutcome>,
    #[serde(default)]
    pub reason: Option<String>,
}

impl TerminalInfo {
    pub fn running() -> Self {
        Self::default()
    }

    pub fn ended(outcome: TerminalOutcome, reason: impl Into<String>) -> Self {
        Self {
            is_terminal: true,
            outcome: Some(outcome),
            reason: Some(reason.into()),
        }
    }
}

/// Structured in-game state. `progress` is the game's own diagnostic notion
/// of progress and is never used for task scoring.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameState {
    pub score: f64,
    pub level: String,
    #[serde(default)]
    pub progress: Option<f64>,
    #[serde(default)]
    pub player: Option<Map<String, Value>>,
    #[serde(default)]
    pub board: Option<Value>,
    #[serde(default)]
    pub entities: Option<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    #[serde(rename = "gameId")]
    pub game_id: String,
    pub seed: u64,
    #[serde(rename = "timestampMs")]
    pub timestamp_ms: u64,
    #[serde(rename = "gameTimeMs")]
    pub game_time_ms: u64,
    pub status: LifecycleStatus,
    pub terminal: TerminalInfo,
    pub game_state: GameState,
    pub metrics: BTreeMap<String, f64>,
    pub raw: Map<String, Value>,
}

pub const TOP_LEVEL_KEYS: [&str; 9] = [
    "gameId",
    "seed",
    "timestampMs",
    "gameTimeMs",
    "status",
    "terminal",
    "game_state",
    "metrics",
    "raw",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Every invariant breach found in a snapshot; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }
}

fn exact_number(x: f64) -> bool {
    x.is_finite() && x.abs() <= MAX_EXACT_INT
}

pub fn validate_snapshot(s: &StateSnapshot) -> ValidationReport {
    let mut report = ValidationReport::default();
    if s.game_id.is_empty() {
        report.push("gameId", "must be non-empty");
    }
    let terminal_status = s.status == LifecycleStatus::Terminal;
    if terminal_status != s.terminal.is_terminal {
        report.push(
            "terminal.isTerminal",
            format!(
                "isTerminal={} disagrees with status={}",
                s.terminal.is_terminal, s.status
            ),
        );
    }
    if !s.terminal.is_terminal {
        if s.terminal.outcome.is_some() {
            report.push("terminal.outcome", "must be null while not terminal");
        }
        if s.terminal.reason.is_some() {
            report.push("terminal.reason", "must be null while not terminal");
        }
    }
    if !exact_number(s.game_state.score) {
        report.push("game_state.score", "must be a finite, exactly representable number");
    }
    if let Some(p) = s.game_state.progress {
        if !(0.0..=1.0).contains(&p) {
            report.push("game_state.progress", format!("{p} outside [0,1]"));
        }
    }
    for (name, value) in &s.metrics {
        if !value.is_finite() {
            report.push(&format!("metrics.{name}"), "must be finite");
        }
    }
    report
}

/// Canonical text form: sorted keys, no whitespace.
pub fn serialize_snapshot(s: &StateSnapshot) -> String {
    canonical::to_canonical_string(s)
}

pub fn deserialize_snapshot(doc: &str) -> Result<StateSnapshot, SnapshotError> {
    let value: Value =
        serde_json::from_str(doc).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(SnapshotError::SchemaViolation {
            field: "$".into(),
            message: "document must be an object".into(),
        });
    };
    for key in TOP_LEVEL_KEYS {
        if !map.contains_key(key) {
            return Err(SnapshotError::SchemaViolation {
                field: key.into(),
                message: "required key is missing".into(),
            });
        }
    }
    if let Some(extra) = map.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(SnapshotError::SchemaViolation {
            field: extra.clone(),
            message: "unknown top-level key".into(),
        });
    }
    let snapshot: StateSnapshot = serde_path_to_error::deserialize(value).map_err(|e| {
        SnapshotError::SchemaViolation {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        }
    })?;
    let report = validate_snapshot(&snapshot);
    if let Some(v) = report.violations.into_iter().next() {
        return Err(SnapshotError::SchemaViolation {
            field: v.field,
            message: v.message,
        });
    }
    Ok(snapshot)
}

fn lookup<'a>(mut value: &'a Value, segments: &[&str]) -> Option<&'a Value> {
    for seg in segments {
        value = match value {
            Value::Object(m) => m.get(*seg)?,
            Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(value)
}

impl StateSnapshot {
    /// Resolves a dotted path. Explicit prefixes (`game_state.`, `metrics.`,
    /// `raw.`, or any other top-level key) are honoured first; bare paths are
    /// looked up in `game_state`, then `metrics`, then `raw`.
    pub fn field(&self, path: &str) -> Option<Value> {
        let segments: Vec<&str> = path.split('.').collect();
        if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
            return None;
        }
        let doc = serde_json::to_value(self).ok()?;
        if TOP_LEVEL_KEYS.contains(&segments[0]) {
            return lookup(&doc, &segments).filter(|v| !v.is_null()).cloned();
        }
        for section in ["game_state", "metrics", "raw"] {
            if let Some(v) = doc.get(section).and_then(|s| lookup(s, &segments)) {
                if !v.is_null() {
                    return Some(v.clone());
                }
            }
        }
        None
    }

    pub fn numeric_field(&self, path: &str) -> Result<f64, SnapshotError> {
        self.field(path)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| SnapshotError::MissingField(path.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Scalar,
    Aggregate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreResolver {
    pub mode: ScoreMode,
    pub fields: Vec<String>,
}

impl ScoreResolver {
    pub fn scalar(path: impl Into<String>) -> Self {
        Self {
            mode: ScoreMode::Scalar,
            fields: vec![path.into()],
        }
    }

    pub fn aggregate<I, S>(paths: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            mode: ScoreMode::Aggregate,
            fields: paths.into_iter().map(Into::into).collect(),
        }
    }

    pub fn check(&self) -> Result<(), SnapshotError> {
        match self.mode {
            ScoreMode::Scalar if self.fields.len() != 1 => Err(SnapshotError::InvalidResolver(
                format!("scalar mode needs exactly one path, got {}", self.fields.len()),
            )),
            ScoreMode::Aggregate if self.fields.is_empty() => Err(
                SnapshotError::InvalidResolver("aggregate mode needs at least one path".into()),
            ),
            _ => Ok(()),
        }
    }
}

pub fn resolve_task_score(s: &StateSnapshot, r: &ScoreResolver) -> Result<f64, SnapshotError> {
    r.check()?;
    match r.mode {
        ScoreMode::Scalar => s.numeric_field(&r.fields[0]),
        ScoreMode::Aggregate => r
            .fields
            .iter()
            .try_fold(0.0, |acc, path| Ok(acc + s.numeric_field(path)?)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Eq,
    Ne,
    Ge,
    Le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleValue {
    Number(f64),
    Text(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleEffect {
    StopSuccess,
    StopFail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndFieldRule {
    pub path: String,
    pub comparator: Comparator,
    pub value: RuleValue,
    pub effect: RuleEffect,
}

impl EndFieldRule {
    pub fn fires(&self, s: &StateSnapshot) -> Result<bool, SnapshotError> {
        let field = s
            .field(&self.path)
            .ok_or_else(|| SnapshotError::MissingField(self.path.clone()))?;
        let ord = match (&self.value, field.as_f64()) {
            (RuleValue::Number(want), Some(have)) => have.partial_cmp(want),
            (RuleValue::Number(want), None) => {
                let text = value_text(&field);
                text.parse::<f64>().ok().and_then(|h| h.partial_cmp(want))
            }
            (RuleValue::Text(want), _) => Some(value_text(&field).as_str().cmp(want.as_str())),
        };
        let Some(ord) = ord else { return Ok(false) };
        Ok(match self.comparator {
            Comparator::Eq => ord.is_eq(),
            Comparator::Ne => !ord.is_eq(),
            Comparator::Ge => ord.is_ge(),
            Comparator::Le => ord.is_le(),
        })
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) const MARIO_DOC: &str = r#"{
        "gameId": "17_mario-game",
        "seed": 42,
        "timestampMs": 1760001234567,
        "gameTimeMs": 18420,
        "status": "playing",
        "terminal": {"isTerminal": false, "outcome": null, "reason": null},
        "game_state": {
            "score": 3200, "level": "1-1", "progress": 0.37,
            "player": {"x": 128, "y": 80, "vx": 0, "vy": 0, "power": 1, "alive": true, "name": "Mario"},
            "board": null, "entities": null
        },
        "metrics": {"lives": 3, "coins": 8, "distance": 3200, "attempts": 1,
                    "time_left_s": 999, "enemies_alive": 5, "level_progress_percent": 42},
        "raw": {"world": 1, "stage": 1, "levelId": "1-1", "worldDisplay": "1-1", "coins": 8,
                "coinsCollected": 8, "lives": 3, "timeLeft": 999, "mapTime": 999, "paused": false,
                "playerPower": 1, "playerName": "Mario", "levelProgress": 0.37,
                "levelProgressPercent": 37}
    }"#;

    pub(crate) fn mario() -> StateSnapshot {
        deserialize_snapshot(MARIO_DOC).unwrap()
    }

    fn minimal() -> StateSnapshot {
        StateSnapshot {
            game_id: "g".into(),
            seed: 0,
            timestamp_ms: 0,
            game_time_ms: 0,
            status: LifecycleStatus::Loading,
            terminal: TerminalInfo::running(),
            game_state: GameState::default(),
            metrics: BTreeMap::new(),
            raw: Map::new(),
        }
    }

    #[test]
    fn reference_snapshot_parses_and_validates() {
        let s = mario();
        assert_eq!(s.game_id, "17_mario-game");
        assert_eq!(s.seed, 42);
        assert!(validate_snapshot(&s).is_valid());
    }

    #[test]
    fn serialized_example_keeps_values() {
        let doc = serialize_snapshot(&mario());
        assert!(doc.contains(r#""score":3200"#));
        assert!(doc.contains(r#""progress":0.37"#));
        assert!(doc.contains(r#""lives":3"#));
        assert!(doc.contains(r#""coins":8"#));
        assert!(doc.starts_with(r#"{"gameId":"17_mario-game","gameTimeMs":18420,"game_state":"#));
    }

    #[test]
    fn minimal_snapshot_serializes_not_terminal() {
        let doc = serialize_snapshot(&minimal());
        assert!(doc.contains(r#""isTerminal":false"#));
        assert_eq!(deserialize_snapshot(&doc).unwrap(), minimal());
    }

    #[test]
    fn outcome_without_terminal_is_schema_violation() {
        let doc = MARIO_DOC.replace(r#""outcome": null"#, r#""outcome": "win""#);
        match deserialize_snapshot(&doc) {
            Err(SnapshotError::SchemaViolation { field, .. }) => assert_eq!(field, "terminal.outcome"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_document_is_malformed() {
        let doc = &MARIO_DOC[..MARIO_DOC.len() / 2];
        assert!(matches!(deserialize_snapshot(doc), Err(SnapshotError::Malformed(_))));
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let doc = MARIO_DOC.replacen('{', r#"{"extra": 1,"#, 1);
        assert!(matches!(
            deserialize_snapshot(&doc),
            Err(SnapshotError::SchemaViolation { field, .. }) if field == "extra"
        ));
    }

    #[test]
    fn type_errors_name_the_field() {
        let doc = MARIO_DOC.replace(r#""seed": 42"#, r#""seed": "x""#);
        assert!(matches!(
            deserialize_snapshot(&doc),
            Err(SnapshotError::SchemaViolation { field, .. }) if field == "seed"
        ));
    }

    #[test]
    fn validation_catches_each_breach() {
        let mut s = mario();
        s.status = LifecycleStatus::Terminal;
        assert_eq!(validate_snapshot(&s).violations.len(), 1);

        let mut s = mario();
        s.game_state.progress = Some(1.2);
        let report = validate_snapshot(&s);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "game_state.progress");
    }

    #[test]
    fn raw_unknown_keys_survive_round_trip() {
        let mut s = mario();
        s.raw.insert("weird.key".into(), json!({"nested": [1, "two"]}));
        let back = deserialize_snapshot(&serialize_snapshot(&s)).unwrap();
        assert_eq!(back.raw["weird.key"], json!({"nested": [1, "two"]}));
    }

    #[test]
    fn scalar_and_aggregate_resolution() {
        let s = mario();
        assert_eq!(resolve_task_score(&s, &ScoreResolver::scalar("game_state.score")), Ok(3200.0));
        let agg = ScoreResolver::aggregate(["metrics.coins", "metrics.distance"]);
        assert_eq!(resolve_task_score(&s, &agg), Ok(3208.0));
        let missing = ScoreResolver::aggregate(["metrics.coins", "game_state.board"]);
        assert_eq!(
            resolve_task_score(&s, &missing),
            Err(SnapshotError::MissingField("game_state.board".into()))
        );
    }

    #[test]
    fn bare_paths_prefer_game_state_then_metrics_then_raw() {
        let s = mario();
        assert_eq!(s.numeric_field("score").unwrap(), 3200.0);
        assert_eq!(s.numeric_field("lives").unwrap(), 3.0);
        assert_eq!(s.numeric_field("world").unwrap(), 1.0);
        assert_eq!(s.numeric_field("player.x").unwrap(), 128.0);
        assert!(s.numeric_field("nope").is_err());
    }

    #[test]
    fn resolver_shape_checked() {
        let bad = ScoreResolver {
            mode: ScoreMode::Scalar,
            fields: vec!["a".into(), "b".into()],
        };
        assert!(matches!(bad.check(), Err(SnapshotError::InvalidResolver(_))));
        assert!(ScoreResolver::aggregate(Vec::<String>::new()).check().is_err());
    }

    #[test]
    fn end_field_rules_compare_numbers_and_text() {
        let s = mario();
        let rule = |path: &str, comparator, value| EndFieldRule {
            path: path.into(),
            comparator,
            value,
            effect: RuleEffect::StopSuccess,
        };
        assert!(rule("metrics.lives", Comparator::Ge, RuleValue::Number(3.0)).fires(&s).unwrap());
        assert!(!rule("metrics.lives", Comparator::Le, RuleValue::Number(2.0)).fires(&s).unwrap());
        assert!(rule("game_state.level", Comparator::Eq, RuleValue::Text("1-1".into())).fires(&s).unwrap());
        assert!(rule("status", Comparator::Ne, RuleValue::Text("terminal".into())).fires(&s).unwrap());
        assert!(rule("missing", Comparator::Eq, RuleValue::Number(1.0)).fires(&s).is_err());
    }

    #[test]
    fn lifecycle_graph_edges() {
        use LifecycleStatus::*;
        assert!(Loading.can_transition_to(Ready));
        assert!(Playing.can_transition_to(Paused));
        assert!(!Paused.can_transition_to(Terminal));
        assert!(!Ready.can_transition_to(Paused));
        assert!(Ready.is_actionable() && Playing.is_actionable() && !Paused.is_actionable());
        for s in LifecycleStatus::ALL {
            let doc = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<LifecycleStatus>(&doc).unwrap(), s);
        }
        assert!(serde_json::from_str::<LifecycleStatus>("\"running\"").is_err());
    }
}
