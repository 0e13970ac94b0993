//! Model output parsing. Three surface formats are recognised: provider
//! function-call records, `<think>`/`<tool_call>` tagged text, and the
//! `hotkey(...)`/`click(...)` action DSL. Each parser is total.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::control::{InvalidCategory, ValidityVerdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    StructuredCall,
    TaggedBlocks,
    ActionDsl,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
    #[serde(default)]
    pub reasoning: Option<String>,
    #[serde(default)]
    pub raw_text: String,
    /// Set when the call named a function but its argument payload could not
    /// be decoded; such calls classify as out of space, not as missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malformed_arguments: Option<String>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        Self {
            name: name.into(),
            arguments,
            reasoning: None,
            raw_text: String::new(),
            malformed_arguments: None,
        }
    }

    pub fn with_reasoning(mut self, reasoning: impl Into<String>) -> Self {
        self.reasoning = Some(reasoning.into());
        self
    }

    pub fn arg_str(&self, key: &str) -> Option<&str> {
        self.arguments.get(key).and_then(Value::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseOutcome {
    Call { call: ToolCall },
    NoToolCall { reason: String },
}

impl ParseOutcome {
    pub fn call(call: ToolCall) -> Self {
        ParseOutcome::Call { call }
    }

    pub fn no_call(reason: impl Into<String>) -> Self {
        ParseOutcome::NoToolCall {
            reason: reason.into(),
        }
    }

    pub fn as_call(&self) -> Option<&ToolCall> {
        match self {
            ParseOutcome::Call { call } => Some(call),
            ParseOutcome::NoToolCall { .. } => None,
        }
    }

    fn with_raw(self, raw: &str) -> Self {
        match self {
            ParseOutcome::Call { mut call } => {
                call.raw_text = raw.to_string();
                ParseOutcome::Call { call }
            }
            other => other,
        }
    }
}

/// Decodes an `arguments` value that may be an object, a JSON-encoded
/// string, or absent.
fn decode_arguments(v: Option<&Value>) -> Result<Map<String, Value>, String> {
    match v {
        None | Some(Value::Null) => Ok(Map::new()),
        Some(Value::Object(m)) => Ok(m.clone()),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(Map::new()),
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(other) => Err(format!("arguments decode to {other}, not an object")),
            Err(e) => Err(format!("arguments are not valid JSON: {e}")),
        },
        Some(other) => Err(format!("arguments must be an object, got {other}")),
    }
}

fn call_from_record(record: &Map<String, Value>, reasoning: Option<String>) -> ParseOutcome {
    let (name, args) = match record.get("function") {
        Some(Value::Object(f)) => (f.get("name"), f.get("arguments")),
        _ => (record.get("name"), record.get("arguments").or_else(|| record.get("input"))),
    };
    let Some(name) = name.and_then(Value::as_str).map(str::trim).filter(|n| !n.is_empty()) else {
        return ParseOutcome::no_call("call record has no function name");
    };
    let mut call = ToolCall::new(name, Map::new());
    call.reasoning = reasoning;
    match decode_arguments(args) {
        Ok(mut m) => {
            if let Some(Value::String(r)) = m.remove("reasoning") {
                call.reasoning.get_or_insert(r);
            }
            call.arguments = m;
        }
        Err(e) => call.malformed_arguments = Some(e),
    }
    ParseOutcome::call(call)
}

fn text_field(m: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter()
        .find_map(|k| m.get(*k).and_then(Value::as_str))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

/// Parses a provider function-call record: a bare `{name, arguments}`
/// object, an OpenAI-style `{function: {...}}` entry, or an assistant
/// message carrying `tool_calls`. Several calls in one message break the
/// one-action-per-step rule and yield no call.
pub fn parse_structured_call(payload: &Value) -> ParseOutcome {
    let Value::Object(record) = payload else {
        return ParseOutcome::no_call("payload is not an object");
    };
    if let Some(Value::Array(choices)) = record.get("choices") {
        return match choices.first() {
            Some(Value::Object(c)) => match c.get("message") {
                Some(msg) => parse_structured_call(msg),
                None => ParseOutcome::no_call("choice has no message"),
            },
            _ => ParseOutcome::no_call("response has no choices"),
        };
    }
    let reasoning = text_field(record, &["reasoning_content", "reasoning"]);
    if let Some(calls) = record.get("tool_calls") {
        return match calls {
            Value::Array(items) if items.len() == 1 => match &items[0] {
                Value::Object(entry) => call_from_record(entry, reasoning),
                _ => ParseOutcome::no_call("tool call entry is not an object"),
            },
            Value::Array(items) if items.is_empty() => {
                ParseOutcome::no_call(no_call_reason(record.get("content")))
            }
            Value::Array(items) => {
                ParseOutcome::no_call(format!("{} tool calls in one step", items.len()))
            }
            Value::Null => ParseOutcome::no_call(no_call_reason(record.get("content"))),
            _ => ParseOutcome::no_call("tool_calls is not a list"),
        };
    }
    if record.contains_key("name") || record.contains_key("function") {
        return call_from_record(record, reasoning);
    }
    ParseOutcome::no_call(no_call_reason(record.get("content")))
}

fn no_call_reason(content: Option<&Value>) -> String {
    match content.and_then(Value::as_str) {
        Some(t) if !t.trim().is_empty() => "free-form text without a tool call".into(),
        _ => "missing function name".into(),
    }
}

/// Text entry point for structured-call profiles: the reply body must be a
/// JSON call record.
pub fn parse_structured_text(text: &str) -> ParseOutcome {
    match serde_json::from_str::<Value>(text.trim()) {
        Ok(v) => parse_structured_call(&v).with_raw(text),
        Err(_) => ParseOutcome::no_call("reply is not a function-call record"),
    }
}

const CALL_OPEN: &str = "<tool_call>";
const CALL_CLOSE: &str = "</tool_call>";

fn last_think_block(text: &str) -> Option<String> {
    let start = text.rfind("<think>")? + "<think>".len();
    let end = text[start..].find("</think>")? + start;
    Some(text[start..end].trim().to_string())
}

/// Parses `<think>...</think><tool_call>{json}</tool_call>` text. The last
/// complete block wins; an unterminated block is a truncated reply.
pub fn parse_tagged_blocks(text: &str) -> ParseOutcome {
    let mut last = None;
    let mut cursor = 0;
    while let Some(open) = text[cursor..].find(CALL_OPEN) {
        let body_start = cursor + open + CALL_OPEN.len();
        match text[body_start..].find(CALL_CLOSE) {
            Some(close) => {
                last = Some(&text[body_start..body_start + close]);
                cursor = body_start + close + CALL_CLOSE.len();
            }
            None => break,
        }
    }
    let Some(body) = last else {
        return if text.contains(CALL_OPEN) {
            ParseOutcome::no_call("tool-call block never closed")
        } else {
            ParseOutcome::no_call("no tool-call block")
        };
    };
    let value: Value = match serde_json::from_str(body.trim()) {
        Ok(v) => v,
        Err(e) => return ParseOutcome::no_call(format!("tool-call body is not JSON: {e}")),
    };
    let Value::Object(record) = value else {
        return ParseOutcome::no_call("tool-call body is not an object");
    };
    call_from_record(&record, last_think_block(text)).with_raw(text)
}

fn dsl_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(hotkey|click|right_single|wait)\(([^()]*)\)").expect("static regex")
    })
}

fn point_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^point\s*=\s*'<point>\s*(-?\d+) (-?\d+)\s*</point>'$").expect("static regex")
    })
}

fn key_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^key\s*=\s*'([^']*)'$").expect("static regex"))
}

fn dsl_reasoning(text: &str, call_start: usize) -> Option<String> {
    let before = text[..call_start].trim();
    let before = before
        .strip_prefix("Thought:")
        .map(str::trim)
        .unwrap_or(before);
    let before = before.strip_suffix("Action:").map(str::trim).unwrap_or(before);
    (!before.is_empty()).then(|| before.to_string())
}

/// Parses the `hotkey(key='w d')` / `click(point='<point>x y</point>')`
/// action grammar. Exactly one call per reply.
pub fn parse_action_dsl(text: &str) -> ParseOutcome {
    let re = dsl_regex();
    let matches: Vec<_> = re.captures_iter(text).collect();
    let caps = match matches.len() {
        0 => return ParseOutcome::no_call("no recognised action call"),
        1 => &matches[0],
        n => return ParseOutcome::no_call(format!("{n} action calls in one step")),
    };
    let whole = caps.get(0).expect("match");
    let verb = &caps[1];
    let inner = caps[2].trim();
    let mut args = Map::new();
    let name = match verb {
        "hotkey" => {
            let Some(k) = key_regex().captures(inner) else {
                return ParseOutcome::no_call("hotkey without key='...'");
            };
            let keys: Vec<&str> = k[1].split(' ').filter(|s| !s.is_empty()).collect();
            match keys.as_slice() {
                [] => return ParseOutcome::no_call("hotkey with empty key"),
                [one] => {
                    args.insert("key".into(), json!(one));
                    "press_key"
                }
                many => {
                    args.insert("keys".into(), json!(many));
                    "press_keys"
                }
            }
        }
        "click" | "right_single" => {
            let Some(p) = point_regex().captures(inner) else {
                return ParseOutcome::no_call(format!("{verb} without a point"));
            };
            let (Ok(x), Ok(y)) = (p[1].parse::<i64>(), p[2].parse::<i64>()) else {
                return ParseOutcome::no_call("point coordinates out of range");
            };
            args.insert("x".into(), json!(x));
            args.insert("y".into(), json!(y));
            if verb == "right_single" {
                args.insert("button".into(), json!("right"));
            }
            "click"
        }
        _ => {
            if !inner.is_empty() {
                return ParseOutcome::no_call("wait() takes no arguments");
            }
            "wait"
        }
    };
    let mut call = ToolCall::new(name, args);
    call.reasoning = dsl_reasoning(text, whole.start());
    call.raw_text = text.to_string();
    ParseOutcome::call(call)
}

/// Dispatches to the single parser a profile declares. Scripted agents
/// never produce text, so their replies go through the structured path.
pub fn parse_output(format: OutputFormat, text: &str) -> ParseOutcome {
    match format {
        OutputFormat::StructuredCall | OutputFormat::Scripted => parse_structured_text(text),
        OutputFormat::TaggedBlocks => parse_tagged_blocks(text),
        OutputFormat::ActionDsl => parse_action_dsl(text),
    }
}

fn call_json(call: &ToolCall) -> String {
    crate::canonical::to_canonical_string(&json!({
        "name": call.name,
        "arguments": call.arguments,
    }))
}

/// Renders a call in a profile's surface format. Returns `None` when the
/// format cannot express the call.
pub fn render_call(format: OutputFormat, call: &ToolCall) -> Option<String> {
    match format {
        OutputFormat::StructuredCall | OutputFormat::Scripted => {
            let mut args = call.arguments.clone();
            if let Some(r) = &call.reasoning {
                args.insert("reasoning".into(), json!(r));
            }
            Some(crate::canonical::to_canonical_string(&json!({
                "name": call.name,
                "arguments": args,
            })))
        }
        OutputFormat::TaggedBlocks => {
            let think = call.reasoning.as_deref().unwrap_or("");
            Some(format!("<think>{think}</think>\n{CALL_OPEN}{}{CALL_CLOSE}", call_json(call)))
        }
        OutputFormat::ActionDsl => {
            let body = match call.name.as_str() {
                "press_key" if call.arguments.len() == 1 => {
                    let key = call.arg_str("key")?;
                    (!key.is_empty() && !key.contains([' ', '\''])).then(|| format!("hotkey(key='{key}')"))?
                }
                "press_keys" if call.arguments.len() == 1 => {
                    let keys: Vec<&str> = call
                        .arguments
                        .get("keys")?
                        .as_array()?
                        .iter()
                        .map(Value::as_str)
                        .collect::<Option<_>>()?;
                    if keys.len() < 2 || keys.iter().any(|k| k.is_empty() || k.contains([' ', '\''])) {
                        return None;
                    }
                    format!("hotkey(key='{}')", keys.join(" "))
                }
                "click" => {
                    let x = call.arguments.get("x")?.as_i64()?;
                    let y = call.arguments.get("y")?.as_i64()?;
                    match (call.arguments.len(), call.arg_str("button")) {
                        (2, None) => format!("click(point='<point>{x} {y}</point>')"),
                        (3, Some("right")) => format!("right_single(point='<point>{x} {y}</point>')"),
                        _ => return None,
                    }
                }
                "wait" if call.arguments.is_empty() => "wait()".to_string(),
                _ => return None,
            };
            Some(match call.reasoning.as_deref() {
                Some(r) if !r.is_empty() && !dsl_regex().is_match(r) => {
                    format!("Thought: {r}\nAction: {body}")
                }
                _ => body,
            })
        }
    }
}

/// Names under which a reply bundles several decisions into one call.
const MACRO_KEYS: [&str; 4] = ["actions", "steps", "sequence", "commands"];

/// The atomicity gate: a call that packs a multi-command macro into one
/// step is treated as if no executable call had been made.
pub fn atomicity_violation(call: &ToolCall) -> Option<String> {
    for key in MACRO_KEYS {
        if let Some(Value::Array(items)) = call.arguments.get(key) {
            if items.len() > 1 {
                return Some(format!("`{key}` bundles {} commands", items.len()));
            }
        }
    }
    let name = call.name.trim();
    if name.contains([',', ';', '\n']) || name.contains("&&") || name.contains(" then ") {
        return Some(format!("`{name}` names several commands"));
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "NTC")]
    Ntc,
    #[serde(rename = "OOS")]
    Oos,
    #[serde(rename = "valid")]
    Valid,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Ntc => "NTC",
            Classification::Oos => "OOS",
            Classification::Valid => "valid",
        }
    }
}

/// Combines the parse outcome with the downstream resolution verdict.
pub fn classify_invalid(outcome: &ParseOutcome, verdict: &ValidityVerdict) -> Classification {
    match outcome {
        ParseOutcome::NoToolCall { .. } => Classification::Ntc,
        ParseOutcome::Call { .. } => match (verdict.valid, verdict.category) {
            (true, _) => Classification::Valid,
            (false, Some(InvalidCategory::NoToolCall)) => Classification::Ntc,
            (false, _) => Classification::Oos,
        },
    }
}
