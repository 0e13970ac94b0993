//! From parsed model output to an executable action and a validity verdict.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::control::{legalize, MouseButton, NormalizedAction, RoleControls, ValidityVerdict};
use crate::kernel::RoleDefinition;
use crate::parse::{atomicity_violation, classify_invalid, Classification, ParseOutcome, ToolCall};
use crate::semantic::{bind_arguments, resolve_control};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    ComputerUse,
    Generalist,
}

impl InterfaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceKind::ComputerUse => "computer_use",
            InterfaceKind::Generalist => "generalist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    /// The action to execute; `None` for invalid steps, which run as no-ops.
    pub action: Option<NormalizedAction>,
    pub verdict: ValidityVerdict,
    pub classification: Classification,
}

impl Interpretation {
    fn invalid(outcome: &ParseOutcome, verdict: ValidityVerdict) -> Self {
        Self {
            action: None,
            classification: classify_invalid(outcome, &verdict),
            verdict,
        }
    }
}

/// Resolves one step's parse outcome under the agent's interface and the
/// active role.
pub fn interpret(interface: InterfaceKind, outcome: &ParseOutcome, role: &RoleDefinition) -> Interpretation {
    let call = match outcome {
        ParseOutcome::NoToolCall { reason } => {
            return Interpretation::invalid(outcome, ValidityVerdict::no_tool_call(reason.clone()))
        }
        ParseOutcome::Call { call } => call,
    };
    if let Some(reason) = atomicity_violation(call) {
        return Interpretation::invalid(outcome, ValidityVerdict::no_tool_call(reason));
    }
    if let Some(e) = &call.malformed_arguments {
        return Interpretation::invalid(outcome, ValidityVerdict::out_of_space(format!("malformed parameters: {e}")));
    }
    let proposed = match interface {
        InterfaceKind::Generalist => resolve_control(call, &role.semantic)
            .and_then(|c| bind_arguments(c, call))
            .map_err(|e| e.to_string()),
        InterfaceKind::ComputerUse => cua_action(call),
    };
    let proposed = match proposed {
        Ok(a) => a,
        Err(reason) => return Interpretation::invalid(outcome, ValidityVerdict::out_of_space(reason)),
    };
    match legalize(&proposed, &role.controls) {
        Ok((action, substituted_key)) => Interpretation {
            action: Some(action),
            verdict: ValidityVerdict {
                substituted_key,
                ..ValidityVerdict::valid()
            },
            classification: Classification::Valid,
        },
        Err(reason) => Interpretation::invalid(outcome, ValidityVerdict::out_of_space(reason)),
    }
}

/// Convenience for callers that only need the legality of an already
/// normalized action.
pub fn check(action: &NormalizedAction, rc: &RoleControls) -> ValidityVerdict {
    crate::control::validate_action(action, rc)
}

fn int_arg(args: &Map<String, Value>, key: &str) -> Option<i32> {
    match args.get(key)? {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .and_then(|v| i32::try_from(v).ok())
}

fn point(args: &Map<String, Value>, prefix: &str) -> Result<(i32, i32), String> {
    let coord_key = if prefix.is_empty() { "coordinate".to_string() } else { format!("{prefix}coordinate") };
    if let Some(Value::Array(items)) = args.get(&coord_key) {
        let xy: Vec<i32> = items
            .iter()
            .filter_map(|v| v.as_i64().and_then(|v| i32::try_from(v).ok()))
            .collect();
        if xy.len() == 2 && items.len() == 2 {
            return Ok((xy[0], xy[1]));
        }
        return Err(format!("`{coord_key}` must be two integers"));
    }
    match (int_arg(args, &format!("{prefix}x")), int_arg(args, &format!("{prefix}y"))) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(format!("missing {}coordinates", if prefix.is_empty() { "" } else { prefix })),
    }
}

fn button(args: &Map<String, Value>, default: MouseButton) -> Result<MouseButton, String> {
    match args.get("button").and_then(Value::as_str).map(str::to_ascii_lowercase).as_deref() {
        None => Ok(default),
        Some("left") => Ok(MouseButton::Left),
        Some("right") => Ok(MouseButton::Right),
        Some("middle") | Some("wheel") => Ok(MouseButton::Middle),
        Some(other) => Err(format!("unknown mouse button `{other}`")),
    }
}

fn duration(args: &Map<String, Value>) -> Result<Option<u64>, String> {
    if let Some(v) = args.get("duration_ms") {
        return v.as_u64().map(Some).ok_or_else(|| "duration_ms must be a non-negative integer".to_string());
    }
    if let Some(v) = args.get("duration").or_else(|| args.get("seconds")) {
        let secs = v.as_f64().filter(|s| *s >= 0.0).ok_or("duration must be non-negative seconds")?;
        return Ok(Some((secs * 1000.0).round() as u64));
    }
    Ok(None)
}

fn key_list(args: &Map<String, Value>) -> Result<Vec<String>, String> {
    let raw = ["keys", "key", "text", "combo"]
        .iter()
        .find_map(|k| args.get(*k))
        .ok_or("missing key argument")?;
    let keys: Vec<String> = match raw {
        Value::String(s) => {
            let s = s.trim();
            if s == "+" || s == " " {
                vec![s.to_string()]
            } else {
                s.split(|c: char| c == '+' || c.is_whitespace())
                    .filter(|k| !k.is_empty())
                    .map(str::to_string)
                    .collect()
            }
        }
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or("keys must be strings"))
            .collect::<Result<_, _>>()?,
        _ => return Err("key argument must be text or a list".into()),
    };
    if keys.is_empty() {
        return Err("empty key argument".into());
    }
    Ok(keys)
}

/// Maps a computer-use call onto the normalized action space. Accepts the
/// normalized variant names directly (`press_key`, `click`, ...) and the
/// common provider spellings (`computer_use` with an `action` argument,
/// `left_click`, `key`, `hotkey`, `coordinate` pairs).
pub fn cua_action(call: &ToolCall) -> Result<NormalizedAction, String> {
    let mut name = call.name.trim().to_ascii_lowercase();
    if matches!(name.as_str(), "computer_use" | "computer" | "computer_action") {
        name = ["action", "type"]
            .iter()
            .find_map(|k| call.arg_str(k))
            .map(|s| s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("`{}` call without an action", call.name))?;
    }
    let args = &call.arguments;
    let a = match name.as_str() {
        "click" | "left_click" | "right_click" | "middle_click" | "right_single" => {
            let default = match name.as_str() {
                "right_click" | "right_single" => MouseButton::Right,
                "middle_click" => MouseButton::Middle,
                _ => MouseButton::Left,
            };
            let (x, y) = point(args, "")?;
            NormalizedAction::Click {
                x,
                y,
                button: button(args, default)?,
            }
        }
        "click_hold" | "left_click_hold" | "long_press" => {
            let (x, y) = point(args, "")?;
            NormalizedAction::ClickHold {
                x,
                y,
                button: button(args, MouseButton::Left)?,
                duration_ms: duration(args)?,
            }
        }
        "drag" | "left_click_drag" => {
            let (from_x, from_y) = match point(args, "start_") {
                Ok(p) => p,
                Err(_) => point(args, "from_")?,
            };
            let (to_x, to_y) = match point(args, "") {
                Ok(p) => p,
                Err(_) => point(args, "to_")?,
            };
            NormalizedAction::Drag {
                from_x,
                from_y,
                to_x,
                to_y,
                button: button(args, MouseButton::Left)?,
            }
        }
        "mouse_move" | "move" => {
            let (x, y) = point(args, "")?;
            NormalizedAction::MouseMove { x, y }
        }
        "scroll" => {
            let amount = int_arg(args, "amount")
                .or_else(|| int_arg(args, "scroll_amount"))
                .ok_or("scroll needs an integer amount")?;
            let amount = match args.get("direction").and_then(Value::as_str) {
                Some("up") => -amount.abs(),
                Some("down") => amount.abs(),
                _ => amount,
            };
            NormalizedAction::Scroll { amount }
        }
        "type" | "type_text" => {
            let text = call.arg_str("text").ok_or("type needs text")?;
            NormalizedAction::Type { text: text.to_string() }
        }
        "press_key" | "key" | "keypress" | "hotkey" | "press_keys" | "key_combination" => {
            let keys = key_list(args)?;
            let duration_ms = duration(args)?;
            if keys.len() == 1 {
                NormalizedAction::PressKey {
                    key: keys.into_iter().next().unwrap_or_default(),
                    duration_ms,
                }
            } else {
                NormalizedAction::PressKeys { keys, duration_ms }
            }
        }
        "wait" | "no_op" | "noop" => NormalizedAction::Wait {
            duration_ms: duration(args)?,
        },
        other => return Err(format!("`{other}` is not a computer-use action")),
    };
    Ok(a)
}

/// Reverse of [`cua_action`] for normalized actions: the structured call a
/// computer-use agent would emit.
pub fn action_call(a: &NormalizedAction) -> ToolCall {
    let mut value = serde_json::to_value(a).unwrap_or(Value::Null);
    let mut args = value.as_object_mut().cloned().unwrap_or_default();
    args.remove("type");
    ToolCall::new(a.kind(), args)
}

/// The registered semantic call whose binding reproduces `a`, if any.
pub fn semantic_call_for(a: &NormalizedAction, role: &RoleDefinition) -> Option<ToolCall> {
    for c in role.semantic.controls() {
        if c.required_args.is_empty() {
            let call = ToolCall::new(c.id.clone(), Map::new());
            if bind_arguments(c, &call).ok().as_ref() == Some(a) {
                return Some(call);
            }
            continue;
        }
        let Some(cells) = &c.cell_bindings else { continue };
        if c.required_args.len() != 1 {
            continue;
        }
        for cell in cells.table().keys() {
            let mut args = Map::new();
            args.insert(c.required_args[0].clone(), Value::String(cell.clone()));
            let call = ToolCall::new(c.id.clone(), args);
            if bind_arguments(c, &call).ok().as_ref() == Some(a) {
                return Some(call);
            }
        }
    }
    None
}
