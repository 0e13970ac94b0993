//! Semantic action registries: fixed, deterministic mappings from a
//! generalist agent's control id to a low-level [`NormalizedAction`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::control::NormalizedAction;
use crate::parse::ToolCall;

pub const ACTION_LIST_HEADER: &str =
    "REGISTERED ACTIONS (Semantic Controls).\nChoose exactly one action per step:\n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticError {
    #[error("unknown control `{0}`")]
    UnknownControl(String),
    #[error("control `{control}` is missing required argument `{arg}`")]
    MissingArgument { control: String, arg: String },
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
    #[error("malformed parameters for `{control}`: {message}")]
    MalformedParameters { control: String, message: String },
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
}

/// Regular lattice shorthand for cell bindings: column letters by row
/// numbers, centres at `origin + index * pitch`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrid {
    pub columns: String,
    pub rows: u32,
    pub origin: [i32; 2],
    pub pitch: [i32; 2],
}

impl CellGrid {
    pub fn expand(&self) -> BTreeMap<String, [i32; 2]> {
        let mut out = BTreeMap::new();
        for (ci, col) in self.columns.chars().enumerate() {
            for row in 1..=self.rows {
                out.insert(
                    format!("{col}{row}"),
                    [
                        self.origin[0] + ci as i32 * self.pitch[0],
                        self.origin[1] + (row as i32 - 1) * self.pitch[1],
                    ],
                );
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellBindings {
    Grid { grid: CellGrid },
    Explicit(BTreeMap<String, [i32; 2]>),
}

impl CellBindings {
    pub fn table(&self) -> BTreeMap<String, [i32; 2]> {
        match self {
            CellBindings::Grid { grid } => grid.expand(),
            CellBindings::Explicit(m) => m.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticControl {
    pub id: String,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
    pub description: String,
    /// A `NormalizedAction` document whose string leaves may be
    /// placeholders: `{arg}` for a runtime argument, `{arg.x}`/`{arg.y}` for
    /// the coordinates of the cell named by `arg`.
    pub binding: Value,
    #[serde(default)]
    pub required_args: Vec<String>,
    #[serde(default)]
    pub cell_bindings: Option<CellBindings>,
}

fn placeholders(v: &Value, out: &mut BTreeSet<String>) {
    match v {
        Value::String(s) => {
            let mut rest = s.as_str();
            while let Some(open) = rest.find('{') {
                let Some(close) = rest[open..].find('}') else { break };
                out.insert(rest[open + 1..open + close].to_string());
                rest = &rest[open + close + 1..];
            }
        }
        Value::Array(items) => items.iter().for_each(|i| placeholders(i, out)),
        Value::Object(m) => m.values().for_each(|i| placeholders(i, out)),
        _ => {}
    }
}

impl SemanticControl {
    pub fn constant(id: &str, description: &str, action: &NormalizedAction) -> Self {
        Self {
            id: id.into(),
            aliases: BTreeSet::new(),
            description: description.into(),
            binding: serde_json::to_value(action).expect("actions serialize"),
            required_args: Vec::new(),
            cell_bindings: None,
        }
    }

    fn check(&self) -> Result<(), SemanticError> {
        let mut names = BTreeSet::new();
        placeholders(&self.binding, &mut names);
        for name in names {
            let (arg, cell_ref) = match name.split_once('.') {
                Some((arg, "x" | "y")) => (arg, true),
                Some(_) => {
                    return Err(SemanticError::InvalidRegistry(format!(
                        "`{}` uses unsupported placeholder `{{{name}}}`",
                        self.id
                    )))
                }
                None => (name.as_str(), false),
            };
            if !self.required_args.iter().any(|a| a == arg) && arg != "cell" {
                return Err(SemanticError::InvalidRegistry(format!(
                    "`{}` binds `{{{name}}}` which is not a required argument",
                    self.id
                )));
            }
            if cell_ref && self.cell_bindings.is_none() {
                return Err(SemanticError::InvalidRegistry(format!(
                    "`{}` references cell coordinates but declares no cell_bindings",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// One role's registry. Lookup keys are the case-folded ids and aliases.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SemanticControlMap {
    controls: Vec<SemanticControl>,
    index: BTreeMap<String, usize>,
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

impl SemanticControlMap {
    pub fn new(controls: Vec<SemanticControl>) -> Result<Self, SemanticError> {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, c) in controls.iter().enumerate() {
            c.check()?;
            for key in std::iter::once(&c.id).chain(c.aliases.iter()) {
                let folded = fold(key);
                if folded.is_empty() {
                    return Err(SemanticError::InvalidRegistry(format!("empty id or alias in `{}`", c.id)));
                }
                if let Some(&prev) = index.get(&folded) {
                    if prev != i {
                        return Err(SemanticError::InvalidRegistry(format!(
                            "`{folded}` is claimed by both `{}` and `{}`",
                            controls[prev].id, c.id
                        )));
                    }
                }
                index.insert(folded, i);
            }
        }
        Ok(Self { controls, index })
    }

    pub fn controls(&self) -> &[SemanticControl] {
        &self.controls
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SemanticControl> {
        self.index.get(&fold(id)).map(|&i| &self.controls[i])
    }

    pub fn folded_keys(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Identifier carried by a generalist call.
pub fn control_identifier(call: &ToolCall) -> Option<&str> {
    std::iter::once(Some(call.name.as_str()))
        .chain(["action", "tool_name", "tool_id"].into_iter().map(|k| call.arg_str(k)))
        .flatten()
        .map(str::trim)
        .find(|s| !s.is_empty())
}

pub fn resolve_control<'m>(call: &ToolCall, m: &'m SemanticControlMap) -> Result<&'m SemanticControl, SemanticError> {
    if let Some(c) = m.get(&call.name) {
        return Ok(c);
    }
    for key in ["action", "tool_name", "tool_id"] {
        if let Some(c) = call.arg_str(key).and_then(|id| m.get(id)) {
            return Ok(c);
        }
    }
    Err(SemanticError::UnknownControl(
        control_identifier(call).unwrap_or_default().to_string(),
    ))
}

fn arg_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct Binder<'a> {
    control: &'a SemanticControl,
    args: &'a Map<String, Value>,
    cells: Option<BTreeMap<String, [i32; 2]>>,
}

impl Binder<'_> {
    fn lookup(&self, name: &str) -> Result<Value, SemanticError> {
        if let Some((arg, axis)) = name.split_once('.') {
            let raw = self.args.get(arg).ok_or_else(|| SemanticError::MissingArgument {
                control: self.control.id.clone(),
                arg: arg.to_string(),
            })?;
            let cell = fold(&arg_text(raw));
            let table = self.cells.as_ref().ok_or_else(|| SemanticError::UnknownCell(cell.clone()))?;
            let xy = table.get(&cell).ok_or(SemanticError::UnknownCell(cell))?;
            return Ok(Value::from(if axis == "x" { xy[0] } else { xy[1] }));
        }
        self.args.get(name).cloned().ok_or_else(|| SemanticError::MissingArgument {
            control: self.control.id.clone(),
            arg: name.to_string(),
        })
    }

    fn fill(&self, v: &Value) -> Result<Value, SemanticError> {
        Ok(match v {
            Value::String(s) => {
                let mut names = BTreeSet::new();
                placeholders(v, &mut names);
                if names.is_empty() {
                    v.clone()
                } else if names.len() == 1 && s.starts_with('{') && s.ends_with('}') && s.matches('{').count() == 1 {
                    self.lookup(&s[1..s.len() - 1])?
                } else {
                    let mut out = s.clone();
                    for name in names {
                        out = out.replace(&format!("{{{name}}}"), &arg_text(&self.lookup(&name)?));
                    }
                    Value::String(out)
                }
            }
            Value::Array(items) => Value::Array(items.iter().map(|i| self.fill(i)).collect::<Result<_, _>>()?),
            Value::Object(m) => Value::Object(
                m.iter()
                    .map(|(k, i)| Ok((k.clone(), self.fill(i)?)))
                    .collect::<Result<_, SemanticError>>()?,
            ),
            other => other.clone(),
        })
    }
}

/// Merges runtime arguments into the control's binding. Extra arguments
/// are ignored.
pub fn bind_arguments(c: &SemanticControl, call: &ToolCall) -> Result<NormalizedAction, SemanticError> {
    for arg in &c.required_args {
        match call.arguments.get(arg) {
            None | Some(Value::Null) => {
                return Err(SemanticError::MissingArgument {
                    control: c.id.clone(),
                    arg: arg.clone(),
                })
            }
            Some(Value::String(s)) if s.trim().is_empty() => {
                return Err(SemanticError::MissingArgument {
                    control: c.id.clone(),
                    arg: arg.clone(),
                })
            }
            _ => {}
        }
    }
    let binder = Binder {
        control: c,
        args: &call.arguments,
        cells: c.cell_bindings.as_ref().map(CellBindings::table),
    };
    let filled = binder.fill(&c.binding)?;
    serde_json::from_value(filled).map_err(|e| SemanticError::MalformedParameters {
        control: c.id.clone(),
        message: e.to_string(),
    })
}

/// Prompt block listing every control in declaration order.
pub fn render_action_list(m: &SemanticControlMap) -> String {
    let mut out = String::from(ACTION_LIST_HEADER);
    for c in m.controls() {
        out.push('\n');
        out.push_str("- ");
        out.push_str(&c.id);
        out.push_str(": ");
        out.push_str(c.description.trim_end());
        if !c.description.trim_end().ends_with('.') {
            out.push('.');
        }
        if !c.required_args.is_empty() {
            out.push_str(&format!(" (required: {})", c.required_args.join(", ")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::MouseButton;
    use serde_json::json;

    fn minesweeper() -> SemanticControlMap {
        let grid = CellBindings::Grid {
            grid: CellGrid {
                columns: "abcdefghi".into(),
                rows: 9,
                origin: [120, 120],
                pitch: [24, 24],
            },
        };
        let yaml = r#"
- id: wait
  description: Pause briefly
  binding: {type: wait}
- id: reveal_cell
  aliases: [reveal]
  description: Reveal a cell by id (cell="a1".."i9")
  binding: {type: click, x: "{cell.x}", y: "{cell.y}", button: left}
  required_args: [cell]
- id: flag_cell
  description: Flag a cell by id (cell="a1".."i9")
  binding: {type: click, x: "{cell.x}", y: "{cell.y}", button: right}
  required_args: [cell]
"#;
        let mut controls: Vec<SemanticControl> = serde_yaml::from_str(yaml).unwrap();
        for c in controls.iter_mut().skip(1) {
            c.cell_bindings = Some(grid.clone());
        }
        SemanticControlMap::new(controls).unwrap()
    }

    fn call(name: &str, args: Value) -> ToolCall {
        ToolCall::new(name, args.as_object().cloned().unwrap_or_default())
    }

    #[test]
    fn case_insensitive_lookup_and_fallback_keys() {
        let m = minesweeper();
        assert_eq!(resolve_control(&call("FLAG_CELL", json!({})), &m).unwrap().id, "flag_cell");
        assert_eq!(resolve_control(&call("wait", json!({})), &m).unwrap().id, "wait");
        assert_eq!(
            resolve_control(&call("semantic_control", json!({"tool_name": "Reveal"})), &m).unwrap().id,
            "reveal_cell"
        );
        assert_eq!(
            resolve_control(&call("craft_a_workbench", json!({})), &m),
            Err(SemanticError::UnknownControl("craft_a_workbench".into()))
        );
    }

    #[test]
    fn flag_cell_binds_to_right_click() {
        let m = minesweeper();
        let c = m.get("flag_cell").unwrap();
        assert_eq!(
            bind_arguments(c, &call("flag_cell", json!({"cell": "a1", "extra": 1}))).unwrap(),
            NormalizedAction::Click {
                x: 120,
                y: 120,
                button: MouseButton::Right
            }
        );
        // i9 sits eight pitches from a1 on both axes.
        assert_eq!(
            bind_arguments(c, &call("flag_cell", json!({"cell": "I9"}))).unwrap(),
            NormalizedAction::Click {
                x: 312,
                y: 312,
                button: MouseButton::Right
            }
        );
        assert_eq!(
            bind_arguments(c, &call("flag_cell", json!({"cell": "z9"}))),
            Err(SemanticError::UnknownCell("z9".into()))
        );
        assert!(matches!(
            bind_arguments(c, &call("flag_cell", json!({}))),
            Err(SemanticError::MissingArgument { .. })
        ));
    }

    #[test]
    fn constant_binding() {
        let c = SemanticControl::constant(
            "move_left",
            "Slide all tiles left",
            &NormalizedAction::PressKey {
                key: "ArrowLeft".into(),
                duration_ms: None,
            },
        );
        assert_eq!(
            bind_arguments(&c, &call("move_left", json!({}))).unwrap(),
            NormalizedAction::PressKey {
                key: "ArrowLeft".into(),
                duration_ms: None
            }
        );
    }

    #[test]
    fn rendered_list_format() {
        let text = render_action_list(&minesweeper());
        assert_eq!(
            text,
            "REGISTERED ACTIONS (Semantic Controls).\nChoose exactly one action per step:\n\n\
             - wait: Pause briefly.\n\
             - reveal_cell: Reveal a cell by id (cell=\"a1\"..\"i9\"). (required: cell)\n\
             - flag_cell: Flag a cell by id (cell=\"a1\"..\"i9\"). (required: cell)"
        );
    }

    #[test]
    fn collisions_rejected() {
        let a = SemanticControl::constant("jump", "Jump", &NormalizedAction::Wait { duration_ms: None });
        let mut b = SemanticControl::constant("hop", "Hop", &NormalizedAction::Wait { duration_ms: None });
        b.aliases.insert("JUMP".into());
        assert!(SemanticControlMap::new(vec![a, b]).is_err());
    }

    #[test]
    fn unbound_placeholder_rejected() {
        let mut c = SemanticControl::constant("type_word", "Type", &NormalizedAction::Wait { duration_ms: None });
        c.binding = json!({"type": "type", "text": "{word}"});
        assert!(SemanticControlMap::new(vec![c.clone()]).is_err());
        c.required_args.push("word".into());
        let m = SemanticControlMap::new(vec![c]).unwrap();
        let bound = bind_arguments(m.get("type_word").unwrap(), &call("type_word", json!({"word": "crane"})));
        assert_eq!(bound.unwrap(), NormalizedAction::Type { text: "crane".into() });
    }
}
