//! The unified executable control space: normalized runtime actions, the
//! atomic events they lower into, role-aware legality, and validity counters.

mod keys;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use keys::{is_canonical_key, key_for_char, key_table, normalize_key_alias, KeyTable};

pub const DEFAULT_HOLD_MS: u64 = 200;
pub const MAX_DURATION_MS: u64 = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MouseButton {
    #[default]
    Left,
    Right,
    Middle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AtomicEvent {
    MouseMove { x: i32, y: i32 },
    MouseDown { button: MouseButton },
    MouseUp { button: MouseButton },
    Scroll { amount: i32 },
    KeyDown { key: String },
    KeyUp { key: String },
    Wait { duration_ms: u64 },
    Idle,
}

impl AtomicEvent {
    pub fn wait_ms(&self) -> u64 {
        match self {
            AtomicEvent::Wait { duration_ms } => *duration_ms,
            _ => 0,
        }
    }
}

/// One executable action per model step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NormalizedAction {
    Click {
        x: i32,
        y: i32,
        #[serde(default)]
        button: MouseButton,
    },
    ClickHold {
        x: i32,
        y: i32,
        #[serde(default)]
        button: MouseButton,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ms: Option<u64>,
    },
    Drag {
        from_x: i32,
        from_y: i32,
        to_x: i32,
        to_y: i32,
        #[serde(default)]
        button: MouseButton,
    },
    MouseMove {
        x: i32,
        y: i32,
    },
    Scroll {
        amount: i32,
    },
    Type {
        text: String,
    },
    PressKey {
        key: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ms: Option<u64>,
    },
    PressKeys {
        keys: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ms: Option<u64>,
    },
    Wait {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ms: Option<u64>,
    },
}

impl NormalizedAction {
    pub fn kind(&self) -> &'static str {
        match self {
            NormalizedAction::Click { .. } => "click",
            NormalizedAction::ClickHold { .. } => "click_hold",
            NormalizedAction::Drag { .. } => "drag",
            NormalizedAction::MouseMove { .. } => "mouse_move",
            NormalizedAction::Scroll { .. } => "scroll",
            NormalizedAction::Type { .. } => "type",
            NormalizedAction::PressKey { .. } => "press_key",
            NormalizedAction::PressKeys { .. } => "press_keys",
            NormalizedAction::Wait { .. } => "wait",
        }
    }

    pub fn is_mouse(&self) -> bool {
        matches!(
            self,
            NormalizedAction::Click { .. }
                | NormalizedAction::ClickHold { .. }
                | NormalizedAction::Drag { .. }
                | NormalizedAction::MouseMove { .. }
                | NormalizedAction::Scroll { .. }
        )
    }

    fn points(&self) -> Vec<(i32, i32)> {
        match *self {
            NormalizedAction::Click { x, y, .. }
            | NormalizedAction::ClickHold { x, y, .. }
            | NormalizedAction::MouseMove { x, y } => vec![(x, y)],
            NormalizedAction::Drag {
                from_x,
                from_y,
                to_x,
                to_y,
                ..
            } => vec![(from_x, from_y), (to_x, to_y)],
            _ => Vec::new(),
        }
    }

    fn explicit_duration(&self) -> Option<u64> {
        match self {
            NormalizedAction::ClickHold { duration_ms, .. }
            | NormalizedAction::PressKey { duration_ms, .. }
            | NormalizedAction::PressKeys { duration_ms, .. }
            | NormalizedAction::Wait { duration_ms } => *duration_ms,
            _ => None,
        }
    }

    /// Short human-readable rendering used in action histories.
    pub fn describe(&self) -> String {
        match self {
            NormalizedAction::Click { x, y, button } => format!("click({x},{y},{button:?})"),
            NormalizedAction::ClickHold { x, y, button, .. } => {
                format!("click_hold({x},{y},{button:?})")
            }
            NormalizedAction::Drag {
                from_x,
                from_y,
                to_x,
                to_y,
                ..
            } => format!("drag({from_x},{from_y}->{to_x},{to_y})"),
            NormalizedAction::MouseMove { x, y } => format!("mouse_move({x},{y})"),
            NormalizedAction::Scroll { amount } => format!("scroll({amount})"),
            NormalizedAction::Type { text } => format!("type({text:?})"),
            NormalizedAction::PressKey { key, .. } => format!("press_key({key})"),
            NormalizedAction::PressKeys { keys, .. } => format!("press_keys({})", keys.join("+")),
            NormalizedAction::Wait { duration_ms } => match duration_ms {
                Some(d) => format!("wait({d})"),
                None => "wait()".into(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }
}

fn default_hold() -> u64 {
    DEFAULT_HOLD_MS
}

/// Per-role low-level control constraints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleControls {
    #[serde(default)]
    pub allowed_keys: BTreeSet<String>,
    #[serde(default)]
    pub allow_clicks: bool,
    #[serde(default = "default_hold")]
    pub hold_duration: u64,
    #[serde(default)]
    pub key_durations: BTreeMap<String, u64>,
    /// Groups of semantically equivalent keys; a disallowed key may be
    /// replaced by an allowed member of its group.
    #[serde(default)]
    pub alias_groups: Vec<Vec<String>>,
    #[serde(default)]
    pub viewport: Option<Viewport>,
}

impl Default for RoleControls {
    fn default() -> Self {
        Self {
            allowed_keys: BTreeSet::new(),
            allow_clicks: false,
            hold_duration: DEFAULT_HOLD_MS,
            key_durations: BTreeMap::new(),
            alias_groups: Vec::new(),
            viewport: None,
        }
    }
}

impl RoleControls {
    pub fn keys<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            allowed_keys: keys.into_iter().map(|k| normalize_key_alias(k.as_ref())).collect(),
            ..Self::default()
        }
    }

    /// Normalizes key spellings and checks the declared invariants.
    pub fn normalized(mut self) -> Result<Self, String> {
        self.allowed_keys = self.allowed_keys.iter().map(|k| normalize_key_alias(k)).collect();
        self.key_durations = self
            .key_durations
            .into_iter()
            .map(|(k, d)| (normalize_key_alias(&k), d))
            .collect();
        self.alias_groups = self
            .alias_groups
            .into_iter()
            .map(|g| g.iter().map(|k| normalize_key_alias(k)).collect())
            .collect();
        if !(1..=MAX_DURATION_MS).contains(&self.hold_duration) {
            return Err(format!("hold_duration {} outside [1, {MAX_DURATION_MS}]", self.hold_duration));
        }
        for (key, d) in &self.key_durations {
            if !self.allowed_keys.contains(key) {
                return Err(format!("key_durations names `{key}` which is not an allowed key"));
            }
            if !(1..=MAX_DURATION_MS).contains(d) {
                return Err(format!("duration {d} for `{key}` outside [1, {MAX_DURATION_MS}]"));
            }
        }
        Ok(self)
    }

    pub fn key_duration(&self, key: &str) -> u64 {
        self.key_durations.get(key).copied().unwrap_or(self.hold_duration)
    }

    /// An allowed stand-in for `key` from its declared alias group.
    fn fallback_for(&self, key: &str) -> Option<&str> {
        self.alias_groups
            .iter()
            .filter(|g| g.iter().any(|k| k == key))
            .flat_map(|g| g.iter())
            .find(|k| self.allowed_keys.contains(*k))
            .map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvalidCategory {
    /// No executable tool call was produced.
    #[serde(rename = "NTC")]
    NoToolCall,
    /// A call was produced but lies outside the legal action space.
    #[serde(rename = "OOS")]
    OutOfSpace,
}

impl fmt::Display for InvalidCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvalidCategory::NoToolCall => "NTC",
            InvalidCategory::OutOfSpace => "OOS",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub valid: bool,
    pub category: Option<InvalidCategory>,
    pub reason: String,
    pub substituted_key: Option<String>,
}

impl ValidityVerdict {
    pub fn valid() -> Self {
        Self {
            valid: true,
            category: None,
            reason: "ok".into(),
            substituted_key: None,
        }
    }

    pub fn no_tool_call(reason: impl Into<String>) -> Self {
        Self {
            valid: false,
            category: Some(InvalidCategory::NoToolCall),
            reason: reason.into(),
            substituted_key: None,
        }
    }

    pub fn out_of_space(reason: impl Into<String>) -> Self {
        Self {
            valid: false,
            category: Some(InvalidCategory::OutOfSpace),
            reason: reason.into(),
            substituted_key: None,
        }
    }
}

fn check_duration(d: Option<u64>) -> Result<(), String> {
    match d {
        Some(d) if d > MAX_DURATION_MS => Err(format!("duration {d}ms exceeds {MAX_DURATION_MS}ms")),
        _ => Ok(()),
    }
}

/// Rewrites `a` into its executable form under `rc` (canonical key names,
/// alias-group fallbacks applied), or explains why it is out of space.
/// Returns the rewritten action and the first substituted key, if any.
pub fn legalize(
    a: &NormalizedAction,
    rc: &RoleControls,
) -> Result<(NormalizedAction, Option<String>), String> {
    check_duration(a.explicit_duration())?;
    if a.is_mouse() {
        if !rc.allow_clicks {
            return Err(format!("{} is outside the allowed control space (mouse disabled)", a.kind()));
        }
        if let Some(vp) = rc.viewport {
            if let Some((x, y)) = a.points().into_iter().find(|&(x, y)| !vp.contains(x, y)) {
                return Err(format!("point ({x},{y}) outside the {}x{} viewport", vp.width, vp.height));
            }
        }
        return Ok((a.clone(), None));
    }

    let mut substituted = None;
    let mut legal_key = |raw: &str| -> Result<String, String> {
        if raw.is_empty() {
            return Err("empty key name".into());
        }
        let key = normalize_key_alias(raw);
        if rc.allowed_keys.contains(&key) {
            return Ok(key);
        }
        match rc.fallback_for(&key) {
            Some(alt) => {
                substituted.get_or_insert_with(|| alt.to_string());
                Ok(alt.to_string())
            }
            None => Err(format!("key `{key}` is not in the allowed control space")),
        }
    };

    let action = match a {
        NormalizedAction::Wait { .. } => a.clone(),
        NormalizedAction::PressKey { key, duration_ms } => NormalizedAction::PressKey {
            key: legal_key(key)?,
            duration_ms: *duration_ms,
        },
        NormalizedAction::PressKeys { keys, duration_ms } => {
            let keys = keys.iter().map(|k| legal_key(k)).collect::<Result<Vec<_>, _>>()?;
            let distinct: BTreeSet<&String> = keys.iter().collect();
            if !(2..=3).contains(&keys.len()) || distinct.len() != keys.len() {
                return Err(format!("press_keys needs 2-3 distinct keys, got {keys:?}"));
            }
            NormalizedAction::PressKeys {
                keys,
                duration_ms: *duration_ms,
            }
        }
        NormalizedAction::Type { text } => {
            if text.is_empty() {
                return Err("type needs non-empty text".into());
            }
            for c in text.chars() {
                legal_key(&key_for_char(c))?;
            }
            a.clone()
        }
        _ => unreachable!("mouse variants handled above"),
    };
    Ok((action, substituted))
}

/// Pure legality check of one action against one role.
pub fn validate_action(a: &NormalizedAction, rc: &RoleControls) -> ValidityVerdict {
    match legalize(a, rc) {
        Ok((_, substituted_key)) => ValidityVerdict {
            substituted_key,
            ..ValidityVerdict::valid()
        },
        Err(reason) => ValidityVerdict::out_of_space(reason),
    }
}

/// Deterministic expansion of a (legal) action into atomic events. Keys are
/// released in reverse press order so nothing stays held.
pub fn lower_to_atomic_events(a: &NormalizedAction, rc: &RoleControls) -> Vec<AtomicEvent> {
    use AtomicEvent as E;
    match a {
        NormalizedAction::Click { x, y, button } => vec![
            E::MouseMove { x: *x, y: *y },
            E::MouseDown { button: *button },
            E::MouseUp { button: *button },
        ],
        NormalizedAction::ClickHold {
            x,
            y,
            button,
            duration_ms,
        } => vec![
            E::MouseMove { x: *x, y: *y },
            E::MouseDown { button: *button },
            E::Wait {
                duration_ms: duration_ms.unwrap_or(rc.hold_duration),
            },
            E::MouseUp { button: *button },
        ],
        NormalizedAction::Drag {
            from_x,
            from_y,
            to_x,
            to_y,
            button,
        } => vec![
            E::MouseMove { x: *from_x, y: *from_y },
            E::MouseDown { button: *button },
            E::MouseMove { x: *to_x, y: *to_y },
            E::MouseUp { button: *button },
        ],
        NormalizedAction::MouseMove { x, y } => vec![E::MouseMove { x: *x, y: *y }],
        NormalizedAction::Scroll { amount } => vec![E::Scroll { amount: *amount }],
        NormalizedAction::Type { text } => text
            .chars()
            .flat_map(|c| {
                let key = key_for_char(c);
                [E::KeyDown { key: key.clone() }, E::KeyUp { key }]
            })
            .collect(),
        NormalizedAction::PressKey { key, duration_ms } => vec![
            E::KeyDown { key: key.clone() },
            E::Wait {
                duration_ms: duration_ms.unwrap_or_else(|| rc.key_duration(key)),
            },
            E::KeyUp { key: key.clone() },
        ],
        NormalizedAction::PressKeys { keys, duration_ms } => {
            let hold = duration_ms.unwrap_or_else(|| {
                keys.iter().map(|k| rc.key_duration(k)).max().unwrap_or(rc.hold_duration)
            });
            let mut events: Vec<E> = keys.iter().map(|k| E::KeyDown { key: k.clone() }).collect();
            events.push(E::Wait { duration_ms: hold });
            events.extend(keys.iter().rev().map(|k| E::KeyUp { key: k.clone() }));
            events
        }
        NormalizedAction::Wait { duration_ms } => vec![E::Wait {
            duration_ms: duration_ms.unwrap_or(rc.hold_duration),
        }],
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityCounters {
    pub proposed: u64,
    pub valid: u64,
    pub ntc: u64,
    pub oos: u64,
}

impl ValidityCounters {
    pub fn record(&mut self, v: &ValidityVerdict) {
        self.proposed += 1;
        match (v.valid, v.category) {
            (true, _) => self.valid += 1,
            (false, Some(InvalidCategory::NoToolCall)) => self.ntc += 1,
            (false, _) => self.oos += 1,
        }
    }

    pub fn merged(self, other: ValidityCounters) -> ValidityCounters {
        ValidityCounters {
            proposed: self.proposed + other.proposed,
            valid: self.valid + other.valid,
            ntc: self.ntc + other.ntc,
            oos: self.oos + other.oos,
        }
    }
}

/// Functional form of [`ValidityCounters::record`].
pub fn record_validity(mut c: ValidityCounters, v: &ValidityVerdict) -> ValidityCounters {
    c.record(v);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrows() -> RoleControls {
        RoleControls::keys(["ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight"])
    }

    #[test]
    fn click_without_mouse_is_oos() {
        let v = validate_action(
            &NormalizedAction::Click {
                x: 640,
                y: 360,
                button: MouseButton::Left,
            },
            &arrows(),
        );
        assert!(!v.valid);
        assert_eq!(v.category, Some(InvalidCategory::OutOfSpace));
    }

    #[test]
    fn allowed_key_is_valid() {
        let v = validate_action(
            &NormalizedAction::PressKey {
                key: "ArrowUp".into(),
                duration_ms: None,
            },
            &arrows(),
        );
        assert_eq!(v, ValidityVerdict::valid());
    }

    #[test]
    fn alias_group_fallback_substitutes() {
        // Hand-built per-game alias table: w/a/s/d stand in for arrows.
        let mut rc = arrows();
        rc.alias_groups = vec![
            vec!["ArrowUp".into(), "w".into()],
            vec!["ArrowLeft".into(), "a".into()],
        ];
        let rc = rc.normalized().unwrap();
        let v = validate_action(
            &NormalizedAction::PressKey {
                key: "W".into(),
                duration_ms: None,
            },
            &rc,
        );
        assert!(v.valid);
        assert_eq!(v.substituted_key.as_deref(), Some("ArrowUp"));

        let v = validate_action(
            &NormalizedAction::PressKey {
                key: "d".into(),
                duration_ms: None,
            },
            &rc,
        );
        assert_eq!(v.category, Some(InvalidCategory::OutOfSpace));
    }

    #[test]
    fn press_keys_bounds() {
        let rc = arrows();
        let too_many = NormalizedAction::PressKeys {
            keys: vec!["ArrowUp".into(), "ArrowDown".into(), "ArrowLeft".into(), "ArrowRight".into()],
            duration_ms: None,
        };
        assert!(!validate_action(&too_many, &rc).valid);
        let dup = NormalizedAction::PressKeys {
            keys: vec!["up".into(), "ArrowUp".into()],
            duration_ms: None,
        };
        assert!(!validate_action(&dup, &rc).valid);
    }

    #[test]
    fn viewport_bounds_clicks() {
        let rc = RoleControls {
            allow_clicks: true,
            viewport: Some(Viewport {
                width: 100,
                height: 100,
            }),
            ..RoleControls::default()
        };
        let inside = NormalizedAction::Click {
            x: 99,
            y: 0,
            button: MouseButton::Left,
        };
        let outside = NormalizedAction::Click {
            x: 100,
            y: 0,
            button: MouseButton::Left,
        };
        assert!(validate_action(&inside, &rc).valid);
        assert!(!validate_action(&outside, &rc).valid);
    }

    #[test]
    fn role_invariants_enforced() {
        let mut rc = arrows();
        rc.key_durations.insert("Space".into(), 300);
        assert!(rc.normalized().is_err());
        let mut rc = arrows();
        rc.hold_duration = 0;
        assert!(rc.normalized().is_err());
    }

    #[test]
    fn press_key_lowering_uses_role_default() {
        let rc = RoleControls::keys(["Space"]);
        assert_eq!(
            lower_to_atomic_events(
                &NormalizedAction::PressKey {
                    key: "Space".into(),
                    duration_ms: None
                },
                &rc
            ),
            vec![
                AtomicEvent::KeyDown { key: "Space".into() },
                AtomicEvent::Wait { duration_ms: 200 },
                AtomicEvent::KeyUp { key: "Space".into() },
            ]
        );
    }

    #[test]
    fn key_specific_duration_wins() {
        let mut rc = RoleControls::keys(["Space"]);
        rc.key_durations.insert("Space".into(), 450);
        let events = lower_to_atomic_events(
            &NormalizedAction::PressKey {
                key: "Space".into(),
                duration_ms: None,
            },
            &rc,
        );
        assert_eq!(events[1], AtomicEvent::Wait { duration_ms: 450 });
    }

    #[test]
    fn wait_lowers_to_itself() {
        let rc = RoleControls::default();
        assert_eq!(
            lower_to_atomic_events(&NormalizedAction::Wait { duration_ms: Some(300) }, &rc),
            vec![AtomicEvent::Wait { duration_ms: 300 }]
        );
    }

    #[test]
    fn combo_releases_last_in_first_out() {
        let rc = arrows();
        let events = lower_to_atomic_events(
            &NormalizedAction::PressKeys {
                keys: vec!["ArrowUp".into(), "ArrowRight".into()],
                duration_ms: None,
            },
            &rc,
        );
        assert_eq!(
            events,
            vec![
                AtomicEvent::KeyDown { key: "ArrowUp".into() },
                AtomicEvent::KeyDown { key: "ArrowRight".into() },
                AtomicEvent::Wait { duration_ms: 200 },
                AtomicEvent::KeyUp { key: "ArrowRight".into() },
                AtomicEvent::KeyUp { key: "ArrowUp".into() },
            ]
        );
    }

    #[test]
    fn counters_and_iar_arithmetic() {
        let mut c = ValidityCounters::default();
        for _ in 0..48 {
            c.record(&ValidityVerdict::valid());
        }
        c.record(&ValidityVerdict::no_tool_call("prose"));
        c.record(&ValidityVerdict::out_of_space("click"));
        assert_eq!(c.proposed, 50);
        assert_eq!(c.proposed, c.valid + c.ntc + c.oos);
        let iar = 1.0 - c.valid as f64 / c.proposed as f64;
        assert!((iar - 0.04).abs() < 1e-12);
    }

    #[test]
    fn action_json_shape() {
        let a: NormalizedAction = serde_json::from_str(r#"{"type":"press_key","key":"ArrowLeft"}"#).unwrap();
        assert_eq!(
            a,
            NormalizedAction::PressKey {
                key: "ArrowLeft".into(),
                duration_ms: None
            }
        );
        let c: NormalizedAction = serde_json::from_str(r#"{"type":"click","x":3,"y":4}"#).unwrap();
        assert_eq!(
            c,
            NormalizedAction::Click {
                x: 3,
                y: 4,
                button: MouseButton::Left
            }
        );
    }
}
