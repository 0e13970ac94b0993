//! Rolling per-run memory of past rounds.

use serde::{Deserialize, Serialize};

use super::prompt::ImageRef;

pub const HISTORY_HEADER: &str = "Action History";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryField {
    UserPrompt,
    Screenshot,
    Reasoning,
    Action,
}

impl MemoryField {
    pub const ALL: [MemoryField; 4] = [
        MemoryField::UserPrompt,
        MemoryField::Screenshot,
        MemoryField::Reasoning,
        MemoryField::Action,
    ];
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryFormat {
    #[default]
    Full,
    /// Screenshots are dropped even when listed in the include fields.
    TextOnly,
}

fn all_fields() -> Vec<MemoryField> {
    MemoryField::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    #[serde(default)]
    pub memory_rounds: u32,
    #[serde(default)]
    pub memory_format: MemoryFormat,
    #[serde(default = "all_fields")]
    pub memory_include_fields: Vec<MemoryField>,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            memory_rounds: 0,
            memory_format: MemoryFormat::Full,
            memory_include_fields: all_fields(),
        }
    }
}

impl MemoryConfig {
    pub fn with_rounds(mut self, k: u32) -> Self {
        self.memory_rounds = k;
        self
    }

    fn includes(&self, f: MemoryField) -> bool {
        self.memory_include_fields.contains(&f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRound {
    pub step: u32,
    pub user_prompt: String,
    pub screenshot: Option<ImageRef>,
    pub reasoning: String,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContextItem {
    Text { text: String },
    Image { image: ImageRef },
}

impl ContextItem {
    pub fn text(t: impl Into<String>) -> Self {
        ContextItem::Text { text: t.into() }
    }
}

/// Unbounded store; slicing happens when the context is built.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStore {
    rounds: Vec<MemoryRound>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_round(&mut self, round: MemoryRound) {
        self.rounds.push(round);
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn rounds(&self) -> &[MemoryRound] {
        &self.rounds
    }

    /// The most recent `memory_rounds` rounds in chronological order, under
    /// a single header item. Empty when no round is selected.
    pub fn build_context(&self, cfg: &MemoryConfig) -> Vec<ContextItem> {
        let k = (cfg.memory_rounds as usize).min(self.rounds.len());
        if k == 0 {
            return Vec::new();
        }
        let mut out = vec![ContextItem::text(format!("## {HISTORY_HEADER}"))];
        for r in &self.rounds[self.rounds.len() - k..] {
            out.extend(render_round(r, cfg));
        }
        out
    }
}

fn render_round(r: &MemoryRound, cfg: &MemoryConfig) -> Vec<ContextItem> {
    let mut items = Vec::new();
    let mut text = format!("### Step {}", r.step);
    for f in MemoryField::ALL {
        if !cfg.includes(f) {
            continue;
        }
        match f {
            MemoryField::UserPrompt => {
                text.push_str("\nUser: ");
                text.push_str(&r.user_prompt);
            }
            MemoryField::Screenshot => {
                if cfg.memory_format == MemoryFormat::TextOnly {
                    continue;
                }
                if let Some(img) = &r.screenshot {
                    items.push(ContextItem::Text { text: std::mem::take(&mut text) });
                    items.push(ContextItem::Image { image: img.clone() });
                }
            }
            MemoryField::Reasoning => {
                text.push_str("\nReasoning: ");
                text.push_str(&r.reasoning);
            }
            MemoryField::Action => {
                text.push_str("\nAction: ");
                text.push_str(&r.action);
            }
        }
    }
    let text = text.trim_start_matches('\n').to_string();
    if !text.is_empty() {
        items.push(ContextItem::Text { text });
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(step: u32) -> MemoryRound {
        MemoryRound {
            step,
            user_prompt: format!("observe {step}"),
            screenshot: Some(ImageRef {
                digest: format!("{step:064}"),
                width: 2,
                height: 2,
                png_base64: String::new(),
            }),
            reasoning: "go".into(),
            action: "press_key(ArrowUp)".into(),
        }
    }

    fn store(n: u32) -> MemoryStore {
        let mut s = MemoryStore::new();
        (1..=n).for_each(|i| s.record_round(round(i)));
        s
    }

    #[test]
    fn slices_latest_rounds_in_order() {
        let s = store(5);
        let ctx = s.build_context(&MemoryConfig::default().with_rounds(2));
        let steps: Vec<&str> = ctx
            .iter()
            .filter_map(|c| match c {
                ContextItem::Text { text } if text.starts_with("### Step") => Some(&text[..10]),
                _ => None,
            })
            .collect();
        assert_eq!(steps, ["### Step 4", "### Step 5"]);
        assert!(s.build_context(&MemoryConfig::default()).is_empty());
    }

    #[test]
    fn text_only_and_field_filter_drop_images() {
        let s = store(3);
        let text_only = MemoryConfig {
            memory_rounds: 3,
            memory_format: MemoryFormat::TextOnly,
            ..MemoryConfig::default()
        };
        assert!(!s.build_context(&text_only).iter().any(|c| matches!(c, ContextItem::Image { .. })));
        let no_shot = MemoryConfig {
            memory_rounds: 3,
            memory_include_fields: vec![MemoryField::Action],
            ..MemoryConfig::default()
        };
        let ctx = s.build_context(&no_shot);
        assert!(!ctx.iter().any(|c| matches!(c, ContextItem::Image { .. })));
        assert_eq!(ctx.len(), 4);
    }

    #[test]
    fn deeper_context_extends_shallower_one() {
        let s = store(4);
        for k in 0..4 {
            let a = s.build_context(&MemoryConfig::default().with_rounds(k));
            let b = s.build_context(&MemoryConfig::default().with_rounds(k + 1));
            let a = a.get(1..).unwrap_or(&[]);
            assert!(b[1..].ends_with(a), "k={k}");
        }
    }
}
