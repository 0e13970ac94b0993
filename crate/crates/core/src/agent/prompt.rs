//! Prompt assembly with a fixed block order.

use std::collections::BTreeMap;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::memory::{ContextItem, MemoryStore};
use super::{AgentProfile, InterfaceKind};
use crate::canonical::{sha256_hex, to_canonical_string};
use crate::kernel::{Canvas, GameDefinition, RoleDefinition};
use crate::semantic::render_action_list;

/// Flat per-image charge in the input token estimate.
pub const IMAGE_TOKENS: u64 = 258;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplates {
    pub preamble: String,
    pub generalist_addendum: String,
    pub history_header: String,
    pub output_formats: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    /// sha256 of the raw P6 frame.
    pub digest: String,
    pub width: u32,
    pub height: u32,
    /// PNG payload for remote endpoints; excluded from renderings.
    #[serde(default, skip_serializing)]
    pub png_base64: String,
}

impl ImageRef {
    pub fn from_canvas(c: &Canvas) -> Self {
        let png = c.to_png().unwrap_or_default();
        Self {
            digest: sha256_hex(c.to_ppm()),
            width: c.width,
            height: c.height,
            png_base64: base64::engine::general_purpose::STANDARD.encode(png),
        }
    }

    pub fn data_url(&self) -> String {
        format!("data:image/png;base64,{}", self.png_base64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationRef {
    pub step: u32,
    pub text: String,
    pub image: Option<ImageRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub game_rules: String,
    pub role_and_controls: String,
    pub task_instruction: String,
    pub output_format: String,
    pub history: Vec<ContextItem>,
    pub observation: ObservationRef,
}

pub const BLOCK_HEADERS: [&str; 4] = ["# Game Rules", "# Role and Controls", "# Task Instruction", "# Output Format"];

impl PromptBundle {
    /// The four blocks joined in their fixed order.
    pub fn instructions(&self) -> String {
        let bodies = [
            &self.game_rules,
            &self.role_and_controls,
            &self.task_instruction,
            &self.output_format,
        ];
        BLOCK_HEADERS
            .iter()
            .zip(bodies)
            .map(|(h, b)| format!("{h}\n{}", b.trim_end()))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Canonical rendering; images appear by digest only.
    pub fn render(&self) -> String {
        to_canonical_string(self)
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.render())
    }

    fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.history
            .iter()
            .filter_map(|c| match c {
                ContextItem::Image { image } => Some(image),
                ContextItem::Text { .. } => None,
            })
            .chain(self.observation.image.as_ref())
    }

    /// `ceil(bytes / 4)` over all text plus a flat charge per image.
    pub fn input_tokens(&self) -> u64 {
        let mut bytes = self.system.len() + self.instructions().len() + self.observation.text.len();
        for c in &self.history {
            if let ContextItem::Text { text } = c {
                bytes += text.len();
            }
        }
        (bytes as u64).div_ceil(4) + IMAGE_TOKENS * self.images().count() as u64
    }

    /// Chat-completions message list: system, instructions, history, then
    /// the current observation.
    pub fn messages(&self) -> Value {
        let mut content = vec![json!({"type": "text", "text": self.instructions()})];
        for c in &self.history {
            content.push(match c {
                ContextItem::Text { text } => json!({"type": "text", "text": text}),
                ContextItem::Image { image } => json!({"type": "image_url", "image_url": {"url": image.data_url()}}),
            });
        }
        content.push(json!({"type": "text", "text": self.observation.text}));
        if let Some(img) = &self.observation.image {
            content.push(json!({"type": "image_url", "image_url": {"url": img.data_url()}}));
        }
        json!([
            {"role": "system", "content": self.system},
            {"role": "user", "content": content},
        ])
    }
}

pub fn role_block(profile: &AgentProfile, templates: &PromptTemplates, role: &RoleDefinition) -> String {
    match profile.interface {
        InterfaceKind::ComputerUse => format!("{}\n\n{}", role.prompt.trim_end(), role.controls_prompt.trim_end()),
        InterfaceKind::Generalist => format!(
            "{}\n\n{}\n\n{}",
            role.prompt.trim_end(),
            templates.generalist_addendum.trim_end(),
            render_action_list(&role.semantic)
        ),
    }
}

pub fn assemble_prompt(
    profile: &AgentProfile,
    templates: &PromptTemplates,
    game: &GameDefinition,
    role: &RoleDefinition,
    task_instruction: &str,
    store: &MemoryStore,
    observation: ObservationRef,
) -> PromptBundle {
    PromptBundle {
        system: templates.preamble.clone(),
        game_rules: game.rules_text.clone(),
        role_and_controls: role_block(profile, templates, role),
        task_instruction: task_instruction.to_string(),
        output_format: profile.format_block(templates),
        history: store.build_context(&profile.memory),
        observation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::memory::MemoryRound;
    use crate::registry::Registry;

    fn obs(step: u32) -> ObservationRef {
        ObservationRef {
            step,
            text: format!("Step {step}. Current screen attached."),
            image: Some(ImageRef::from_canvas(&Canvas::new(4, 4))),
        }
    }

    fn bundle(profile: &str, game: &str, store: &MemoryStore) -> PromptBundle {
        let reg = Registry::bundled();
        let p = reg.profile(profile).unwrap();
        let g = reg.game(game).unwrap();
        let task = &reg.tasks(game)[0];
        assemble_prompt(p, &reg.templates, &g, &g.roles[0], &task.instruction, store, obs(1))
    }

    #[test]
    fn block_order_and_role_variants() {
        let b = bundle("qwen-like", "g2048", &MemoryStore::new());
        let text = b.instructions();
        let pos: Vec<usize> = BLOCK_HEADERS.iter().map(|h| text.find(h).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(b.role_and_controls.contains("REGISTERED ACTIONS (Semantic Controls)."));
        assert!(b.history.is_empty());
        let cua = bundle("qwen-like-cua", "lane-runner", &MemoryStore::new());
        assert!(cua.role_and_controls.contains("ACTION SPACE (ONLY LEGAL ACTIONS):"));
    }

    #[test]
    fn rendering_is_deterministic_and_tokens_grow_with_history() {
        let empty = MemoryStore::new();
        assert_eq!(bundle("qwen-like", "snake", &empty).render(), bundle("qwen-like", "snake", &empty).render());
        let mut store = MemoryStore::new();
        store.record_round(MemoryRound {
            step: 0,
            user_prompt: "Step 0.".into(),
            screenshot: obs(0).image,
            reasoning: "turn".into(),
            action: "move_up".into(),
        });
        let a = bundle("qwen-like", "snake", &empty);
        let b = bundle("qwen-like", "snake", &store);
        assert!(b.input_tokens() > a.input_tokens() + IMAGE_TOKENS);
        assert_ne!(a.hash(), b.hash());
        assert!(!a.render().contains("base64"));
    }
}
