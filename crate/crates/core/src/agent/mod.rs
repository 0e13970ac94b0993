//! Decision sources behind one interface: remote models, scripted oracles,
//! random and replay policies.

pub mod memory;
pub mod prompt;
pub mod remote;
pub mod scripted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::NormalizedAction;
use crate::kernel::RoleDefinition;
use crate::parse::OutputFormat;
use crate::snapshot::StateSnapshot;

pub use crate::pipeline::InterfaceKind;
pub use memory::{ContextItem, MemoryConfig, MemoryField, MemoryFormat, MemoryRound, MemoryStore};
pub use prompt::{assemble_prompt, ImageRef, PromptBundle, PromptTemplates};

pub const DEFAULT_TIMEOUT_S: u64 = 120;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("profile {profile}: {message}")]
    InvalidProfile { profile: String, message: String },
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("endpoint timed out after {0} s")]
    Timeout(u64),
    #[error("endpoint returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("malformed endpoint reply: {0}")]
    BadReply(String),
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer credential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Oracle,
    Random,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default)]
    pub seed: u64,
    /// Synthetic inference latency reported for every decision.
    #[serde(default)]
    pub latency_ms: u64,
    /// Replay script; the last entry repeats once exhausted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<NormalizedAction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub agent_id: String,
    #[serde(alias = "interface_kind")]
    pub interface: InterfaceKind,
    #[serde(alias = "output_format_kind")]
    pub output_format: OutputFormat,
    /// A template name from `output_formats`, or literal block text.
    pub output_format_block: String,
    #[serde(default, alias = "model_endpoint", skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Endpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub memory: MemoryConfig,
}

impl AgentProfile {
    pub fn is_scripted(&self) -> bool {
        self.output_format == OutputFormat::Scripted
    }

    pub fn check(&self, templates: &PromptTemplates) -> Result<(), AgentError> {
        let bad = |m: &str| AgentError::InvalidProfile {
            profile: self.agent_id.clone(),
            message: m.to_string(),
        };
        if self.agent_id.trim().is_empty() {
            return Err(bad("empty agent_id"));
        }
        if self.is_scripted() {
            if self.endpoint.is_some() {
                return Err(bad("scripted profiles take no endpoint"));
            }
            let Some(p) = &self.policy else {
                return Err(bad("scripted profiles need a policy"));
            };
            if p.kind == PolicyKind::Replay && p.actions.is_empty() {
                return Err(bad("replay policy needs actions"));
            }
        } else {
            if self.endpoint.is_none() {
                return Err(bad("remote profiles need an endpoint"));
            }
            if self.policy.is_some() {
                return Err(bad("remote profiles take no policy"));
            }
        }
        if self.format_block(templates).trim().is_empty() {
            return Err(bad("empty output_format_block"));
        }
        Ok(())
    }

    pub fn format_block(&self, templates: &PromptTemplates) -> String {
        templates
            .output_formats
            .get(&self.output_format_block)
            .cloned()
            .unwrap_or_else(|| self.output_format_block.clone())
    }

    /// Latency charged per decision by scripted policies.
    pub fn synthetic_latency_ms(&self) -> u64 {
        self.policy.as_ref().map_or(0, |p| p.latency_ms)
    }
}

/// What the harness knows at decision time. Scripted policies read the
/// snapshot; remote agents only see the prompt bundle.
pub struct DecisionInput<'a> {
    pub step: u32,
    pub format: OutputFormat,
    pub snapshot: &'a StateSnapshot,
    pub role: &'a RoleDefinition,
    pub bundle: &'a PromptBundle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Raw reply text, parsed under the profile's output format.
    pub text: String,
    pub latency_ms: u64,
    /// Set when the decision failed before producing a reply; the step
    /// counts as a missing tool call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub trait Agent: Send {
    fn decide(&mut self, input: &DecisionInput<'_>) -> Decision;
}

/// Builds the decision source for one run. `run_seed` decorrelates seeded
/// policies across runs.
pub fn build_agent(profile: &AgentProfile, run_seed: u64) -> Result<Box<dyn Agent>, AgentError> {
    match (&profile.policy, &profile.endpoint) {
        (Some(policy), None) => Ok(scripted::build(profile.interface, policy, run_seed)),
        (None, Some(endpoint)) => Ok(Box::new(remote::RemoteAgent::new(endpoint.clone(), profile.interface)?)),
        _ => Err(AgentError::InvalidProfile {
            profile: profile.agent_id.clone(),
            message: "needs exactly one of policy or endpoint".into(),
        }),
    }
}

/// Profiles keyed by id, as listed in a profile file.
pub fn parse_profiles(text: &str) -> Result<BTreeMap<String, AgentProfile>, serde_yaml::Error> {
    let list: Vec<AgentProfile> = serde_yaml::from_str(text)?;
    Ok(list.into_iter().map(|p| (p.agent_id.clone(), p)).collect())
}
