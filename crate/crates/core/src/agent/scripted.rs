//! Scripted decision sources. They read the snapshot directly and always
//! emit legal calls.

use serde_json::{Map, Value};

use super::{Agent, Decision, DecisionInput, InterfaceKind, PolicyKind, PolicySpec};
use crate::control::NormalizedAction;
use crate::kernel::games::oracle_action;
use crate::kernel::RoleDefinition;
use crate::parse::{render_call, OutputFormat, ToolCall};
use crate::pipeline::{action_call, semantic_call_for};
use crate::rng::{mix, SplitMix64};
use crate::semantic::bind_arguments;

fn wait() -> NormalizedAction {
    NormalizedAction::Wait { duration_ms: None }
}

/// Renders `a` as the call the given interface would make.
pub fn call_for(interface: InterfaceKind, a: &NormalizedAction, role: &RoleDefinition) -> ToolCall {
    match interface {
        InterfaceKind::ComputerUse => action_call(a),
        InterfaceKind::Generalist => semantic_call_for(a, role)
            .or_else(|| semantic_call_for(&wait(), role))
            .unwrap_or_else(|| ToolCall::new("wait", Map::new())),
    }
}

fn reply(interface: InterfaceKind, a: &NormalizedAction, role: &RoleDefinition, latency_ms: u64) -> Decision {
    let call = call_for(interface, a, role);
    Decision {
        text: render_call(OutputFormat::Scripted, &call).unwrap_or_default(),
        latency_ms,
        error: None,
    }
}

/// Every (semantic call, action) pair a role exposes, cells expanded.
pub fn legal_moves(role: &RoleDefinition) -> Vec<(ToolCall, NormalizedAction)> {
    let mut out = Vec::new();
    for c in role.semantic.controls() {
        if c.required_args.is_empty() {
            let call = ToolCall::new(c.id.clone(), Map::new());
            if let Ok(a) = bind_arguments(c, &call) {
                out.push((call, a));
            }
        } else if let (Some(cells), [arg]) = (&c.cell_bindings, c.required_args.as_slice()) {
            for cell in cells.table().keys() {
                let mut args = Map::new();
                args.insert(arg.clone(), Value::String(cell.clone()));
                let call = ToolCall::new(c.id.clone(), args);
                if let Ok(a) = bind_arguments(c, &call) {
                    out.push((call, a));
                }
            }
        }
    }
    out
}

pub struct OracleAgent {
    interface: InterfaceKind,
    latency_ms: u64,
}

impl Agent for OracleAgent {
    fn decide(&mut self, input: &DecisionInput<'_>) -> Decision {
        let a = oracle_action(input.snapshot).unwrap_or_else(wait);
        reply(self.interface, &a, input.role, self.latency_ms)
    }
}

pub struct RandomAgent {
    interface: InterfaceKind,
    latency_ms: u64,
    rng: SplitMix64,
}

impl Agent for RandomAgent {
    fn decide(&mut self, input: &DecisionInput<'_>) -> Decision {
        let moves = legal_moves(input.role);
        let Some((call, a)) = self.rng.pick(&moves) else {
            return reply(self.interface, &wait(), input.role, self.latency_ms);
        };
        let call = match self.interface {
            InterfaceKind::Generalist => call.clone(),
            InterfaceKind::ComputerUse => action_call(a),
        };
        Decision {
            text: render_call(OutputFormat::Scripted, &call).unwrap_or_default(),
            latency_ms: self.latency_ms,
            error: None,
        }
    }
}

pub struct ReplayAgent {
    interface: InterfaceKind,
    latency_ms: u64,
    actions: Vec<NormalizedAction>,
    next: usize,
}

impl Agent for ReplayAgent {
    fn decide(&mut self, input: &DecisionInput<'_>) -> Decision {
        let a = self
            .actions
            .get(self.next.min(self.actions.len().saturating_sub(1)))
            .cloned()
            .unwrap_or_else(wait);
        self.next += 1;
        reply(self.interface, &a, input.role, self.latency_ms)
    }
}

pub fn build(interface: InterfaceKind, policy: &PolicySpec, run_seed: u64) -> Box<dyn Agent> {
    let latency_ms = policy.latency_ms;
    match policy.kind {
        PolicyKind::Oracle => Box::new(OracleAgent { interface, latency_ms }),
        PolicyKind::Random => Box::new(RandomAgent {
            interface,
            latency_ms,
            rng: SplitMix64::new(mix(policy.seed, run_seed)),
        }),
        PolicyKind::Replay => Box::new(ReplayAgent {
            interface,
            latency_ms,
            actions: policy.actions.clone(),
            next: 0,
        }),
    }
}
