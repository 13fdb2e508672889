//! Application definitions as submitted by providers.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::AppId;
use crate::registry::MessageRegistry;
use crate::violation::Violation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub field: String,
    pub equals: Value,
}

/// A handled message the application actively wants to receive, optionally
/// narrowed by equality constraints on payload fields.
///
/// Constraints rank recommendations; they never filter deliveries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub message_name: String,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl Intent {
    pub fn on(message: impl Into<String>) -> Self {
        Self {
            message_name: message.into(),
            constraints: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicationDefinition {
    pub app_id: AppId,
    pub display_name: String,
    pub provider_name: String,
    pub endpoint: String,
    #[serde(default)]
    pub fired: BTreeSet<String>,
    #[serde(default)]
    pub handled: BTreeSet<String>,
    #[serde(default)]
    pub intents: Vec<Intent>,
}

impl ApplicationDefinition {
    pub fn has_intent_on(&self, message: &str) -> bool {
        self.intents.iter().any(|i| i.message_name == message)
    }
}

/// Every fired/handled/intent message must be registered; every intent must
/// name a handled message and constrain only existing fields with literals of
/// the right type.
pub fn validate_application(
    def: &ApplicationDefinition,
    registry: &MessageRegistry,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for name in def.fired.iter().chain(def.handled.iter()) {
        if registry.message(name).is_none() {
            out.push(Violation::UnknownMessage {
                message: name.clone(),
            });
        }
    }
    for intent in &def.intents {
        if !def.handled.contains(&intent.message_name) {
            out.push(Violation::IntentNotHandled {
                message: intent.message_name.clone(),
            });
        }
        let Some(msg) = registry.message(&intent.message_name) else {
            if !def.handled.contains(&intent.message_name) {
                out.push(Violation::UnknownMessage {
                    message: intent.message_name.clone(),
                });
            }
            continue;
        };
        for c in &intent.constraints {
            match msg.schema.field_type(&c.field) {
                None => out.push(Violation::IntentUnknownField {
                    message: intent.message_name.clone(),
                    field: c.field.clone(),
                }),
                Some(ty) if !ty.admits(&c.equals) => out.push(Violation::LiteralType {
                    field: c.field.clone(),
                    expected: ty,
                }),
                Some(_) => {}
            }
        }
    }
    out
}
