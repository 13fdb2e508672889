//! Declarative adapters between named messages.
//!
//! An adapter is an ordered list of `copy` and `const` rules. Rules carry no
//! expressions, so applying a valid adapter to a conforming payload is total
//! and deterministic, and any party holding the definition (broker, SDK,
//! test oracle) computes the same output.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::schema::{MessageSchema, Payload};
use crate::violation::Violation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MappingRule {
    Copy { source: String, target: String },
    Const { target: String, value: Value },
}

impl MappingRule {
    pub fn copy(source: impl Into<String>, target: impl Into<String>) -> Self {
        MappingRule::Copy {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn constant(target: impl Into<String>, value: Value) -> Self {
        MappingRule::Const {
            target: target.into(),
            value,
        }
    }

    pub fn target(&self) -> &str {
        match self {
            MappingRule::Copy { target, .. } | MappingRule::Const { target, .. } => target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterDefinition {
    pub adapter_id: String,
    pub from_message: String,
    pub to_message: String,
    pub rules: Vec<MappingRule>,
}

/// Checks `adapter` against the schemas of its endpoint messages.
pub fn validate_adapter(
    adapter: &AdapterDefinition,
    from: &MessageSchema,
    to: &MessageSchema,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if adapter.from_message == adapter.to_message {
        out.push(Violation::SameMessage {
            message: adapter.from_message.clone(),
        });
    }

    let mut produced: BTreeMap<&str, usize> = BTreeMap::new();
    for rule in &adapter.rules {
        let target = rule.target();
        let Some(target_ty) = to.field_type(target) else {
            out.push(Violation::UnknownTargetField {
                field: target.into(),
            });
            continue;
        };
        *produced.entry(target).or_default() += 1;
        match rule {
            MappingRule::Copy { source, target } => match from.field_type(source) {
                None => out.push(Violation::UnknownSourceField {
                    field: source.clone(),
                }),
                Some(source_ty) if source_ty != target_ty => out.push(Violation::TypeMismatch {
                    source_field: source.clone(),
                    target_field: target.clone(),
                    from: source_ty,
                    to: target_ty,
                }),
                Some(_) => {}
            },
            MappingRule::Const { target, value } => {
                if !target_ty.admits(value) {
                    out.push(Violation::LiteralType {
                        field: target.clone(),
                        expected: target_ty,
                    });
                }
            }
        }
    }

    for field in to.fields() {
        match produced.get(field.name.as_str()).copied().unwrap_or(0) {
            0 => out.push(Violation::UncoveredTargetField {
                field: field.name.clone(),
            }),
            1 => {}
            _ => out.push(Violation::TargetCoveredTwice {
                field: field.name.clone(),
            }),
        }
    }
    out
}

/// Executes the rules of `adapter` on `payload` without consulting schemas.
///
/// Fails only when a `copy` rule reads a field the payload lacks.
pub fn apply_rules(adapter: &AdapterDefinition, payload: &Payload) -> Result<Payload, Violation> {
    let mut out = Payload::new();
    for rule in &adapter.rules {
        match rule {
            MappingRule::Copy { source, target } => {
                let v = payload.get(source).ok_or_else(|| Violation::MissingField {
                    field: source.clone(),
                })?;
                out.insert(target.clone(), v.clone());
            }
            MappingRule::Const { target, value } => {
                out.insert(target.clone(), value.clone());
            }
        }
    }
    Ok(out)
}
