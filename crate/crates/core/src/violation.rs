use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::PrimitiveType;

/// A single broken validation rule. Validators return every violation they
/// find rather than stopping at the first one.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    #[error("duplicate field {field}")]
    DuplicateField { field: String },
    #[error("field {field} does not match name pattern [a-z][a-z0-9_]*")]
    FieldNamePattern { field: String },
    #[error("schema has {count} fields, at most 64 allowed")]
    TooManyFields { count: usize },
    #[error("message name {name} does not match name pattern")]
    MessageNamePattern { name: String },

    #[error("adapter id {id:?} must be 1-128 characters of [A-Za-z0-9_.-]")]
    AdapterIdPattern { id: String },
    #[error("adapter maps {message} onto itself")]
    SameMessage { message: String },
    #[error("uncovered target field {field}")]
    UncoveredTargetField { field: String },
    #[error("target field {field} produced by more than one rule")]
    TargetCoveredTwice { field: String },
    #[error("rule targets unknown field {field}")]
    UnknownTargetField { field: String },
    #[error("copy rule reads unknown source field {field}")]
    UnknownSourceField { field: String },
    #[error("type mismatch: {source_field} is {from}, {target_field} is {to}")]
    TypeMismatch {
        source_field: String,
        target_field: String,
        from: PrimitiveType,
        to: PrimitiveType,
    },
    #[error("literal for {field} is not a {expected}")]
    LiteralType {
        field: String,
        expected: PrimitiveType,
    },

    #[error("missing {field}")]
    MissingField { field: String },
    #[error("unknown field {field}")]
    UnknownField { field: String },
    #[error("value of {field} is not a {expected}")]
    WrongType {
        field: String,
        expected: PrimitiveType,
    },

    #[error("intent on {message} which is not handled")]
    IntentNotHandled { message: String },
    #[error("intent constraint on unknown field {field} of {message}")]
    IntentUnknownField { message: String, field: String },
    #[error("message {message} is not registered")]
    UnknownMessage { message: String },
}
