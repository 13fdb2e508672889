//! Named messages and their flat record schemas.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::ids::AppId;
use crate::violation::Violation;

pub const MAX_FIELDS: usize = 64;
pub const MAX_NAME_SEGMENTS: usize = 5;

/// A message payload: field name to JSON value.
pub type Payload = BTreeMap<String, Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveType {
    String,
    Integer,
    Decimal,
    Boolean,
    Timestamp,
}

impl PrimitiveType {
    pub const ALL: [PrimitiveType; 5] = [
        PrimitiveType::String,
        PrimitiveType::Integer,
        PrimitiveType::Decimal,
        PrimitiveType::Boolean,
        PrimitiveType::Timestamp,
    ];

    /// Whether `value` is a well-formed instance of this type.
    ///
    /// Integers are JSON integers that fit in 64 bits, decimals are any JSON
    /// number and timestamps are RFC 3339 strings.
    pub fn admits(self, value: &Value) -> bool {
        match self {
            PrimitiveType::String => value.is_string(),
            PrimitiveType::Integer => value.is_i64() || value.is_u64(),
            PrimitiveType::Decimal => value.is_number(),
            PrimitiveType::Boolean => value.is_boolean(),
            PrimitiveType::Timestamp => value
                .as_str()
                .is_some_and(|s| chrono::DateTime::parse_from_rfc3339(s).is_ok()),
        }
    }
}

impl fmt::Display for PrimitiveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrimitiveType::String => "string",
            PrimitiveType::Integer => "integer",
            PrimitiveType::Decimal => "decimal",
            PrimitiveType::Boolean => "boolean",
            PrimitiveType::Timestamp => "timestamp",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Field {
    pub name: String,
    pub ty: PrimitiveType,
}

/// Ordered field list. Kept as a list rather than a map so that duplicate
/// names survive decoding and can be reported by [`validate_schema`].
///
/// Equality ignores field order.
#[derive(Clone, Debug, Default)]
pub struct MessageSchema {
    fields: Vec<Field>,
}

impl MessageSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, ty: PrimitiveType) -> Self {
        self.fields.push(Field {
            name: name.into(),
            ty,
        });
        self
    }

    pub fn from_fields(fields: Vec<Field>) -> Self {
        Self { fields }
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field_type(&self, name: &str) -> Option<PrimitiveType> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.ty)
    }

    fn sorted(&self) -> Vec<&Field> {
        let mut v: Vec<&Field> = self.fields.iter().collect();
        v.sort();
        v
    }
}

impl PartialEq for MessageSchema {
    fn eq(&self, other: &Self) -> bool {
        self.sorted() == other.sorted()
    }
}

impl Eq for MessageSchema {}

impl Serialize for MessageSchema {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.fields.len()))?;
        for f in &self.fields {
            map.serialize_entry(&f.name, &f.ty)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for MessageSchema {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FieldsVisitor;

        impl<'de> Visitor<'de> for FieldsVisitor {
            type Value = MessageSchema;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of field name to primitive type")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut fields = Vec::new();
                while let Some((name, ty)) = access.next_entry::<String, PrimitiveType>()? {
                    fields.push(Field { name, ty });
                }
                Ok(MessageSchema { fields })
            }
        }

        deserializer.deserialize_map(FieldsVisitor)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

pub fn validate_schema(schema: &MessageSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    if schema.fields.len() > MAX_FIELDS {
        out.push(Violation::TooManyFields {
            count: schema.fields.len(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for f in &schema.fields {
        if !is_identifier(&f.name) {
            out.push(Violation::FieldNamePattern {
                field: f.name.clone(),
            });
        }
        if !seen.insert(f.name.as_str()) && reported.insert(f.name.as_str()) {
            out.push(Violation::DuplicateField {
                field: f.name.clone(),
            });
        }
    }
    out
}

/// Dot-separated name with 1 to 5 identifier segments.
pub fn validate_message_name(name: &str) -> Option<Violation> {
    let segments = name.split('.').count();
    let ok = segments <= MAX_NAME_SEGMENTS && name.split('.').all(is_identifier);
    (!ok).then(|| Violation::MessageNamePattern { name: name.into() })
}

/// Exact conformance: same field set, every value of the declared type.
pub fn conforms(payload: &Payload, schema: &MessageSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    for f in &schema.fields {
        match payload.get(&f.name) {
            None => out.push(Violation::MissingField {
                field: f.name.clone(),
            }),
            Some(v) if !f.ty.admits(v) => out.push(Violation::WrongType {
                field: f.name.clone(),
                expected: f.ty,
            }),
            Some(_) => {}
        }
    }
    for key in payload.keys() {
        if schema.field_type(key).is_none() {
            out.push(Violation::UnknownField { field: key.clone() });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedMessage {
    pub name: String,
    pub schema: MessageSchema,
    pub owner: AppId,
}

/// One delivery from a producer to a consumer's inbox.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageInstance {
    pub message_name: String,
    pub payload: Payload,
    pub comm_id: String,
    pub producer: AppId,
}
