//! Structured-output schemas and the validator that turns raw model text into
//! a [`ReviewOutput`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Kind of a single output field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Integer,
    IntegerInSet { values: Vec<i64> },
    IntegerInRange { lo: i64, hi: i64 },
    ListOfText,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Text => f.write_str("string"),
            FieldKind::Integer => f.write_str("integer"),
            FieldKind::IntegerInSet { values } => {
                f.write_str("integer, one of [")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            FieldKind::IntegerInRange { lo, hi } => write!(f, "integer from {lo} to {hi}"),
            FieldKind::ListOfText => f.write_str("list of strings"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Text fields that must not be empty (e.g. `reasoning`).
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub nonempty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("output schema has no fields")]
    Empty,
    #[error("duplicate output field `{0}`")]
    DuplicateField(String),
    #[error("field `{0}`: integer set is empty")]
    EmptySet(String),
    #[error("field `{0}`: range is empty")]
    EmptyRange(String),
}

/// Ordered list of output fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldSpec>", into = "Vec<FieldSpec>")]
pub struct OutputSchema {
    fields: Vec<FieldSpec>,
}

impl TryFrom<Vec<FieldSpec>> for OutputSchema {
    type Error = SchemaError;

    fn try_from(fields: Vec<FieldSpec>) -> Result<Self, Self::Error> {
        OutputSchema::new(fields)
    }
}

impl From<OutputSchema> for Vec<FieldSpec> {
    fn from(s: OutputSchema) -> Self {
        s.fields
    }
}

impl OutputSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self, SchemaError> {
        if fields.is_empty() {
            return Err(SchemaError::Empty);
        }
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(SchemaError::DuplicateField(f.name.clone()));
            }
            match &f.kind {
                FieldKind::IntegerInSet { values } if values.is_empty() => {
                    return Err(SchemaError::EmptySet(f.name.clone()))
                }
                FieldKind::IntegerInRange { lo, hi } if lo > hi => {
                    return Err(SchemaError::EmptyRange(f.name.clone()))
                }
                _ => {}
            }
        }
        Ok(Self { fields })
    }

    /// Shorthand for building schemas from `(name, kind)` pairs.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (S, FieldKind)>,
        S: Into<String>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, kind)| FieldSpec {
                    name: name.into(),
                    kind,
                    nonempty: false,
                })
                .collect(),
        )
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub(crate) fn set_nonempty(&mut self, name: &str) {
        if let Some(f) = self.fields.iter_mut().find(|f| f.name == name) {
            f.nonempty = true;
        }
    }

    /// One line per field, used in prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for f in &self.fields {
            out.push_str(&format!("- \"{}\": {}", f.name, f.kind));
            if f.nonempty {
                out.push_str(" (nonempty)");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Integer(i64),
    Text(String),
    List(Vec<String>),
}

impl FieldValue {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            FieldValue::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            FieldValue::Integer(v) => Value::from(*v),
            FieldValue::Text(s) => Value::from(s.as_str()),
            FieldValue::List(items) => {
                Value::Array(items.iter().map(|s| Value::from(s.as_str())).collect())
            }
        }
    }

    /// Text stored in a table cell: strings verbatim, integers in decimal,
    /// lists as a compact JSON array.
    pub fn to_cell(&self) -> String {
        match self {
            FieldValue::Integer(v) => v.to_string(),
            FieldValue::Text(s) => s.clone(),
            FieldValue::List(_) => self.to_json().to_string(),
        }
    }
}

/// One agent's validated result for one item.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReviewOutput {
    pub fields: BTreeMap<String, FieldValue>,
}

impl ReviewOutput {
    pub fn get(&self, name: &str) -> Option<&FieldValue> {
        self.fields.get(name)
    }

    /// Canonical JSON: sorted keys, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> String {
        let map: serde_json::Map<String, Value> = self
            .fields
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        Value::Object(map).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("response is not a JSON object: {0}")]
    NotJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unexpected field `{0}`")]
    UnexpectedField(String),
    #[error("field `{field}` must be {expected}, got {got}")]
    WrongKind {
        field: String,
        expected: String,
        got: String,
    },
    #[error("field `{field}` must not be empty")]
    EmptyText { field: String },
}

/// Removes one surrounding Markdown code fence (with optional info string),
/// leaving anything else untouched.
pub fn strip_code_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    // drop the info string ("json") on the opening line
    match body.find('\n') {
        Some(nl) if body[..nl].bytes().all(|b| b.is_ascii_alphanumeric()) => body[nl + 1..].trim(),
        _ => body.trim(),
    }
}

fn kind_name(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Bool(_) => "a boolean".into(),
        Value::Number(n) => format!("number {n}"),
        Value::String(s) => format!("string {s:?}"),
        Value::Array(_) => "an array".into(),
        Value::Object(_) => "an object".into(),
    }
}

fn check_field(spec: &FieldSpec, v: &Value) -> Result<FieldValue, ValidationError> {
    let wrong = || ValidationError::WrongKind {
        field: spec.name.clone(),
        expected: spec.kind.to_string(),
        got: kind_name(v),
    };
    match &spec.kind {
        FieldKind::Text => {
            let s = v.as_str().ok_or_else(wrong)?;
            if spec.nonempty && s.trim().is_empty() {
                return Err(ValidationError::EmptyText {
                    field: spec.name.clone(),
                });
            }
            Ok(FieldValue::Text(s.into()))
        }
        FieldKind::Integer => v.as_i64().map(FieldValue::Integer).ok_or_else(wrong),
        FieldKind::IntegerInSet { values } => {
            let i = v.as_i64().ok_or_else(wrong)?;
            if values.contains(&i) {
                Ok(FieldValue::Integer(i))
            } else {
                Err(wrong())
            }
        }
        FieldKind::IntegerInRange { lo, hi } => {
            let i = v.as_i64().ok_or_else(wrong)?;
            if (*lo..=*hi).contains(&i) {
                Ok(FieldValue::Integer(i))
            } else {
                Err(wrong())
            }
        }
        FieldKind::ListOfText => {
            let items = v.as_array().ok_or_else(wrong)?;
            items
                .iter()
                .map(|x| x.as_str().map(String::from).ok_or_else(wrong))
                .collect::<Result<Vec<_>, _>>()
                .map(FieldValue::List)
        }
    }
}

/// Parses raw model text and validates it against `schema`.
///
/// The text must be a single JSON object, optionally wrapped in one code
/// fence, whose keys are exactly the schema's fields.
pub fn validate_response(raw: &str, schema: &OutputSchema) -> Result<ReviewOutput, ValidationError> {
    let body = strip_code_fence(raw);
    let value: Value =
        serde_json::from_str(body).map_err(|e| ValidationError::NotJson(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(ValidationError::NotJson(format!("top level is {}", kind_name(&value))));
    };
    let mut fields = BTreeMap::new();
    for spec in schema.fields() {
        let v = map
            .get(&spec.name)
            .ok_or_else(|| ValidationError::MissingField(spec.name.clone()))?;
        fields.insert(spec.name.clone(), check_field(spec, v)?);
    }
    if let Some(extra) = map.keys().find(|k| schema.field(k).is_none()) {
        return Err(ValidationError::UnexpectedField(extra.clone()));
    }
    Ok(ReviewOutput { fields })
}
