//! Extraction of the structured proposal from a free-form model reply.

use serde_json::Value;
use thiserror::Error;

pub const FUNCTION_NAME: &str = "complete_model_spec";
pub const SPEC_FIELD: &str = "model_spec";
pub const DESCRIPTION_FIELD: &str = "model_description";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalReply {
    pub spec_text: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("reply contains no JSON object")]
    NoJson,
    #[error("reply JSON is invalid: {0}")]
    Json(String),
    #[error("reply JSON lacks a non-empty string field `{0}`")]
    MissingField(&'static str),
}

fn fenced_json(text: &str) -> Option<&str> {
    let start = text.find("```json")? + "```json".len();
    let end = text[start..].find("```")? + start;
    Some(text[start..end].trim())
}

fn braced(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Tries the whole text, then a ```json fence, then the outermost braces.
fn find_object(text: &str) -> Result<Value, ReplyError> {
    let trimmed = text.trim();
    let mut last_err = None;
    for candidate in [Some(trimmed), fenced_json(trimmed), braced(trimmed)].into_iter().flatten() {
        match serde_json::from_str::<Value>(candidate) {
            Ok(v) if v.is_object() => return Ok(v),
            Ok(_) => {}
            Err(e) => last_err = Some(e.to_string()),
        }
    }
    match last_err {
        Some(e) if trimmed.contains('{') => Err(ReplyError::Json(e)),
        _ => Err(ReplyError::NoJson),
    }
}

/// Unwraps `{"name": .., "arguments": ..}` where arguments may itself be a
/// JSON string.
fn unwrap_arguments(v: Value) -> Result<Value, ReplyError> {
    match v.get("arguments") {
        Some(Value::String(s)) => serde_json::from_str(s).map_err(|e| ReplyError::Json(e.to_string())),
        Some(obj @ Value::Object(_)) => Ok(obj.clone()),
        _ => Ok(v),
    }
}

fn field(v: &Value, name: &'static str) -> Result<String, ReplyError> {
    v.get(name)
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string)
        .ok_or(ReplyError::MissingField(name))
}

pub fn parse_reply(text: &str) -> Result<ProposalReply, ReplyError> {
    let v = unwrap_arguments(find_object(text)?)?;
    Ok(ProposalReply {
        spec_text: field(&v, SPEC_FIELD)?,
        description: v
            .get(DESCRIPTION_FIELD)
            .and_then(Value::as_str)
            .unwrap_or("")
            .trim()
            .to_string(),
    })
}

/// Reply text the parser accepts, as a scripted model would send it.
pub fn format_reply(spec_text: &str, description: &str) -> String {
    serde_json::json!({ SPEC_FIELD: spec_text, DESCRIPTION_FIELD: description }).to_string()
}
