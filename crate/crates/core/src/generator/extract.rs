use serde_json::Value;
use thiserror::Error;

use crate::objective::{validate, ObjectiveError, ObjectiveSpec, Violation};

/// Candidate object starts examined per response.
const MAX_STARTS: usize = 256;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("no JSON objective object found in response")]
    NoObjective,
    #[error("objective did not parse: {0}")]
    Parse(ObjectiveError),
    #[error("objective violates restrictions: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Balanced `{…}` spans in order of their opening brace. Braces inside JSON
/// strings are ignored.
pub fn find_json_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut starts = 0;
    let mut i = 0;
    while i < bytes.len() && starts < MAX_STARTS {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        starts += 1;
        match balanced_end(&bytes[i..]) {
            Some(len) => {
                out.push(&text[i..i + len]);
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

fn balanced_end(s: &[u8]) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (k, &c) in s.iter().enumerate() {
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(k + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First JSON object carrying a `components` key, parsed and validated.
pub fn extract_objective(response: &str) -> Result<ObjectiveSpec, ExtractError> {
    for span in find_json_objects(response) {
        let Ok(value) = serde_json::from_str::<Value>(span) else {
            continue;
        };
        if value.get("components").is_none() {
            continue;
        }
        let spec = crate::objective::parse::from_value(&value).map_err(ExtractError::Parse)?;
        let violations = validate(&spec);
        if !violations.is_empty() {
            return Err(ExtractError::Invalid(violations));
        }
        return Ok(spec);
    }
    Err(ExtractError::NoObjective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::builtin;

    #[test]
    fn prose_wrapped() {
        let text = format!(
            "Sure. Thinking about {{braces}} first.\nHere it is:\n```json\n{}\n```\nDone.",
            builtin("distance").unwrap().to_json_pretty()
        );
        assert_eq!(extract_objective(&text).unwrap(), builtin("distance").unwrap());
    }

    #[test]
    fn refusal() {
        assert_eq!(extract_objective("I cannot help"), Err(ExtractError::NoObjective));
    }

    #[test]
    fn six_components_rejected() {
        let c = r#"{"form":"LoadQuadratic"}"#;
        let text = format!(r#"ok {{"components":[{c},{c},{c},{c},{c},{c}],"weights":[1,1,1,1,1,1]}}"#);
        assert!(matches!(extract_objective(&text), Err(ExtractError::Parse(ObjectiveError::ComponentCount(6)))));
    }

    #[test]
    fn braces_in_strings() {
        let spans = find_json_objects(r#"x {"a":"}{"} y {"b":"\"}"}"#);
        assert_eq!(spans, vec![r#"{"a":"}{"}"#, r#"{"b":"\"}"}"#]);
        assert!(find_json_objects("{{{").is_empty());
    }
}
