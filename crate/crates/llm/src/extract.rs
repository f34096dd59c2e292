use serde_json::Value;

use crate::LlmError;

/// Blanks out lines that open or close a Markdown code fence, keeping byte
/// offsets stable so reported spans still index into the original text.
fn blank_fences(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            out.extend(line.chars().map(|c| if c == '\n' { '\n' } else { ' ' }));
        } else {
            out.push_str(line);
        }
    }
    out
}

/// Byte spans of balanced top-level `{...}` / `[...]` regions, in order of
/// appearance. Brackets inside double-quoted strings are ignored once a region
/// is open; outside regions quotes are ordinary prose.
pub fn json_regions(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut regions = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let Some(open) = bytes[start..].iter().position(|b| *b == b'{' || *b == b'[') else {
            break;
        };
        let open = start + open;
        match close_of(bytes, open) {
            Some(end) => {
                regions.push((open, end));
                start = end;
            }
            None => start = open + 1,
        }
    }
    regions
}

fn close_of(bytes: &[u8], open: usize) -> Option<usize> {
    let mut stack = vec![bytes[open]];
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open + 1) {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => stack.push(b),
            b'}' | b']' => {
                let want = if b == b'}' { b'{' } else { b'[' };
                if stack.pop() != Some(want) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Pulls the JSON payload out of free-form model output.
///
/// Code fences are stripped, balanced regions located, and the last region
/// that parses is returned. If regions exist but none parse, the error
/// carries the span of the last one.
pub fn extract_json_payload(text: &str) -> Result<Value, LlmError> {
    let cleaned = blank_fences(text);
    let regions = json_regions(&cleaned);
    let Some(&last) = regions.last() else {
        return Err(LlmError::Unparseable { reason: "no balanced JSON object or array found".into(), span: None });
    };
    let mut first_error = None;
    for &(a, b) in regions.iter().rev() {
        match serde_json::from_str::<Value>(&cleaned[a..b]) {
            Ok(v) => return Ok(v),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let snippet: String = cleaned[last.0..last.1].chars().take(80).collect();
    Err(LlmError::Unparseable {
        reason: format!("region `{snippet}` is not valid JSON: {}", first_error.expect("at least one region")),
        span: Some(last),
    })
}
