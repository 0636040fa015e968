use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JsonError {
    #[error("no JSON found in agent output")]
    NoJsonFound,
    #[error("JSON syntax error at byte {position}: {message}")]
    JsonSyntax { position: usize, message: String },
}

/// The last fenced code block as `(language tag, body)`.
pub fn last_fenced_block(text: &str) -> Option<(&str, &str)> {
    let mut last = None;
    let mut pos = 0;
    while let Some(found) = text[pos..].find("```") {
        let open = pos + found + 3;
        let Some(close_rel) = text[open..].find("```") else { break };
        let close = open + close_rel;
        let newline = text[open..close].find('\n').map(|i| open + i);
        let (lang, body) = match newline {
            Some(nl) => (text[open..nl].trim(), &text[nl + 1..close]),
            None => split_inline_tag(&text[open..close]),
        };
        last = Some((lang, body));
        pos = close + 3;
    }
    last
}

fn split_inline_tag(content: &str) -> (&str, &str) {
    let tag_len = content
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        .unwrap_or(content.len());
    if tag_len > 0 && content[tag_len..].starts_with(char::is_whitespace) {
        (&content[..tag_len], &content[tag_len..])
    } else {
        ("", content)
    }
}

/// Parses the last fenced block as JSON, or the whole text when there is no fence.
pub fn extract_json(text: &str) -> Result<Value, JsonError> {
    match last_fenced_block(text) {
        Some((_, body)) => lenient_json(body),
        None => {
            if !text.contains('{') && !text.contains('[') {
                return Err(JsonError::NoJsonFound);
            }
            lenient_json(text)
        }
    }
}

/// JSON parser that also accepts the Python-literal dialect models tend to
/// emit: single-quoted strings, `True`/`False`/`None` and trailing commas.
pub fn lenient_json(text: &str) -> Result<Value, JsonError> {
    if text.trim().is_empty() {
        return Err(JsonError::NoJsonFound);
    }
    let normalized = normalize(text);
    serde_json::from_str(&normalized).map_err(|e| JsonError::JsonSyntax {
        position: byte_offset(&normalized, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    line_start + column.saturating_sub(1)
}

fn normalize(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' => {
                out.push('"');
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    out.push(d);
                    i += 1;
                    if d == '\\' && i < chars.len() {
                        out.push(chars[i]);
                        i += 1;
                    } else if d == '"' {
                        break;
                    }
                }
            }
            '\'' => {
                out.push('"');
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    i += 1;
                    match d {
                        '\\' if i < chars.len() => {
                            let e = chars[i];
                            i += 1;
                            if e == '\'' {
                                out.push('\'');
                            } else {
                                out.push('\\');
                                out.push(e);
                            }
                        }
                        '\'' => break,
                        '"' => out.push_str("\\\""),
                        _ => out.push(d),
                    }
                }
                out.push('"');
            }
            ',' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == '}' || chars[j] == ']') {
                    i += 1;
                } else {
                    out.push(',');
                    i += 1;
                }
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push_str(match word.as_str() {
                    "True" => "true",
                    "False" => "false",
                    "None" => "null",
                    other => other,
                });
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}
