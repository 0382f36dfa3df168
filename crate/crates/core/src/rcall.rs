//! Parser for R-style call syntax in config values, e.g.
//! `binomial(link = "logit")`, `prior_normal(0, 1)`, `survival(method = "Cox")`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CallValue {
    Number(f64),
    Str(String),
}

impl CallValue {
    pub(crate) fn as_number(&self) -> Option<f64> {
        match self {
            CallValue::Number(v) => Some(*v),
            CallValue::Str(_) => None,
        }
    }

    pub(crate) fn as_str(&self) -> Option<&str> {
        match self {
            CallValue::Str(s) => Some(s),
            CallValue::Number(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Call {
    pub name: String,
    /// Arguments in order; named arguments carry their key.
    pub args: Vec<(Option<String>, CallValue)>,
}

impl Call {
    /// Look an argument up by keyword, falling back to position.
    pub(crate) fn arg(&self, key: &str, position: usize) -> Option<&CallValue> {
        if let Some((_, v)) = self.args.iter().find(|(k, _)| k.as_deref() == Some(key)) {
            return Some(v);
        }
        match self.args.get(position) {
            Some((None, v)) => Some(v),
            _ => None,
        }
    }

    pub(crate) fn number_arg(&self, key: &str, position: usize, default: f64) -> Result<f64> {
        match self.arg(key, position) {
            None => Ok(default),
            Some(v) => v.as_number().ok_or_else(|| {
                Error::config(format!("argument '{key}' of {} must be a number", self.name))
            }),
        }
    }
}

/// Parse `name` or `name(arg, key = value, ...)`.
pub(crate) fn parse_call(text: &str) -> Result<Call> {
    let text = text.trim();
    let (name, rest) = match text.find('(') {
        None => {
            let name = text.to_string();
            if !is_identifier(&name) {
                return Err(Error::config(format!("'{text}' is not a valid call")));
            }
            return Ok(Call { name, args: Vec::new() });
        }
        Some(p) => (text[..p].trim().to_string(), &text[p + 1..]),
    };
    if !is_identifier(&name) {
        return Err(Error::config(format!("'{text}' is not a valid call")));
    }
    let rest = rest.trim_end();
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::config(format!("missing ')' in '{text}'")))?;

    let mut args = Vec::new();
    for piece in split_args(inner) {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (key, value) = match piece.split_once('=') {
            Some((k, v)) if is_identifier(k.trim()) => (Some(k.trim().to_string()), v.trim()),
            _ => (None, piece),
        };
        let value = if let Some(stripped) =
            value.strip_prefix('"').and_then(|v| v.strip_suffix('"'))
        {
            CallValue::Str(stripped.to_string())
        } else if let Some(stripped) =
            value.strip_prefix('\'').and_then(|v| v.strip_suffix('\''))
        {
            CallValue::Str(stripped.to_string())
        } else if let Ok(num) = value.parse::<f64>() {
            CallValue::Number(num)
        } else if is_identifier(value) {
            CallValue::Str(value.to_string())
        } else {
            return Err(Error::config(format!("cannot parse argument '{piece}' in '{text}'")));
        };
        args.push((key, value));
    }
    Ok(Call { name, args })
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().map_or(false, |c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Split on top-level commas (no nested calls in this grammar, but quoted
/// strings may contain commas).
fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_quote: Option<char> = None;
    for (i, c) in s.char_indices() {
        match in_quote {
            Some(q) if c == q => in_quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => in_quote = Some(c),
            None if c == ',' => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            None => {}
        }
    }
    out.push(&s[start..]);
    out
}
