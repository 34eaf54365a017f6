//! Runtime values bound to program inputs and the MiniLang literal escape syntax.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::ast::InputType;

/// A value an input can take: an unsigned 64-bit integer or a byte string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(u64),
    Str(Vec<u8>),
}

impl Value {
    pub fn ty(&self) -> InputType {
        match self {
            Value::Int(_) => InputType::Int,
            Value::Str(_) => InputType::String,
        }
    }

    /// Parses a command-line value for an input of type `ty`.
    ///
    /// Integers are decimal. Strings are taken verbatim except for the
    /// `\xNN`, `\"` and `\\` escapes, which are decoded as in string literals.
    pub fn parse_as(ty: InputType, text: &str) -> Result<Value, String> {
        match ty {
            InputType::Int => text
                .trim()
                .parse::<u64>()
                .map(Value::Int)
                .map_err(|e| format!("invalid int value {text:?}: {e}")),
            InputType::String => unescape(text).map(Value::Str),
        }
    }

    /// Literal rendering: decimal for ints, double-quoted escaped text for strings.
    pub fn to_literal(&self) -> String {
        match self {
            Value::Int(n) => n.to_string(),
            Value::Str(bytes) => format!("\"{}\"", escape(bytes)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_literal())
    }
}

/// Ints serialize as JSON numbers, strings as their escaped (unquoted) text.
impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(n) => serializer.serialize_u64(*n),
            Value::Str(bytes) => serializer.serialize_str(&escape(bytes)),
        }
    }
}

/// Escapes a byte string for use inside a double-quoted literal.
pub fn escape(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\x{b:02x}")),
        }
    }
    out
}

/// Inverse of [`escape`]. Unknown escapes are an error.
pub fn unescape(text: &str) -> Result<Vec<u8>, String> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        match bytes.get(i + 1) {
            Some(b'"') => out.push(b'"'),
            Some(b'\\') => out.push(b'\\'),
            Some(b'x') => {
                let hex = bytes
                    .get(i + 2..i + 4)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| format!("invalid \\x escape at byte {i}"))?;
                out.push(hex);
                i += 4;
                continue;
            }
            Some(other) => return Err(format!("unknown escape \\{}", *other as char)),
            None => return Err("dangling backslash".to_string()),
        }
        i += 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn escapes_quotes_and_non_printables() {
        assert_eq!(escape(b"a\"b\\c\x00\xff"), "a\\\"b\\\\c\\x00\\xff");
    }

    #[test]
    fn parse_cli_values() {
        assert_eq!(Value::parse_as(InputType::Int, "42").unwrap(), Value::Int(42));
        assert!(Value::parse_as(InputType::Int, "-1").is_err());
        assert_eq!(
            Value::parse_as(InputType::String, "a\\x41").unwrap(),
            Value::Str(b"aA".to_vec())
        );
        assert!(Value::parse_as(InputType::String, "bad\\q").is_err());
        assert!(Value::parse_as(InputType::String, "bad\\x4").is_err());
    }

    proptest! {
        #[test]
        fn escape_roundtrips(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(unescape(&escape(&bytes)).unwrap(), bytes);
        }
    }
}
