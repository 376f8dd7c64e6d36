//! Attribute values: text, finite numbers, or an explicit missing marker.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// A single attribute cell value. `Missing` is distinct from the empty
/// string and from zero; numbers are always finite.
#[derive(Debug, Clone)]
pub enum AttributeValue {
    Text(String),
    Number(f64),
    Missing,
}

impl AttributeValue {
    /// Parse a raw textual field: empty -> missing, clean finite decimal
    /// -> number, anything else -> text. Strings like "£50" stay text.
    pub fn parse(raw: &str) -> AttributeValue {
        if raw.is_empty() {
            return AttributeValue::Missing;
        }
        if looks_numeric(raw) {
            if let Ok(n) = raw.parse::<f64>() {
                if n.is_finite() {
                    return AttributeValue::Number(n);
                }
            }
        }
        AttributeValue::Text(raw.to_string())
    }

    pub fn text(s: impl Into<String>) -> AttributeValue {
        AttributeValue::Text(s.into())
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, AttributeValue::Missing)
    }

    /// Textual form used by edit distance and by the token stream.
    /// Missing has no textual form.
    pub fn as_text(&self) -> Option<String> {
        match self {
            AttributeValue::Text(s) => Some(s.clone()),
            AttributeValue::Number(n) => Some(format_number(*n)),
            AttributeValue::Missing => None,
        }
    }

    /// Numeric view, parsing text when it is a clean decimal.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttributeValue::Number(n) => Some(*n),
            AttributeValue::Text(s) => {
                if looks_numeric(s) {
                    s.parse::<f64>().ok().filter(|n| n.is_finite())
                } else {
                    None
                }
            }
            AttributeValue::Missing => None,
        }
    }
}

/// Shortest round-trip formatting; integral values print without a
/// fractional part (2018.0 -> "2018").
pub fn format_number(n: f64) -> String {
    format!("{n}")
}

fn looks_numeric(s: &str) -> bool {
    let s = s.trim();
    if s.is_empty() {
        return false;
    }
    s.chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        && s.chars().any(|c| c.is_ascii_digit())
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Text(s) => write!(f, "{s}"),
            AttributeValue::Number(n) => write!(f, "{}", format_number(*n)),
            AttributeValue::Missing => write!(f, "?"),
        }
    }
}

impl PartialEq for AttributeValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (AttributeValue::Text(a), AttributeValue::Text(b)) => a == b,
            (AttributeValue::Number(a), AttributeValue::Number(b)) => a.to_bits() == b.to_bits(),
            (AttributeValue::Missing, AttributeValue::Missing) => true,
            _ => false,
        }
    }
}

impl Eq for AttributeValue {}

impl Hash for AttributeValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            AttributeValue::Text(s) => {
                0u8.hash(state);
                s.hash(state);
            }
            AttributeValue::Number(n) => {
                1u8.hash(state);
                n.to_bits().hash(state);
            }
            AttributeValue::Missing => 2u8.hash(state),
        }
    }
}

impl Ord for AttributeValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use AttributeValue::*;
        match (self, other) {
            (Missing, Missing) => Ordering::Equal,
            (Missing, _) => Ordering::Less,
            (_, Missing) => Ordering::Greater,
            (Number(a), Number(b)) => a.total_cmp(b),
            (Number(_), Text(_)) => Ordering::Less,
            (Text(_), Number(_)) => Ordering::Greater,
            (Text(a), Text(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for AttributeValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for AttributeValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AttributeValue::Text(s) => serializer.serialize_str(s),
            AttributeValue::Number(n) => serializer.serialize_f64(*n),
            AttributeValue::Missing => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for AttributeValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ValueVisitor;
        impl<'de> Visitor<'de> for ValueVisitor {
            type Value = AttributeValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a string, a number, or null")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<AttributeValue, E> {
                Ok(AttributeValue::Text(v.to_string()))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<AttributeValue, E> {
                Ok(AttributeValue::Number(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<AttributeValue, E> {
                Ok(AttributeValue::Number(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<AttributeValue, E> {
                Ok(AttributeValue::Number(v as f64))
            }

            fn visit_none<E: de::Error>(self) -> std::result::Result<AttributeValue, E> {
                Ok(AttributeValue::Missing)
            }

            fn visit_unit<E: de::Error>(self) -> std::result::Result<AttributeValue, E> {
                Ok(AttributeValue::Missing)
            }
        }
        deserializer.deserialize_any(ValueVisitor)
    }
}
