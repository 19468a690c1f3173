use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use super::function::FunctionValue;

/// A 64-bit float with bitwise equality and a total order, so that floats can
/// live inside ordered sets and map keys.
#[derive(Clone, Copy, Debug)]
pub struct Float(pub f64);

impl PartialEq for Float {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Float {}

impl PartialOrd for Float {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Float {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Scalar types. There is deliberately no null type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScalarType {
    Int,
    Float,
    Text,
    Bool,
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarType::Int => "int",
            ScalarType::Float => "float",
            ScalarType::Text => "text",
            ScalarType::Bool => "bool",
        })
    }
}

/// The universal codomain element.
///
/// Values compare structurally. The derived order places variants as
/// `Int < Float < Text < Bool < Func < Set` and orders within a variant
/// naturally; function values compare by structure.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Float(Float),
    Text(String),
    Bool(bool),
    Func(Arc<FunctionValue>),
    Set(BTreeSet<Value>),
}

impl Value {
    pub fn float(v: f64) -> Value {
        Value::Float(Float(v))
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn func(f: FunctionValue) -> Value {
        Value::Func(Arc::new(f))
    }

    pub fn set(values: impl IntoIterator<Item = Value>) -> Value {
        Value::Set(values.into_iter().collect())
    }

    pub fn scalar_type(&self) -> Option<ScalarType> {
        match self {
            Value::Int(_) => Some(ScalarType::Int),
            Value::Float(_) => Some(ScalarType::Float),
            Value::Text(_) => Some(ScalarType::Text),
            Value::Bool(_) => Some(ScalarType::Bool),
            _ => None,
        }
    }

    pub fn as_func(&self) -> Option<&Arc<FunctionValue>> {
        match self {
            Value::Func(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Numeric view with Int promoted to Float.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(f.0),
            _ => None,
        }
    }

    /// Short human-readable name of the value's variant.
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Text(_) => "text",
            Value::Bool(_) => "bool",
            Value::Func(_) => "function",
            Value::Set(_) => "set",
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::text(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<FunctionValue> for Value {
    fn from(v: FunctionValue) -> Self {
        Value::func(v)
    }
}

/// Quotes a string with the escapes shared by the surface syntax and the
/// database text format: `\"`, `\\` and `\n`.
pub fn quote_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Formats a finite float so that it reads back as a float literal.
pub fn format_float(v: f64) -> String {
    // Debug output is the shortest round-tripping form and always carries a
    // '.' or an exponent for finite values.
    format!("{v:?}")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => f.write_str(&format_float(x.0)),
            Value::Text(s) => f.write_str(&quote_text(s)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Func(func) => write!(f, "<{} function>", func.kind()),
            Value::Set(items) => {
                f.write_str("{")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_order_is_int_float_text_bool() {
        let mut v = vec![
            Value::Bool(false),
            Value::text("a"),
            Value::float(0.5),
            Value::Int(7),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                Value::Int(7),
                Value::float(0.5),
                Value::text("a"),
                Value::Bool(false)
            ]
        );
    }

    #[test]
    fn float_equality_is_bitwise() {
        assert_ne!(Value::float(0.0), Value::float(-0.0));
        assert_eq!(Value::float(f64::NAN), Value::float(f64::NAN));
        assert_ne!(Value::Int(1), Value::float(1.0));
    }

    #[test]
    fn sets_deduplicate_structurally() {
        let s = Value::set([Value::Int(1), Value::Int(1), Value::text("x")]);
        match s {
            Value::Set(items) => assert_eq!(items.len(), 2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn quoting_escapes() {
        assert_eq!(quote_text("a\"b\\c\nd"), "\"a\\\"b\\\\c\\nd\"");
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(-0.0), "-0.0");
    }
}
