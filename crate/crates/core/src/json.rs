//! Canonical JSON plumbing shared by the snapshot, scenario, and
//! ground-truth formats.
//!
//! Writing goes through `serde_json::Value`, whose object map is
//! BTreeMap-backed, so key order is always sorted and the emitted bytes are
//! a pure function of the value. Fractional quantities are carried as
//! fixed-point decimal *strings* with six fractional digits (micro-units
//! internally), never as JSON floats, which keeps round-trips exact.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

/// A structural problem found while decoding a JSON document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path of the offending field, e.g. `peers[3].latency_s`.
    pub field: String,
    pub detail: String,
}

impl FieldError {
    pub fn new(field: &str, detail: impl Into<String>) -> Self {
        FieldError {
            field: field.to_string(),
            detail: detail.into(),
        }
    }
}

impl core::fmt::Display for FieldError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.detail)
    }
}

pub fn parse_document(text: &str) -> Result<Value, FieldError> {
    serde_json::from_str(text)
        .map_err(|e| FieldError::new("<document>", format!("invalid JSON: {e}")))
}

pub fn as_object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>, FieldError> {
    v.as_object()
        .ok_or_else(|| FieldError::new(field, "expected an object"))
}

pub fn get<'a>(
    obj: &'a Map<String, Value>,
    parent: &str,
    key: &str,
) -> Result<&'a Value, FieldError> {
    obj.get(key)
        .ok_or_else(|| FieldError::new(&join(parent, key), "missing required field"))
}

pub fn get_u64(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<u64, FieldError> {
    get(obj, parent, key)?
        .as_u64()
        .ok_or_else(|| FieldError::new(&join(parent, key), "expected an unsigned integer"))
}

pub fn get_str<'a>(
    obj: &'a Map<String, Value>,
    parent: &str,
    key: &str,
) -> Result<&'a str, FieldError> {
    get(obj, parent, key)?
        .as_str()
        .ok_or_else(|| FieldError::new(&join(parent, key), "expected a string"))
}

pub fn get_bool(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<bool, FieldError> {
    get(obj, parent, key)?
        .as_bool()
        .ok_or_else(|| FieldError::new(&join(parent, key), "expected a boolean"))
}

pub fn get_array<'a>(
    obj: &'a Map<String, Value>,
    parent: &str,
    key: &str,
) -> Result<&'a Vec<Value>, FieldError> {
    get(obj, parent, key)?
        .as_array()
        .ok_or_else(|| FieldError::new(&join(parent, key), "expected an array"))
}

pub fn get_object<'a>(
    obj: &'a Map<String, Value>,
    parent: &str,
    key: &str,
) -> Result<&'a Map<String, Value>, FieldError> {
    get(obj, parent, key)?
        .as_object()
        .ok_or_else(|| FieldError::new(&join(parent, key), "expected an object"))
}

pub fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

/// Serializes a `Value` to the canonical byte form (compact, sorted keys).
pub fn to_canonical_string(v: &Value) -> String {
    // `Map` is BTreeMap-backed, so serialization is already deterministic.
    serde_json::to_string(v).expect("serializing a Value cannot fail")
}

/// Formats a micro-unit quantity as a decimal string with exactly six
/// fractional digits, e.g. `31_509_326` -> `"31.509326"`.
pub fn format_micros(micros: u64) -> String {
    format!("{}.{:06}", micros / 1_000_000, micros % 1_000_000)
}

/// `num / den` scaled by 1e6, truncated toward zero. Uses 128-bit
/// intermediates so large totals cannot overflow.
pub fn ratio_micros(num: u64, den: u64) -> u64 {
    if den == 0 {
        return 0;
    }
    ((num as u128 * 1_000_000) / den as u128) as u64
}

/// Milliseconds rendered as minutes with six fractional digits, truncating
/// toward zero: `1_476_025` ms -> `"24.600416"`.
pub fn format_ms_as_minutes(ms: u64) -> String {
    let whole = ms / 60_000;
    let frac = ((ms % 60_000) as u128 * 1_000_000 / 60_000) as u64;
    format!("{whole}.{frac:06}")
}

/// Parses a nonnegative decimal string into micro-units, accepting at most
/// six fractional digits: `"31.509326"` -> `31_509_326`.
pub fn parse_micros(s: &str, field: &str) -> Result<u64, FieldError> {
    let bad = |detail: &str| FieldError::new(field, detail.to_string());
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("expected a nonnegative decimal number"));
    }
    if frac_part.len() > 6 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("expected at most six fractional digits"));
    }
    let int: u64 = int_part
        .parse()
        .map_err(|_| bad("integer part out of range"))?;
    let mut frac: u64 = 0;
    if !frac_part.is_empty() {
        frac = frac_part.parse().map_err(|_| bad("bad fractional part"))?;
        for _ in frac_part.len()..6 {
            frac *= 10;
        }
    }
    int.checked_mul(1_000_000)
        .and_then(|v| v.checked_add(frac))
        .ok_or_else(|| bad("value out of range"))
}

/// Accepts either a JSON string (`"0.25"`) or a nonnegative JSON number and
/// converts it to micro-units. Numbers are restricted to integers so float
/// parsing can never introduce nondeterminism.
pub fn value_to_micros(v: &Value, field: &str) -> Result<u64, FieldError> {
    match v {
        Value::String(s) => parse_micros(s, field),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                u.checked_mul(1_000_000)
                    .ok_or_else(|| FieldError::new(field, "value out of range"))
            } else {
                Err(FieldError::new(
                    field,
                    "fractional values must be written as decimal strings",
                ))
            }
        }
        _ => Err(FieldError::new(
            field,
            "expected a number or decimal string",
        )),
    }
}
