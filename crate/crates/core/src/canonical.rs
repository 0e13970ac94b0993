//! Canonical JSON: UTF-8, lexicographically sorted keys, no insignificant
//! whitespace, integral numbers within the exactly-representable range written
//! without a fractional part.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Largest integer magnitude every consumer can represent exactly in an f64.
pub const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

/// Serializes any value into its canonical document form.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("canonical values must be JSON-representable");
    canonical_value_string(&value)
}

pub fn canonical_value_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("strings always serialize"));
                out.push(':');
                write_value(&map[key], out);
            }
            out.push('}');
        }
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if n.is_i64() || n.is_u64() {
        out.push_str(&n.to_string());
        return;
    }
    let f = n.as_f64().unwrap_or(0.0);
    if f.fract() == 0.0 && f.abs() <= MAX_EXACT_INT {
        if f == 0.0 {
            out.push('0');
        } else {
            out.push_str(&format!("{}", f as i64));
        }
    } else {
        out.push_str(&n.to_string());
    }
}

/// Hex-encoded SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// One link of a trajectory hash chain: `H(prev_hex || document)`.
pub fn chain_hash(prev: &str, document: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prev.as_bytes());
    hasher.update(document.as_bytes());
    hex::encode(hasher.finalize())
}

/// Seed of every hash chain.
pub fn chain_root() -> String {
    sha256_hex(b"")
}
