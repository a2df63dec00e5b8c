//! Canonical JSON: lexicographically sorted object keys, no whitespace,
//! integers in decimal, byte strings as `0x`-prefixed lowercase hex.
//!
//! Keys are sorted here rather than relying on `serde_json`'s map ordering,
//! so the output is stable whatever features other crates switch on.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::crypto::{sha256, Hash32};
use crate::error::{Error, Result};

pub fn canonical_encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let tree = serde_json::to_value(value).expect("domain types always serialize");
    let mut out = Vec::with_capacity(256);
    write_value(&tree, &mut out);
    out
}

pub fn canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(canonical_encode(value)).expect("json is utf-8")
}

pub fn canonical_decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Decode(e.to_string()))
}

/// SHA-256 of the canonical encoding.
pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> Hash32 {
    sha256(&canonical_encode(value))
}

fn write_value(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_scalar(&Value::String(k.clone()), out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        scalar => write_scalar(scalar, out),
    }
}

fn write_scalar(v: &Value, out: &mut Vec<u8>) {
    serde_json::to_writer(&mut *out, v).expect("writing to a Vec cannot fail");
}
