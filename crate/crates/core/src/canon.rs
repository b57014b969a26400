//! Canonical JSON form shared by every document type.
//!
//! Canonical means: pretty-printed with two-space indentation, object keys
//! in struct declaration order, map-typed fields stored in `BTreeMap` /
//! `BTreeSet` so their keys are sorted, floats rendered by serde_json's
//! shortest-round-trip formatter, and a single trailing newline. Any two
//! structurally equal values serialize to identical bytes, so documents can
//! be diffed and content-hashed. Parsing relies on serde_json's
//! `float_roundtrip` feature: without it, re-reading a document can perturb
//! f64 fields by one ulp and break byte-identical rewrites.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serializes a value to its canonical JSON text.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    out.push('\n');
    out
}

/// Hex-encoded SHA-256 of the canonical JSON text of `value`.
///
/// This is the stable content key used to memoize configurations and to
/// join quality tables: `key = sha256(canonical_json(value))`.
pub fn canonical_key<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(to_canonical_json(value).as_bytes()))
}
