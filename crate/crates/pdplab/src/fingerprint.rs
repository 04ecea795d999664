//! Content fingerprints for linking artifacts to the settings that made them.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Lowercase hex SHA-256 of a byte string.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Fingerprint of a value's canonical JSON serialization. Struct fields
/// serialize in declaration order, so equal values fingerprint equally.
pub fn fingerprint_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(fingerprint_bytes(&serde_json::to_vec(value)?))
}
