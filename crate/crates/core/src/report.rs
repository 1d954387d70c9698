//! Deterministic report plumbing: configuration digests and JSON-lines output.
//!
//! Digests are SHA-256 over the compact JSON serialisation of a value, so two
//! runs with the same inputs and seed carry the same digest regardless of
//! platform. Nothing time-dependent ever enters a digest.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Hex SHA-256 of an arbitrary byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn config_digest<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(value)?.as_bytes()))
}

/// Sixteen-character prefix of [`sha256_hex`], used to label sample families.
pub fn short_digest(text: &str) -> String {
    sha256_hex(text.as_bytes())[..16].to_string()
}

/// Writes one value as a single JSON line.
pub fn write_json_line<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Renders a slice of values as JSON lines.
pub fn json_lines<T: Serialize>(values: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    for v in values {
        write_json_line(&mut buf, v)?;
    }
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_input_sensitive() {
        let a = config_digest(&[1.0f64, 2.0]).unwrap();
        let b = config_digest(&[1.0f64, 2.0]).unwrap();
        let c = config_digest(&[1.0f64, 2.5]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn json_lines_end_with_newlines() {
        let s = json_lines(&[1, 2, 3]).unwrap();
        assert_eq!(s, "1\n2\n3\n");
    }
}
