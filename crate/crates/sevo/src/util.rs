//! Small shared helpers.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of a byte slice. Used to fingerprint configs in
/// checkpoints and input files in run manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        let _ = write!(out, "{b:02x}");
    }
    out
}
