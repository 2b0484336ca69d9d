//! Random identifiers and nonces.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use data_encoding::BASE32_NOPAD;
use rand::rngs::OsRng;
use rand::RngCore;

/// Opaque, stable user identifier: 16 random bytes as lowercase base32.
/// Nothing about the upstream subject can be recovered from it.
pub fn persistent_id() -> String {
    let mut bytes = [0u8; 16];
    OsRng.fill_bytes(&mut bytes);
    BASE32_NOPAD.encode(&bytes).to_ascii_lowercase()
}

/// Unguessable URL-safe nonce carrying `bytes` bytes of entropy.
pub fn nonce(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    OsRng.fill_bytes(&mut buf);
    URL_SAFE_NO_PAD.encode(&buf)
}

pub fn prefixed(prefix: &str, bytes: usize) -> String {
    format!("{prefix}_{}", nonce(bytes))
}

/// Short human-typeable code for the device login flow, e.g. `KXQT-MBRW`.
pub fn user_code() -> String {
    const ALPHABET: &[u8] = b"BCDFGHJKLMNPQRSTVWXZ";
    let mut out = String::with_capacity(9);
    for i in 0..8 {
        if i == 4 {
            out.push('-');
        }
        let idx = (OsRng.next_u32() as usize) % ALPHABET.len();
        out.push(ALPHABET[idx] as char);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn persistent_id_shape() {
        let id = persistent_id();
        assert_eq!(id.len(), 26);
        assert!(id.chars().all(|c| c.is_ascii_lowercase() || ('2'..='7').contains(&c)));
    }

    #[test]
    fn nonces_do_not_repeat() {
        let set: HashSet<_> = (0..1000).map(|_| nonce(16)).collect();
        assert_eq!(set.len(), 1000);
    }

    #[test]
    fn user_code_format() {
        let code = user_code();
        assert_eq!(code.len(), 9);
        assert_eq!(&code[4..5], "-");
    }
}
