//! Compact `header.claims.signature` encoding, base64url segments, EdDSA.

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::crypto::{self, KeyPair};
use crate::registry::Role;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub alg: String,
    pub typ: String,
    pub kid: String,
}

/// Field order here is the canonical order on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenClaims {
    pub jti: String,
    pub sub: String,
    pub sid: String,
    pub role: Role,
    pub aud: String,
    pub project_scope: Option<String>,
    pub iat: Timestamp,
    pub exp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireError {
    Malformed,
}

pub fn encode(claims: &TokenClaims, key: &KeyPair) -> String {
    let header = Header {
        alg: "EdDSA".into(),
        typ: "JWT".into(),
        kid: key.key_id().to_owned(),
    };
    let h = crypto::b64url(&serde_json::to_vec(&header).expect("header serializes"));
    let c = crypto::b64url(&serde_json::to_vec(claims).expect("claims serialize"));
    let signing_input = format!("{h}.{c}");
    let sig = crypto::b64url(&key.sign(signing_input.as_bytes()));
    format!("{signing_input}.{sig}")
}

/// Splits and decodes a compact token without checking the signature.
pub struct Decoded {
    pub header: Header,
    pub claims: TokenClaims,
    pub signing_input: String,
    pub signature: Vec<u8>,
}

pub fn decode(token: &str) -> Result<Decoded, WireError> {
    let mut parts = token.trim().split('.');
    let (Some(h), Some(c), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(WireError::Malformed);
    };
    let header: Header = crypto::b64url_decode(h)
        .and_then(|b| serde_json::from_slice(&b).ok())
        .ok_or(WireError::Malformed)?;
    if header.alg != "EdDSA" {
        return Err(WireError::Malformed);
    }
    let claims: TokenClaims = crypto::b64url_decode(c)
        .and_then(|b| serde_json::from_slice(&b).ok())
        .ok_or(WireError::Malformed)?;
    let signature = crypto::b64url_decode(s).ok_or(WireError::Malformed)?;
    Ok(Decoded {
        header,
        claims,
        signing_input: format!("{h}.{c}"),
        signature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claims() -> TokenClaims {
        TokenClaims {
            jti: "tok_1".into(),
            sub: "abc".into(),
            sid: "ses_1".into(),
            role: Role::Researcher,
            aud: "ssh-ca".into(),
            project_scope: None,
            iat: Timestamp(10),
            exp: Timestamp(20),
        }
    }

    #[test]
    fn round_trip_and_canonical_order() {
        let key = KeyPair::from_label("t");
        let token = encode(&claims(), &key);
        let d = decode(&token).unwrap();
        assert_eq!(d.claims, claims());
        assert_eq!(d.header.kid, key.key_id());
        assert!(crypto::verify(&key.public(), d.signing_input.as_bytes(), &d.signature));
        let json = String::from_utf8(crypto::b64url_decode(token.split('.').nth(1).unwrap()).unwrap()).unwrap();
        assert_eq!(
            json,
            r#"{"jti":"tok_1","sub":"abc","sid":"ses_1","role":"researcher","aud":"ssh-ca","project_scope":null,"iat":10,"exp":20}"#
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode("").is_err());
        assert!(decode("a.b").is_err());
        assert!(decode("a.b.c.d").is_err());
        assert!(decode("!!.??.##").is_err());
    }
}
