//! Gate tokens: signed proof that pre-screening allowed the assessment.
//!
//! A token is `base64url(payload) "." base64url(hmac_sha256(payload))`, where
//! the payload is JSON naming the outcome digest, the audit record of the
//! pre-screen and an expiry. Verification needs only the key, so the service
//! keeps no session state.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taiscan_core::prescreen::PrescreenOutcome;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

const TOKEN_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GateError {
    #[error("gate token missing")]
    Missing,
    #[error("gate token malformed")]
    Malformed,
    #[error("gate token signature invalid")]
    BadSignature,
    #[error("gate token expired at {0}")]
    Expired(DateTime<Utc>),
    #[error("pre-screening did not allow the assessment")]
    NotPassed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateClaims {
    pub v: u8,
    /// SHA-256 of the JSON-serialized pre-screen outcome.
    pub outcome: String,
    pub may_proceed: bool,
    pub audit_id: u64,
    /// Expiry, Unix seconds.
    pub exp: i64,
}

impl GateClaims {
    pub fn expires_at(&self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.exp, 0).unwrap_or(DateTime::<Utc>::MAX_UTC)
    }
}

pub fn outcome_digest(outcome: &PrescreenOutcome) -> String {
    let json = serde_json::to_vec(outcome).expect("outcome serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Clone)]
pub struct GateKeeper {
    key: Vec<u8>,
    ttl: chrono::Duration,
}

impl std::fmt::Debug for GateKeeper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GateKeeper").field("ttl", &self.ttl).finish_non_exhaustive()
    }
}

impl GateKeeper {
    pub fn new(key: impl Into<Vec<u8>>, ttl_secs: u64) -> Self {
        Self {
            key: key.into(),
            ttl: chrono::Duration::seconds(ttl_secs.min(i64::MAX as u64 / 1000) as i64),
        }
    }

    /// Key from the configured secret, or 32 random bytes.
    pub fn from_secret(secret: Option<&str>, ttl_secs: u64) -> Self {
        match secret {
            Some(s) => Self::new(s.as_bytes(), ttl_secs),
            None => Self::new(rand::random::<[u8; 32]>().to_vec(), ttl_secs),
        }
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.key).expect("HMAC accepts any key length")
    }

    /// Issues a token for an outcome; only called when `may_proceed`.
    pub fn issue(&self, outcome: &PrescreenOutcome, audit_id: u64, now: DateTime<Utc>) -> (String, DateTime<Utc>) {
        let claims = GateClaims {
            v: TOKEN_VERSION,
            outcome: outcome_digest(outcome),
            may_proceed: outcome.may_proceed,
            audit_id,
            exp: (now + self.ttl).timestamp(),
        };
        (self.sign(&claims), claims.expires_at())
    }

    pub fn sign(&self, claims: &GateClaims) -> String {
        let payload = serde_json::to_vec(claims).expect("claims serialize");
        let mut mac = self.mac();
        mac.update(&payload);
        let tag = mac.finalize().into_bytes();
        format!("{}.{}", URL_SAFE_NO_PAD.encode(&payload), URL_SAFE_NO_PAD.encode(tag))
    }

    /// Checks signature (constant time), expiry and the proceed flag.
    pub fn verify(&self, token: Option<&str>, now: DateTime<Utc>) -> Result<GateClaims, GateError> {
        let token = token.map(str::trim).filter(|t| !t.is_empty()).ok_or(GateError::Missing)?;
        let (payload_b64, tag_b64) = token.split_once('.').ok_or(GateError::Malformed)?;
        let payload = URL_SAFE_NO_PAD.decode(payload_b64).map_err(|_| GateError::Malformed)?;
        let tag = URL_SAFE_NO_PAD.decode(tag_b64).map_err(|_| GateError::Malformed)?;
        let mut mac = self.mac();
        mac.update(&payload);
        mac.verify_slice(&tag).map_err(|_| GateError::BadSignature)?;
        let claims: GateClaims = serde_json::from_slice(&payload).map_err(|_| GateError::Malformed)?;
        if claims.v != TOKEN_VERSION {
            return Err(GateError::Malformed);
        }
        if now.timestamp() >= claims.exp {
            return Err(GateError::Expired(claims.expires_at()));
        }
        if !claims.may_proceed {
            return Err(GateError::NotPassed);
        }
        Ok(claims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use taiscan_core::prescreen::{evaluate, Catalog, PrescreenAnswers};

    fn passing() -> PrescreenOutcome {
        let catalog = Catalog::bundled();
        let answers = PrescreenAnswers {
            ai_criteria_checked: catalog
                .group(taiscan_core::prescreen::GroupId::AiCriteria)
                .options
                .iter()
                .map(|o| o.id.clone())
                .collect(),
            ..PrescreenAnswers::default()
        };
        let outcome = evaluate(&catalog, &answers);
        assert!(outcome.may_proceed);
        outcome
    }

    #[test]
    fn issue_then_verify() {
        let gk = GateKeeper::new(b"k".to_vec(), 60);
        let now = Utc::now();
        let (token, exp) = gk.issue(&passing(), 4, now);
        let claims = gk.verify(Some(&token), now).unwrap();
        assert_eq!(claims.audit_id, 4);
        assert_eq!(claims.outcome, outcome_digest(&passing()));
        assert_eq!(exp.timestamp(), claims.exp);
    }

    #[test]
    fn rejects_tampering_expiry_and_other_keys() {
        let gk = GateKeeper::new(b"k".to_vec(), 60);
        let now = Utc::now();
        let (token, _) = gk.issue(&passing(), 1, now);
        assert_eq!(gk.verify(None, now), Err(GateError::Missing));
        assert_eq!(gk.verify(Some(""), now), Err(GateError::Missing));
        assert_eq!(gk.verify(Some("abc"), now), Err(GateError::Malformed));
        assert_eq!(
            GateKeeper::new(b"other".to_vec(), 60).verify(Some(&token), now),
            Err(GateError::BadSignature)
        );
        let (payload, tag) = token.split_once('.').unwrap();
        let mut claims: GateClaims =
            serde_json::from_slice(&URL_SAFE_NO_PAD.decode(payload).unwrap()).unwrap();
        claims.exp += 3600;
        let forged = format!("{}.{tag}", URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).unwrap()));
        assert_eq!(gk.verify(Some(&forged), now), Err(GateError::BadSignature));
        assert!(matches!(
            gk.verify(Some(&token), now + chrono::Duration::seconds(61)),
            Err(GateError::Expired(_))
        ));
    }

    #[test]
    fn blocked_outcome_token_is_refused() {
        let gk = GateKeeper::new(b"k".to_vec(), 60);
        let mut outcome = passing();
        outcome.may_proceed = false;
        let now = Utc::now();
        let (token, _) = gk.issue(&outcome, 1, now);
        assert_eq!(gk.verify(Some(&token), now), Err(GateError::NotPassed));
    }
}
