//! Bearer tokens. Only SHA-256 digests are kept; team digests live in the ledger.

use std::collections::BTreeMap;

use axum::http::{header, HeaderMap};
use coopetition_core::{Actor, Competition, Role};
use sha2::{Digest, Sha256};

use crate::api::ApiError;

pub fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

/// 256 random bits, hex encoded.
pub fn new_token() -> String {
    hex::encode(rand::random::<[u8; 32]>())
}

/// Staff principals provisioned from configuration, keyed by token digest.
#[derive(Debug, Clone, Default)]
pub struct StaffTokens(BTreeMap<String, Actor>);

impl StaffTokens {
    pub fn new(tokens: impl IntoIterator<Item = (String, Actor)>) -> Self {
        StaffTokens(tokens.into_iter().map(|(t, a)| (token_digest(&t), a)).collect())
    }

    pub fn get(&self, digest: &str) -> Option<&Actor> {
        self.0.get(digest)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The caller, if a bearer token was presented. Unknown or malformed tokens fail.
pub fn principal(headers: &HeaderMap, staff: &StaffTokens, comp: &Competition) -> Result<Option<Actor>, ApiError> {
    let Some(value) = headers.get(header::AUTHORIZATION) else {
        return Ok(None);
    };
    let token = value
        .to_str()
        .ok()
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::unauthenticated("expected an Authorization: Bearer header"))?;
    let digest = token_digest(token);
    if let Some(actor) = staff.get(&digest) {
        return Ok(Some(actor.clone()));
    }
    match comp.team_for_token(&digest) {
        Some(team) => Ok(Some(Actor::team(team.id.clone()))),
        None => Err(ApiError::unauthenticated("unknown token")),
    }
}

/// Requires a caller holding one of `roles`.
pub fn require(actor: Option<Actor>, roles: &[Role], what: &str) -> Result<Actor, ApiError> {
    let actor = actor.ok_or_else(|| ApiError::unauthenticated(format!("{what} requires a bearer token")))?;
    if actor.has_any(roles) {
        Ok(actor)
    } else {
        let names: Vec<String> = roles.iter().map(Role::to_string).collect();
        Err(ApiError::forbidden(format!("{} may not {what}; requires {}", actor.id, names.join(" or "))))
    }
}

/// Team-private reads: the team itself or referee and committee staff.
pub fn require_team_or_staff(actor: Option<Actor>, team_id: &str, what: &str) -> Result<Actor, ApiError> {
    let actor = actor.ok_or_else(|| ApiError::unauthenticated(format!("{what} requires a bearer token")))?;
    if actor.is_team(team_id) || actor.has_any(&[Role::Referee, Role::TechnicalCommittee]) {
        Ok(actor)
    } else {
        Err(ApiError::forbidden(format!("{} may not {what} of {team_id}", actor.id)))
    }
}
