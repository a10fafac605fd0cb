use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Team,
    Referee,
    TechnicalCommittee,
    ExternalEvaluator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Team => "team",
            Role::Referee => "referee",
            Role::TechnicalCommittee => "technical_committee",
            Role::ExternalEvaluator => "external_evaluator",
        })
    }
}

/// Whoever performs an operation. For teams `id` is the team id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: String,
    pub roles: BTreeSet<Role>,
}

impl Actor {
    pub fn new(id: impl Into<String>, roles: impl IntoIterator<Item = Role>) -> Self {
        Actor { id: id.into(), roles: roles.into_iter().collect() }
    }

    pub fn team(id: impl Into<String>) -> Self {
        Actor::new(id, [Role::Team])
    }

    pub fn referee(id: impl Into<String>) -> Self {
        Actor::new(id, [Role::Referee])
    }

    pub fn committee(id: impl Into<String>) -> Self {
        Actor::new(id, [Role::TechnicalCommittee])
    }

    pub fn evaluator(id: impl Into<String>) -> Self {
        Actor::new(id, [Role::ExternalEvaluator])
    }

    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn has_any(&self, roles: &[Role]) -> bool {
        roles.iter().any(|r| self.has(*r))
    }

    /// True if the actor is acting as the given team.
    pub fn is_team(&self, team_id: &str) -> bool {
        self.has(Role::Team) && self.id == team_id
    }
}
