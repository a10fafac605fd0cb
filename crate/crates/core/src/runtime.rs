//! Event lifecycle driven by an append-only ledger.
//!
//! Every state change is a [`LedgerEntry`]. [`Competition::execute`] validates
//! an event against the current state, appends it and applies it; replay runs
//! the same path over a recorded ledger, so replayed and live state agree.
//! Score breakdowns are never stored: they are recomputed from the attempts
//! and the marketplace on demand.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::commands::{self, CommandError, CommandRequest, GeneratedCommand, VariableDomain};
use crate::exact::{Exact, Fraction};
use crate::marketplace::{
    DeclarationDraft, IntegrationDeclaration, MarketplaceError, MarketplaceState, ModuleDraft, ModuleRecord,
    UploadWindow, ViewPolicy,
};
use crate::roles::{Actor, Role};
use crate::rulebook::{Rulebook, RulebookError};
use crate::scoring::{
    self, AttemptRecord, MilestoneResult, RoyaltyEntry, ScoreBreakdown, ScoringError, SubjectiveScore,
};
use crate::Timestamp;

/// Static parameters of one event, fixed by the first ledger entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventConfig {
    pub name: String,
    pub rulebook_version: String,
    pub windows: Vec<UploadWindow>,
    pub default_royalty: Fraction,
    /// Planned start of the on-site phase; informational, the freeze itself is an entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_at: Option<Timestamp>,
    /// Count unverified declarations as well.
    #[serde(default)]
    pub trust_based: bool,
    #[serde(default)]
    pub domain: VariableDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Team {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub institution: String,
    pub league_id: String,
    #[serde(default)]
    pub robot_description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Running,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptSession {
    pub id: String,
    pub state: SessionState,
    pub deadline: Timestamp,
    pub attempt: AttemptRecord,
}

/// A referee's milestone entry. A missing subjective score keeps the one
/// already recorded, so evaluator and referee input do not overwrite each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeInput {
    pub milestone_id: String,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjective_score: Option<SubjectiveScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub penalties: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Configured { config: EventConfig },
    TeamRegistered {
        team: Team,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_sha256: Option<String>,
    },
    ModuleUploaded { module: ModuleDraft },
    MarketplaceFrozen,
    IntegrationDeclared { declaration: DeclarationDraft },
    IntegrationVerified { declaration_id: String },
    ModuleRemoved { module_id: String },
    AttemptOpened { team_id: String, task_id: String, task_level: String },
    OutcomeRecorded { attempt_id: String, outcome: OutcomeInput },
    SubjectiveScored { attempt_id: String, milestone_id: String, score: SubjectiveScore },
    AttemptClosed { attempt_id: String },
    CommandIssued { request: CommandRequest },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Configured { .. } => "configured",
            Event::TeamRegistered { .. } => "team_registered",
            Event::ModuleUploaded { .. } => "module_uploaded",
            Event::MarketplaceFrozen => "marketplace_frozen",
            Event::IntegrationDeclared { .. } => "integration_declared",
            Event::IntegrationVerified { .. } => "integration_verified",
            Event::ModuleRemoved { .. } => "module_removed",
            Event::AttemptOpened { .. } => "attempt_opened",
            Event::OutcomeRecorded { .. } => "outcome_recorded",
            Event::SubjectiveScored { .. } => "subjective_scored",
            Event::AttemptClosed { .. } => "attempt_closed",
            Event::CommandIssued { .. } => "command_issued",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub at: Timestamp,
    pub actor: Actor,
    #[serde(flatten)]
    pub event: Event,
}

/// What an applied entry produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Applied {
    Configured,
    Team(Team),
    Module(ModuleRecord),
    Frozen(Timestamp),
    Declaration(IntegrationDeclaration),
    Session(AttemptSession),
    Breakdown(ScoreBreakdown),
    Command(GeneratedCommand),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Marketplace(#[from] MarketplaceError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Rulebook(#[from] RulebookError),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("the on-site phase has not started; the marketplace is not frozen")]
    EventNotStarted,
    #[error("team {team:?} has used all {limit} attempts on {task:?}")]
    AttemptLimitExceeded { team: String, task: String, limit: u32 },
    #[error("attempt deadline {0} has passed")]
    DeadlineExpired(Timestamp),
    #[error("attempt {0:?} is closed")]
    SessionClosed(String),
    #[error("ledger entry {found} out of sequence, expected {expected}")]
    Sequence { expected: u64, found: u64 },
    #[error("ledger must start with a configuration entry")]
    NotConfigured,
}

/// Coarse error classes, used for status codes and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Forbidden,
    NotFound,
    Conflict,
}

impl RuntimeError {
    pub fn class(&self) -> ErrorClass {
        use MarketplaceError as M;
        match self {
            RuntimeError::Unauthorized(_) | RuntimeError::Marketplace(M::Unauthorized(_)) => ErrorClass::Forbidden,
            RuntimeError::NotFound { .. } | RuntimeError::Marketplace(M::NotFound { .. }) => ErrorClass::NotFound,
            RuntimeError::Rulebook(RulebookError::NotFound { .. }) => ErrorClass::NotFound,
            RuntimeError::Marketplace(
                M::FrozenMarketplace(_) | M::OutsideWindow(_) | M::DuplicateId(_) | M::AlreadyFrozen(_) | M::ModuleRemoved(_),
            )
            | RuntimeError::DuplicateId(_)
            | RuntimeError::EventNotStarted
            | RuntimeError::AttemptLimitExceeded { .. }
            | RuntimeError::DeadlineExpired(_)
            | RuntimeError::SessionClosed(_)
            | RuntimeError::Sequence { .. }
            | RuntimeError::NotConfigured => ErrorClass::Conflict,
            _ => ErrorClass::Validation,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use MarketplaceError as M;
        match self {
            RuntimeError::Marketplace(e) => match e {
                M::FrozenMarketplace(_) => "FrozenMarketplace",
                M::OutsideWindow(_) => "OutsideWindow",
                M::DuplicateId(_) => "DuplicateId",
                M::AlreadyFrozen(_) => "AlreadyFrozen",
                M::SelfIntegration { .. } => "SelfIntegration",
                M::ModuleRemoved(_) => "ModuleRemoved",
                M::UnknownScope(_) => "UnknownScope",
                M::Unauthorized(_) => "Unauthorized",
                M::NotFound { .. } => "NotFound",
                M::Invalid { .. } => "ValidationError",
            },
            RuntimeError::Scoring(e) => match e {
                ScoringError::CatalogMismatch { .. } => "CatalogMismatch",
                ScoringError::MutualExclusionViolation(_) => "MutualExclusionViolation",
                ScoringError::SelfRoyalty(_) => "SelfRoyalty",
                ScoringError::EmptyAttempts => "EmptyAttempts",
                _ => "ValidationError",
            },
            RuntimeError::Rulebook(RulebookError::NotFound { .. }) => "NotFound",
            RuntimeError::Rulebook(_) => "ValidationError",
            RuntimeError::Command(e) => match e {
                CommandError::InvalidPin { .. } => "InvalidPin",
                CommandError::InvalidTask(_) => "InvalidTask",
                CommandError::DegenerateDomain(_) => "DegenerateDomain",
                CommandError::UnsupportedLeague(_) => "UnsupportedLeague",
            },
            RuntimeError::Unauthorized(_) => "Unauthorized",
            RuntimeError::NotFound { .. } => "NotFound",
            RuntimeError::DuplicateId(_) => "DuplicateId",
            RuntimeError::Invalid { .. } => "ValidationError",
            RuntimeError::EventNotStarted => "EventNotStarted",
            RuntimeError::AttemptLimitExceeded { .. } => "AttemptLimitExceeded",
            RuntimeError::DeadlineExpired(_) => "DeadlineExpired",
            RuntimeError::SessionClosed(_) => "SessionClosed",
            RuntimeError::Sequence { .. } => "LedgerSequence",
            RuntimeError::NotConfigured => "NotConfigured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ledger entry {seq}: {error}")]
pub struct ReplayError {
    pub seq: u64,
    pub error: RuntimeError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub team_id: String,
    pub s_challenge: Exact,
    pub s_royalties: Exact,
    pub s_coopetition: Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub at: Timestamp,
    pub module_id: String,
    pub user_team_id: String,
    pub message: String,
}

fn forbid(actor: &Actor, what: &str) -> RuntimeError {
    RuntimeError::Unauthorized(format!("{} may not {what}", actor.id))
}

fn require(actor: &Actor, roles: &[Role], what: &str) -> Result<(), RuntimeError> {
    if actor.has_any(roles) {
        Ok(())
    } else {
        Err(forbid(actor, what))
    }
}

#[derive(Debug, Clone)]
pub struct Competition {
    rulebook: Rulebook,
    config: EventConfig,
    teams: BTreeMap<String, Team>,
    tokens: BTreeMap<String, String>,
    marketplace: MarketplaceState,
    sessions: BTreeMap<String, AttemptSession>,
    commands: Vec<GeneratedCommand>,
    ledger: Vec<LedgerEntry>,
}

impl Competition {
    /// Starts a new event; the configuration becomes ledger entry 1.
    pub fn new(rulebook: Rulebook, config: EventConfig, actor: Actor, at: Timestamp) -> Result<Self, RuntimeError> {
        let entry = LedgerEntry { seq: 1, at, actor, event: Event::Configured { config } };
        Self::from_first(rulebook, entry)
    }

    fn from_first(rulebook: Rulebook, entry: LedgerEntry) -> Result<Self, RuntimeError> {
        let Event::Configured { config } = &entry.event else {
            return Err(RuntimeError::NotConfigured);
        };
        if entry.seq != 1 {
            return Err(RuntimeError::Sequence { expected: 1, found: entry.seq });
        }
        if config.rulebook_version != rulebook.version {
            return Err(RuntimeError::Invalid {
                field: "rulebook_version",
                message: format!("event expects {}, loaded {}", config.rulebook_version, rulebook.version),
            });
        }
        let marketplace = MarketplaceState::new(config.windows.clone(), config.default_royalty.clone())?;
        Ok(Competition {
            rulebook,
            config: config.clone(),
            teams: BTreeMap::new(),
            tokens: BTreeMap::new(),
            marketplace,
            sessions: BTreeMap::new(),
            commands: Vec::new(),
            ledger: vec![entry],
        })
    }

    /// Rebuilds an event from its ledger.
    pub fn replay(rulebook: Rulebook, entries: impl IntoIterator<Item = LedgerEntry>) -> Result<Self, ReplayError> {
        let mut entries = entries.into_iter();
        let first = entries.next().ok_or(ReplayError { seq: 1, error: RuntimeError::NotConfigured })?;
        let seq = first.seq;
        let mut comp = Self::from_first(rulebook, first).map_err(|error| ReplayError { seq, error })?;
        for entry in entries {
            let seq = entry.seq;
            comp.append(entry).map_err(|error| ReplayError { seq, error })?;
        }
        Ok(comp)
    }

    pub fn rulebook(&self) -> &Rulebook {
        &self.rulebook
    }

    pub fn config(&self) -> &EventConfig {
        &self.config
    }

    pub fn marketplace(&self) -> &MarketplaceState {
        &self.marketplace
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn teams(&self) -> impl Iterator<Item = &Team> {
        self.teams.values()
    }

    pub fn team(&self, id: &str) -> Option<&Team> {
        self.teams.get(id)
    }

    /// Team id owning a token digest.
    pub fn team_for_token(&self, sha256_hex: &str) -> Option<&Team> {
        self.tokens.get(sha256_hex).and_then(|id| self.teams.get(id))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &AttemptSession> {
        self.sessions.values()
    }

    pub fn session(&self, id: &str) -> Option<&AttemptSession> {
        self.sessions.get(id)
    }

    pub fn commands(&self) -> &[GeneratedCommand] {
        &self.commands
    }

    pub fn last_at(&self) -> Timestamp {
        self.ledger.last().map(|e| e.at).expect("ledger holds the configuration entry")
    }

    pub fn next_seq(&self) -> u64 {
        self.ledger.len() as u64 + 1
    }

    /// Validates, records and applies one event.
    pub fn execute(&mut self, actor: Actor, event: Event, at: Timestamp) -> Result<Applied, RuntimeError> {
        let entry = LedgerEntry { seq: self.next_seq(), at, actor, event };
        self.append(entry)
    }

    fn append(&mut self, entry: LedgerEntry) -> Result<Applied, RuntimeError> {
        let expected = self.next_seq();
        if entry.seq != expected {
            return Err(RuntimeError::Sequence { expected, found: entry.seq });
        }
        if entry.at < self.last_at() {
            return Err(RuntimeError::Invalid {
                field: "at",
                message: format!("{} precedes the previous entry at {}", entry.at, self.last_at()),
            });
        }
        let applied = self.apply(&entry)?;
        self.ledger.push(entry);
        Ok(applied)
    }

    /// Checks every precondition before mutating, so a failed event leaves no trace.
    fn apply(&mut self, entry: &LedgerEntry) -> Result<Applied, RuntimeError> {
        let (actor, now) = (&entry.actor, entry.at);
        match &entry.event {
            Event::Configured { .. } => Err(RuntimeError::Invalid {
                field: "event",
                message: "the event is already configured".into(),
            }),
            Event::TeamRegistered { team, token_sha256 } => {
                require(actor, &[Role::TechnicalCommittee], "register teams")?;
                if team.id.is_empty() || team.id.contains('/') {
                    return Err(RuntimeError::Invalid { field: "id", message: format!("{:?} is not a valid team id", team.id) });
                }
                if self.teams.contains_key(&team.id) {
                    return Err(RuntimeError::DuplicateId(team.id.clone()));
                }
                self.rulebook.league(&team.league_id)?;
                if let Some(digest) = token_sha256 {
                    if self.tokens.contains_key(digest) {
                        return Err(RuntimeError::DuplicateId("token".into()));
                    }
                    self.tokens.insert(digest.clone(), team.id.clone());
                }
                self.teams.insert(team.id.clone(), team.clone());
                Ok(Applied::Team(team.clone()))
            }
            Event::ModuleUploaded { module } => {
                let own = module.developer_team_ids.iter().any(|d| actor.is_team(d));
                if !own && !actor.has(Role::TechnicalCommittee) {
                    return Err(forbid(actor, "upload modules on behalf of other teams"));
                }
                if let Some(unknown) = module.developer_team_ids.iter().find(|d| !self.teams.contains_key(*d)) {
                    return Err(RuntimeError::NotFound { kind: "team", id: unknown.clone() });
                }
                Ok(Applied::Module(self.marketplace.upload_module(module.clone(), now)?))
            }
            Event::MarketplaceFrozen => {
                require(actor, &[Role::TechnicalCommittee], "freeze the marketplace")?;
                self.marketplace.freeze(now)?;
                Ok(Applied::Frozen(now))
            }
            Event::IntegrationDeclared { declaration } => {
                if !actor.is_team(&declaration.user_team_id) && !actor.has_any(&[Role::Referee, Role::TechnicalCommittee]) {
                    return Err(forbid(actor, "declare integrations for other teams"));
                }
                let team = self.teams.get(&declaration.user_team_id).ok_or_else(|| RuntimeError::NotFound {
                    kind: "team",
                    id: declaration.user_team_id.clone(),
                })?;
                if declaration.scope.league_id != team.league_id {
                    return Err(MarketplaceError::UnknownScope(format!(
                        "{} is outside league {} of team {}",
                        declaration.scope, team.league_id, team.id
                    ))
                    .into());
                }
                let decl = self.marketplace.declare_integration(&self.rulebook, declaration.clone(), now)?;
                Ok(Applied::Declaration(decl))
            }
            Event::IntegrationVerified { declaration_id } => {
                require(actor, &[Role::Referee, Role::TechnicalCommittee], "verify integrations")?;
                Ok(Applied::Declaration(self.marketplace.verify_declaration(declaration_id)?))
            }
            Event::ModuleRemoved { module_id } => Ok(Applied::Module(self.marketplace.remove_module(module_id, actor)?)),
            Event::AttemptOpened { team_id, task_id, task_level } => {
                require(actor, &[Role::Referee], "open attempts")?;
                let team = self
                    .teams
                    .get(team_id)
                    .ok_or_else(|| RuntimeError::NotFound { kind: "team", id: team_id.clone() })?;
                let (league, _) = self.rulebook.task(&team.league_id, task_id)?;
                if league.task_level(task_level).is_none() {
                    return Err(ScoringError::UnknownTaskLevel(task_level.clone()).into());
                }
                if !self.marketplace.is_frozen(now) {
                    return Err(RuntimeError::EventNotStarted);
                }
                let used = self
                    .sessions
                    .values()
                    .filter(|s| s.attempt.team_id == *team_id && s.attempt.task_id == *task_id)
                    .count() as u32;
                if used >= league.attempt_limit {
                    return Err(RuntimeError::AttemptLimitExceeded {
                        team: team_id.clone(),
                        task: task_id.clone(),
                        limit: league.attempt_limit,
                    });
                }
                let number = used + 1;
                let id = format!("{team_id}-{task_id}-{number}");
                let duration = i64::try_from(league.attempt_duration_secs).unwrap_or(i64::MAX);
                let session = AttemptSession {
                    id: id.clone(),
                    state: SessionState::Running,
                    deadline: now + Duration::seconds(duration),
                    attempt: AttemptRecord {
                        team_id: team_id.clone(),
                        league_id: league.id.clone(),
                        task_id: task_id.clone(),
                        attempt_number: number,
                        task_level: task_level.clone(),
                        results: Vec::new(),
                        started_at: now,
                        closed_at: None,
                    },
                };
                self.sessions.insert(id, session.clone());
                Ok(Applied::Session(session))
            }
            Event::OutcomeRecorded { attempt_id, outcome } => {
                require(actor, &[Role::Referee], "record milestone outcomes")?;
                let mut session = self.running_session(attempt_id, now)?.clone();
                let previous_q = session
                    .attempt
                    .results
                    .iter()
                    .find(|r| r.milestone_id == outcome.milestone_id)
                    .map(|r| r.subjective_score)
                    .unwrap_or_default();
                let result = MilestoneResult {
                    milestone_id: outcome.milestone_id.clone(),
                    success: outcome.success,
                    level: outcome.level.clone(),
                    subjective_score: outcome.subjective_score.unwrap_or(previous_q),
                    penalties: outcome.penalties.clone(),
                };
                self.upsert_result(&mut session, result)?;
                self.sessions.insert(attempt_id.clone(), session.clone());
                Ok(Applied::Session(session))
            }
            Event::SubjectiveScored { attempt_id, milestone_id, score } => {
                require(actor, &[Role::Referee, Role::ExternalEvaluator], "enter subjective scores")?;
                let mut session = self.running_session(attempt_id, now)?.clone();
                let mut result = session
                    .attempt
                    .results
                    .iter()
                    .find(|r| r.milestone_id == *milestone_id)
                    .cloned()
                    .unwrap_or_else(|| MilestoneResult::failure(milestone_id.clone()));
                result.subjective_score = *score;
                self.upsert_result(&mut session, result)?;
                self.sessions.insert(attempt_id.clone(), session.clone());
                Ok(Applied::Session(session))
            }
            Event::AttemptClosed { attempt_id } => {
                require(actor, &[Role::Referee], "close attempts")?;
                let session = self
                    .sessions
                    .get(attempt_id)
                    .ok_or_else(|| RuntimeError::NotFound { kind: "attempt", id: attempt_id.clone() })?;
                if session.state == SessionState::Closed {
                    return Err(RuntimeError::SessionClosed(attempt_id.clone()));
                }
                let mut closed = session.clone();
                closed.state = SessionState::Closed;
                closed.attempt.closed_at = Some(now);
                let breakdown = self.score_record(&closed.attempt)?;
                self.sessions.insert(attempt_id.clone(), closed);
                Ok(Applied::Breakdown(breakdown))
            }
            Event::CommandIssued { request } => {
                require(actor, &[Role::Referee, Role::TechnicalCommittee], "issue commands")?;
                self.rulebook.league(&request.league_id)?;
                let command = commands::generate(&self.config.domain, request)?;
                self.commands.push(command.clone());
                Ok(Applied::Command(command))
            }
        }
    }

    fn running_session(&self, attempt_id: &str, now: Timestamp) -> Result<&AttemptSession, RuntimeError> {
        let session = self
            .sessions
            .get(attempt_id)
            .ok_or_else(|| RuntimeError::NotFound { kind: "attempt", id: attempt_id.to_string() })?;
        if session.state == SessionState::Closed {
            return Err(RuntimeError::SessionClosed(attempt_id.to_string()));
        }
        if now > session.deadline {
            return Err(RuntimeError::DeadlineExpired(session.deadline));
        }
        Ok(session)
    }

    /// Replaces the result for its milestone and re-checks the attempt.
    fn upsert_result(&self, session: &mut AttemptSession, result: MilestoneResult) -> Result<(), RuntimeError> {
        let attempt = &mut session.attempt;
        let (league, task) = self.rulebook.task(&attempt.league_id, &attempt.task_id)?;
        let spec = task
            .milestone(&result.milestone_id)
            .ok_or_else(|| ScoringError::UnknownMilestone(result.milestone_id.clone()))?;
        scoring::milestone_score(spec, &result, false)?;
        match attempt.results.iter_mut().find(|r| r.milestone_id == result.milestone_id) {
            Some(slot) => *slot = result,
            None => attempt.results.push(result),
        }
        attempt.results.sort_by_key(|r| task.milestones.iter().position(|m| m.id == r.milestone_id));
        scoring::task_score(league, task, attempt, &scoring::StaticView::new())?;
        Ok(())
    }

    /// Declarations count up to the attempt's close; trust mode counts unverified ones.
    pub fn view_policy(&self, attempt: &AttemptRecord) -> ViewPolicy {
        ViewPolicy { cutoff: attempt.closed_at, include_unverified: self.config.trust_based }
    }

    fn score_record(&self, attempt: &AttemptRecord) -> Result<ScoreBreakdown, RuntimeError> {
        let view = self.marketplace.view(self.view_policy(attempt));
        Ok(scoring::score_attempt(&self.rulebook, attempt, &view)?)
    }

    /// Current breakdown of an attempt, running or closed.
    pub fn breakdown(&self, attempt_id: &str) -> Result<ScoreBreakdown, RuntimeError> {
        let session = self
            .sessions
            .get(attempt_id)
            .ok_or_else(|| RuntimeError::NotFound { kind: "attempt", id: attempt_id.to_string() })?;
        self.score_record(&session.attempt)
    }

    /// Breakdowns of every closed attempt, in attempt id order.
    pub fn closed_breakdowns(&self) -> Result<Vec<ScoreBreakdown>, RuntimeError> {
        self.sessions
            .values()
            .filter(|s| s.state == SessionState::Closed)
            .map(|s| self.score_record(&s.attempt))
            .collect()
    }

    /// The counted attempt of every (team, task) with at least one closed attempt.
    pub fn best_breakdowns(&self) -> Result<Vec<ScoreBreakdown>, RuntimeError> {
        let mut groups: BTreeMap<(String, String, String), Vec<ScoreBreakdown>> = BTreeMap::new();
        for b in self.closed_breakdowns()? {
            groups.entry((b.team_id.clone(), b.league_id.clone(), b.task_id.clone())).or_default().push(b);
        }
        groups
            .into_values()
            .map(|group| Ok(scoring::best_attempt(&group)?.clone()))
            .collect()
    }

    /// All royalty entries owed from counted attempts, across leagues.
    pub fn royalty_entries(&self) -> Result<Vec<RoyaltyEntry>, RuntimeError> {
        Ok(self.best_breakdowns()?.into_iter().flat_map(|b| b.royalties).collect())
    }

    pub fn royalties_for(&self, team_id: &str) -> Result<Vec<RoyaltyEntry>, RuntimeError> {
        let mut entries: Vec<_> = self.royalty_entries()?.into_iter().filter(|e| e.developer_team_id == team_id).collect();
        entries.sort();
        Ok(entries)
    }

    /// S_royalties of every registered team.
    pub fn royalty_totals(&self) -> Result<BTreeMap<String, Exact>, RuntimeError> {
        let entries = self.royalty_entries()?;
        Ok(self
            .teams
            .keys()
            .map(|id| (id.clone(), scoring::royalties_total(entries.iter().filter(|e| &e.developer_team_id == id))))
            .collect())
    }

    pub fn leaderboard(&self, league_id: &str) -> Result<Vec<LeaderboardRow>, RuntimeError> {
        self.rulebook.league(league_id)?;
        let best = self.best_breakdowns()?;
        let royalties = self.royalty_totals()?;
        let mut rows: Vec<LeaderboardRow> = self
            .teams
            .values()
            .filter(|t| t.league_id == league_id)
            .map(|t| {
                let challenge = scoring::challenge_score(
                    best.iter().filter(|b| b.team_id == t.id && b.league_id == t.league_id).map(|b| &b.s_task),
                );
                let royalty = royalties.get(&t.id).cloned().unwrap_or_else(Exact::zero);
                LeaderboardRow {
                    rank: 0,
                    team_id: t.id.clone(),
                    s_coopetition: scoring::coopetition_score(&challenge, &royalty),
                    s_challenge: challenge,
                    s_royalties: royalty,
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.s_coopetition
                .cmp(&a.s_coopetition)
                .then_with(|| b.s_challenge.cmp(&a.s_challenge))
                .then_with(|| a.team_id.cmp(&b.team_id))
        });
        for (i, row) in rows.iter_mut().enumerate() {
            row.rank = i + 1;
        }
        Ok(rows)
    }

    /// Declarations of a team's modules by others, newest last.
    pub fn notifications(&self, team_id: &str) -> Vec<Notification> {
        let mut out: Vec<Notification> = self
            .marketplace
            .declarations()
            .filter_map(|d| {
                let module = self.marketplace.module(&d.module_id)?;
                module.is_developed_by(team_id).then(|| Notification {
                    at: d.declared_at,
                    module_id: module.id.clone(),
                    user_team_id: d.user_team_id.clone(),
                    message: format!(
                        "{} declared {} for {}{}",
                        d.user_team_id,
                        module.name,
                        d.scope,
                        if d.verified { " (verified)" } else { "" }
                    ),
                })
            })
            .collect();
        out.sort_by(|a, b| a.at.cmp(&b.at).then_with(|| a.module_id.cmp(&b.module_id)));
        out
    }

    /// Module ids declared by `team_id` for any milestone.
    pub fn modules_used_by(&self, team_id: &str) -> BTreeSet<String> {
        self.marketplace
            .declarations()
            .filter(|d| d.user_team_id == team_id)
            .map(|d| d.module_id.clone())
            .collect()
    }
}
