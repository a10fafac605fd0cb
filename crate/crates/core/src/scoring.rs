//! Milestone, task, challenge and royalty scoring.
//!
//! All values are exact rationals. A milestone score is
//!
//! ```text
//! MS = 0                                   if the milestone failed
//! MS = l * (b * (1 + q/50) - p)            if it succeeded without external modules
//! MS = 10 * l * (b * (1 + q/50) - p)       if it succeeded with external modules
//! ```
//!
//! The user team keeps `T * (1 - sum(r_k) / M) * max(0, MS)` of each milestone,
//! where `M` counts the distinct external modules declared for it. Each
//! developer `d` of module `k` receives `(1/M) * (r_k / T_k) * max(0, MS)`,
//! with `T_k` the number of teams co-developing `k`. Payouts are clamped the
//! same way as the user's share and only the counted attempt of a task pays.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::exact::{parse_rational, Exact, Fraction};
use crate::marketplace::Scope;
use crate::rulebook::{LeagueSpec, MilestoneSpec, Rulebook, RulebookError, TaskSpec};
use crate::Timestamp;

/// Multiplier applied when a milestone is solved with another team's module.
pub const TRANSFER_MULTIPLIER: i64 = 10;

/// Divisor of the subjective bonus: q = 10 adds 20 % to the base score.
pub const SUBJECTIVE_DIVISOR: i64 = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("milestone {milestone}: {message}")]
    CatalogMismatch { milestone: String, message: String },
    #[error("milestone {0:?} is not part of the task")]
    UnknownMilestone(String),
    #[error("milestone {0:?} has more than one result")]
    DuplicateResult(String),
    #[error("more than one alternative of {0:?} marked successful")]
    MutualExclusionViolation(String),
    #[error("unknown task conditional level {0:?}")]
    UnknownTaskLevel(String),
    #[error("attempt {number} exceeds the limit of {limit}")]
    AttemptNumber { number: u32, limit: u32 },
    #[error("attempt belongs to {found}, expected {expected}")]
    WrongTask { expected: String, found: String },
    #[error("no attempts to choose from")]
    EmptyAttempts,
    #[error("team {0:?} cannot earn royalties from its own attempt")]
    SelfRoyalty(String),
    #[error(transparent)]
    Rulebook(#[from] RulebookError),
}

/// Referee quality score in `[0, 10]`, one decimal place.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubjectiveScore(u8);

impl SubjectiveScore {
    pub const MAX_TENTHS: u8 = 100;

    pub fn from_tenths(tenths: u8) -> Option<Self> {
        (tenths <= Self::MAX_TENTHS).then_some(SubjectiveScore(tenths))
    }

    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn ratio(self) -> BigRational {
        BigRational::new(self.0.into(), 10.into())
    }

    pub fn parse(text: &str) -> Option<Self> {
        let value = parse_rational(text).ok()?;
        let tenths = value * BigRational::from_integer(10.into());
        if !tenths.is_integer() {
            return None;
        }
        let t: i64 = tenths.to_integer().try_into().ok()?;
        u8::try_from(t).ok().and_then(Self::from_tenths)
    }
}

impl fmt::Display for SubjectiveScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl Serialize for SubjectiveScore {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(f64::from(self.0) / 10.0)
    }
}

impl<'de> Deserialize<'de> for SubjectiveScore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let f = Fraction::deserialize(deserializer)?;
        SubjectiveScore::parse(&f.to_string())
            .ok_or_else(|| de::Error::custom(format!("subjective score {f} must be in [0, 10] with one decimal")))
    }
}

/// `1 + q/50`, within `[1, 1.2]`.
pub fn subjective_factor(q: SubjectiveScore) -> BigRational {
    BigRational::one() + q.ratio() / BigRational::from_integer(SUBJECTIVE_DIVISOR.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneResult {
    pub milestone_id: String,
    pub success: bool,
    /// Conditional level id from the milestone catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default)]
    pub subjective_score: SubjectiveScore,
    /// Penalty ids, one entry per occurrence.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub penalties: Vec<String>,
}

impl MilestoneResult {
    pub fn success(milestone_id: impl Into<String>, level: impl Into<String>) -> Self {
        MilestoneResult {
            milestone_id: milestone_id.into(),
            success: true,
            level: Some(level.into()),
            subjective_score: SubjectiveScore::default(),
            penalties: Vec::new(),
        }
    }

    pub fn failure(milestone_id: impl Into<String>) -> Self {
        MilestoneResult {
            milestone_id: milestone_id.into(),
            success: false,
            level: None,
            subjective_score: SubjectiveScore::default(),
            penalties: Vec::new(),
        }
    }

    pub fn with_subjective(mut self, q: SubjectiveScore) -> Self {
        self.subjective_score = q;
        self
    }

    pub fn with_penalty(mut self, penalty: impl Into<String>) -> Self {
        self.penalties.push(penalty.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub team_id: String,
    pub league_id: String,
    pub task_id: String,
    pub attempt_number: u32,
    /// Task conditional level id.
    pub task_level: String,
    pub results: Vec<MilestoneResult>,
    pub started_at: Timestamp,
    #[serde(default)]
    pub closed_at: Option<Timestamp>,
}

/// A module a team declared for one milestone, as seen by scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalModule {
    pub module_id: String,
    pub royalty_rate: Fraction,
    pub developer_team_ids: BTreeSet<String>,
}

/// Supplies the verified external modules of a team for a milestone.
pub trait MarketplaceView {
    fn external_modules(&self, user_team_id: &str, scope: &Scope) -> Vec<ExternalModule>;
}

/// Fixed lookup table, for offline recomputation and tests.
#[derive(Debug, Clone, Default)]
pub struct StaticView {
    entries: BTreeMap<(String, Scope), Vec<ExternalModule>>,
}

impl StaticView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, team: &str, scope: Scope, modules: Vec<ExternalModule>) -> Self {
        self.entries.entry((team.to_string(), scope)).or_default().extend(modules);
        self
    }
}

impl MarketplaceView for StaticView {
    fn external_modules(&self, user_team_id: &str, scope: &Scope) -> Vec<ExternalModule> {
        self.entries.get(&(user_team_id.to_string(), scope.clone())).cloned().unwrap_or_default()
    }
}

fn mismatch(spec: &MilestoneSpec, message: impl Into<String>) -> ScoringError {
    ScoringError::CatalogMismatch { milestone: spec.id.clone(), message: message.into() }
}

fn ratio_int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Resolved inputs of one milestone result.
struct Resolved<'a> {
    level: Option<&'a Fraction>,
    penalty_points: u64,
}

fn resolve<'a>(spec: &'a MilestoneSpec, result: &MilestoneResult) -> Result<Resolved<'a>, ScoringError> {
    if result.milestone_id != spec.id {
        return Err(mismatch(spec, format!("result is for {:?}", result.milestone_id)));
    }
    let level = match &result.level {
        Some(id) => Some(&spec.level(id).ok_or_else(|| mismatch(spec, format!("unknown conditional level {id:?}")))?.factor),
        None if result.success => return Err(mismatch(spec, "successful result without a conditional level")),
        None => None,
    };
    let mut penalty_points = 0u64;
    for id in &result.penalties {
        let p = spec.penalty(id).ok_or_else(|| mismatch(spec, format!("unknown penalty {id:?}")))?;
        penalty_points = penalty_points.saturating_add(p.points);
    }
    Ok(Resolved { level, penalty_points })
}

/// Milestone score; may be negative when penalties outweigh the base score.
pub fn milestone_score(spec: &MilestoneSpec, result: &MilestoneResult, transfer: bool) -> Result<Exact, ScoringError> {
    let resolved = resolve(spec, result)?;
    Ok(Exact::from(raw_milestone_score(spec, result, &resolved, transfer)))
}

fn raw_milestone_score(spec: &MilestoneSpec, result: &MilestoneResult, resolved: &Resolved<'_>, transfer: bool) -> BigRational {
    if !result.success {
        return BigRational::zero();
    }
    let level = resolved.level.expect("successful results carry a level").ratio();
    let adjusted = ratio_int(spec.base_score) * subjective_factor(result.subjective_score) - ratio_int(resolved.penalty_points);
    let score = level * adjusted;
    if transfer {
        score * BigRational::from_integer(TRANSFER_MULTIPLIER.into())
    } else {
        score
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneLine {
    pub milestone_id: String,
    pub number: u32,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    pub subjective_score: SubjectiveScore,
    pub penalty_points: u64,
    pub transfer: bool,
    pub external_modules: Vec<ExternalModule>,
    /// MS_n before clamping.
    pub milestone_score: Exact,
    /// Share the user team keeps, `1 - sum(r)/M`.
    pub retention: Exact,
    pub contribution: Exact,
}

impl MilestoneLine {
    pub fn clamped_score(&self) -> BigRational {
        if self.milestone_score.is_negative() {
            BigRational::zero()
        } else {
            self.milestone_score.ratio().clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_factor: Fraction,
    pub milestones: Vec<MilestoneLine>,
    pub total: Exact,
}

impl TaskScore {
    pub fn penalty_points(&self) -> u64 {
        self.milestones.iter().map(|m| m.penalty_points).sum()
    }

    pub fn retention(&self) -> Vec<(String, Exact)> {
        self.milestones.iter().map(|m| (m.milestone_id.clone(), m.retention.clone())).collect()
    }
}

/// Modules that qualify as external for `team`: distinct ids, none co-developed by the team.
fn qualifying_modules(team: &str, mut modules: Vec<ExternalModule>) -> Vec<ExternalModule> {
    modules.retain(|m| !m.developer_team_ids.contains(team) && !m.developer_team_ids.is_empty());
    modules.sort_by(|a, b| a.module_id.cmp(&b.module_id));
    modules.dedup_by(|a, b| a.module_id == b.module_id);
    modules
}

fn check_results(task: &TaskSpec, attempt: &AttemptRecord) -> Result<(), ScoringError> {
    let mut seen = BTreeSet::new();
    let mut successes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &attempt.results {
        let spec = task.milestone(&r.milestone_id).ok_or_else(|| ScoringError::UnknownMilestone(r.milestone_id.clone()))?;
        if !seen.insert(r.milestone_id.as_str()) {
            return Err(ScoringError::DuplicateResult(r.milestone_id.clone()));
        }
        if r.success {
            if let Some(group) = &spec.exclusive_group {
                let n = successes.entry(group.as_str()).or_default();
                *n += 1;
                if *n > 1 {
                    return Err(ScoringError::MutualExclusionViolation(group.clone()));
                }
            }
        }
    }
    Ok(())
}

/// Scores one attempt of a task.
pub fn task_score(
    league: &LeagueSpec,
    task: &TaskSpec,
    attempt: &AttemptRecord,
    view: &dyn MarketplaceView,
) -> Result<TaskScore, ScoringError> {
    if attempt.league_id != league.id || attempt.task_id != task.id {
        return Err(ScoringError::WrongTask {
            expected: format!("{}/{}", league.id, task.id),
            found: format!("{}/{}", attempt.league_id, attempt.task_id),
        });
    }
    if attempt.attempt_number == 0 || attempt.attempt_number > league.attempt_limit {
        return Err(ScoringError::AttemptNumber { number: attempt.attempt_number, limit: league.attempt_limit });
    }
    let task_factor = league
        .task_level(&attempt.task_level)
        .ok_or_else(|| ScoringError::UnknownTaskLevel(attempt.task_level.clone()))?
        .factor
        .clone();
    check_results(task, attempt)?;

    let mut lines = Vec::with_capacity(task.milestones.len());
    let mut total = BigRational::zero();
    for spec in &task.milestones {
        let result = attempt
            .results
            .iter()
            .find(|r| r.milestone_id == spec.id)
            .cloned()
            .unwrap_or_else(|| MilestoneResult::failure(spec.id.clone()));
        let resolved = resolve(spec, &result)?;
        let scope = Scope::new(&league.id, &task.id, &spec.id);
        let modules = qualifying_modules(&attempt.team_id, view.external_modules(&attempt.team_id, &scope));
        let transfer = !modules.is_empty();
        let ms = raw_milestone_score(spec, &result, &resolved, transfer);
        let retention = if transfer {
            let royalty_sum: BigRational = modules.iter().map(|m| m.royalty_rate.ratio().clone()).sum();
            BigRational::one() - royalty_sum / ratio_int(modules.len() as u64)
        } else {
            BigRational::one()
        };
        let clamped = if ms < BigRational::zero() { BigRational::zero() } else { ms.clone() };
        let contribution = task_factor.ratio() * &retention * clamped;
        total += &contribution;
        lines.push(MilestoneLine {
            milestone_id: spec.id.clone(),
            number: spec.number,
            success: result.success,
            level: result.level.clone(),
            subjective_score: result.subjective_score,
            penalty_points: resolved.penalty_points,
            transfer,
            external_modules: modules,
            milestone_score: ms.into(),
            retention: retention.into(),
            contribution: contribution.into(),
        });
    }
    Ok(TaskScore { task_factor, milestones: lines, total: total.into() })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoyaltyEntry {
    pub developer_team_id: String,
    pub user_team_id: String,
    pub league_id: String,
    pub task_id: String,
    pub milestone_id: String,
    pub module_id: String,
    pub attempt_number: u32,
    pub amount: Exact,
}

/// Royalty entries owed to every developer for one scored attempt.
pub fn royalty_entries(attempt: &AttemptRecord, score: &TaskScore) -> Vec<RoyaltyEntry> {
    let mut out = Vec::new();
    for line in score.milestones.iter().filter(|l| l.transfer) {
        let clamped = line.clamped_score();
        if clamped.is_zero() {
            continue;
        }
        let module_count = ratio_int(line.external_modules.len() as u64);
        for module in &line.external_modules {
            let per_developer = module.royalty_rate.ratio() / ratio_int(module.developer_team_ids.len() as u64);
            let amount = &per_developer * &clamped / &module_count;
            if amount.is_zero() {
                continue;
            }
            for developer in &module.developer_team_ids {
                if developer == &attempt.team_id {
                    continue;
                }
                out.push(RoyaltyEntry {
                    developer_team_id: developer.clone(),
                    user_team_id: attempt.team_id.clone(),
                    league_id: attempt.league_id.clone(),
                    task_id: attempt.task_id.clone(),
                    milestone_id: line.milestone_id.clone(),
                    module_id: module.module_id.clone(),
                    attempt_number: attempt.attempt_number,
                    amount: amount.clone().into(),
                });
            }
        }
    }
    out
}

/// Royalties one developer earns from a user's scored attempt.
pub fn royalty_for_developer(
    developer_team_id: &str,
    attempt: &AttemptRecord,
    score: &TaskScore,
) -> Result<Vec<RoyaltyEntry>, ScoringError> {
    if developer_team_id == attempt.team_id {
        return Err(ScoringError::SelfRoyalty(developer_team_id.to_string()));
    }
    Ok(royalty_entries(attempt, score).into_iter().filter(|e| e.developer_team_id == developer_team_id).collect())
}

pub fn royalties_total<'a>(entries: impl IntoIterator<Item = &'a RoyaltyEntry>) -> Exact {
    Exact::sum(entries.into_iter().map(|e| &e.amount))
}

pub fn challenge_score<'a>(task_scores: impl IntoIterator<Item = &'a Exact>) -> Exact {
    Exact::sum(task_scores)
}

pub fn coopetition_score(challenge: &Exact, royalties: &Exact) -> Exact {
    Exact::from(challenge.ratio() + royalties.ratio())
}

/// Everything computed for one attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub team_id: String,
    pub league_id: String,
    pub task_id: String,
    pub attempt_number: u32,
    pub task_level: String,
    pub started_at: Timestamp,
    pub closed_at: Option<Timestamp>,
    pub task_factor: Fraction,
    pub penalty_points: u64,
    pub milestones: Vec<MilestoneLine>,
    pub s_task: Exact,
    pub royalties: Vec<RoyaltyEntry>,
}

pub fn score_attempt(
    rulebook: &Rulebook,
    attempt: &AttemptRecord,
    view: &dyn MarketplaceView,
) -> Result<ScoreBreakdown, ScoringError> {
    let (league, task) = rulebook.task(&attempt.league_id, &attempt.task_id)?;
    let score = task_score(league, task, attempt, view)?;
    let royalties = royalty_entries(attempt, &score);
    Ok(ScoreBreakdown {
        team_id: attempt.team_id.clone(),
        league_id: attempt.league_id.clone(),
        task_id: attempt.task_id.clone(),
        attempt_number: attempt.attempt_number,
        task_level: attempt.task_level.clone(),
        started_at: attempt.started_at,
        closed_at: attempt.closed_at,
        penalty_points: score.penalty_points(),
        task_factor: score.task_factor,
        s_task: score.total,
        milestones: score.milestones,
        royalties,
    })
}

/// Ordering used to pick the counted attempt: higher score, then fewer
/// penalty points, then earlier close, then lower attempt number.
pub fn compare_attempts(a: &ScoreBreakdown, b: &ScoreBreakdown) -> Ordering {
    let key = |s: &ScoreBreakdown| {
        (
            s.s_task.clone(),
            Reverse(s.penalty_points),
            Reverse(s.closed_at.map(|t| (0u8, t)).unwrap_or((1, Timestamp::MAX_UTC))),
            Reverse(s.attempt_number),
        )
    };
    key(a).cmp(&key(b))
}

pub fn best_attempt(scored: &[ScoreBreakdown]) -> Result<&ScoreBreakdown, ScoringError> {
    scored.iter().max_by(|a, b| compare_attempts(a, b)).ok_or(ScoringError::EmptyAttempts)
}
