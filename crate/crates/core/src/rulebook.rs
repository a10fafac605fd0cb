//! League rulebooks: tasks, milestones, conditional levels and penalties.
//!
//! A rulebook document is a JSON tree. Leagues may declare level and penalty
//! catalogs keyed by milestone type; at load time every catalog entry is
//! copied into each milestone of that type, ahead of the levels the milestone
//! lists itself. A loaded [`Rulebook`] therefore always carries the full
//! per-milestone catalog, and serializing it yields a document without
//! catalogs that loads back to the same value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exact::Fraction;

const BUNDLED_IRL: &str = include_str!("../rulebooks/irl.json");
const BUNDLED_SRL: &str = include_str!("../rulebooks/srl.json");
const BUNDLED_ORL: &str = include_str!("../rulebooks/orl.json");

/// The three league documents of the 2024 event, as `(file stem, json)`.
pub fn bundled_documents() -> [(&'static str, &'static str); 3] {
    [("irl", BUNDLED_IRL), ("srl", BUNDLED_SRL), ("orl", BUNDLED_ORL)]
}

/// All bundled leagues merged into one rulebook.
pub fn bundled() -> Rulebook {
    let books = bundled_documents()
        .iter()
        .map(|(_, text)| load_rulebook_str(text).expect("bundled rulebook is valid").rulebook)
        .collect::<Vec<_>>();
    Rulebook::merge(books).expect("bundled leagues are distinct")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RulebookError {
    #[error("malformed rulebook document: {0}")]
    Parse(String),
    #[error("invalid rulebook at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
}

impl RulebookError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        RulebookError::Validation { path: path.into(), message: message.into() }
    }

    fn not_found(kind: &'static str, id: &str) -> Self {
        RulebookError::NotFound { kind, id: id.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilestoneType {
    Navigation,
    CommandUnderstanding,
    Manipulation,
    #[serde(alias = "object_detection")]
    Perception,
    Other,
}

impl MilestoneType {
    fn key(self) -> &'static str {
        match self {
            MilestoneType::Navigation => "navigation",
            MilestoneType::CommandUnderstanding => "command_understanding",
            MilestoneType::Manipulation => "manipulation",
            MilestoneType::Perception => "perception",
            MilestoneType::Other => "other",
        }
    }
}

impl fmt::Display for MilestoneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalLevel {
    pub id: String,
    pub description: String,
    pub factor: Fraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Penalty {
    pub id: String,
    pub description: String,
    pub points: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MilestoneSpec {
    pub id: String,
    pub number: u32,
    pub description: String,
    pub milestone_type: MilestoneType,
    pub base_score: u64,
    pub conditional_levels: Vec<ConditionalLevel>,
    pub penalties: Vec<Penalty>,
    /// Sibling milestones sharing a group are alternatives; at most one of
    /// them may succeed in an attempt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusive_group: Option<String>,
}

impl MilestoneSpec {
    pub fn level(&self, id: &str) -> Option<&ConditionalLevel> {
        self.conditional_levels.iter().find(|l| l.id == id)
    }

    pub fn penalty(&self, id: &str) -> Option<&Penalty> {
        self.penalties.iter().find(|p| p.id == id)
    }

    pub fn has_full_autonomy_level(&self) -> bool {
        self.conditional_levels.iter().any(|l| l.factor.is_one())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskSpec {
    pub id: String,
    pub name: String,
    pub milestones: Vec<MilestoneSpec>,
}

impl TaskSpec {
    pub fn milestone(&self, id: &str) -> Option<&MilestoneSpec> {
        self.milestones.iter().find(|m| m.id == id)
    }

    pub fn total_base_score(&self) -> u64 {
        self.milestones.iter().map(|m| m.base_score).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeagueSpec {
    pub id: String,
    pub name: String,
    pub default_royalty: Fraction,
    pub attempt_limit: u32,
    pub attempt_duration_secs: u64,
    pub task_conditional_levels: Vec<ConditionalLevel>,
    pub tasks: Vec<TaskSpec>,
}

impl LeagueSpec {
    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn task_level(&self, id: &str) -> Option<&ConditionalLevel> {
        self.task_conditional_levels.iter().find(|l| l.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rulebook {
    pub version: String,
    pub leagues: Vec<LeagueSpec>,
}

/// Non-fatal findings from validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RulebookWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadedRulebook {
    pub rulebook: Rulebook,
    pub warnings: Vec<RulebookWarning>,
}

impl Rulebook {
    pub fn league(&self, id: &str) -> Result<&LeagueSpec, RulebookError> {
        self.leagues
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| RulebookError::not_found("league", id))
    }

    pub fn task(&self, league_id: &str, task_id: &str) -> Result<(&LeagueSpec, &TaskSpec), RulebookError> {
        let league = self.league(league_id)?;
        let task = league.task(task_id).ok_or_else(|| RulebookError::not_found("task", task_id))?;
        Ok((league, task))
    }

    pub fn lookup_milestone(
        &self,
        league_id: &str,
        task_id: &str,
        milestone_id: &str,
    ) -> Result<&MilestoneSpec, RulebookError> {
        let (_, task) = self.task(league_id, task_id)?;
        task.milestone(milestone_id)
            .ok_or_else(|| RulebookError::not_found("milestone", milestone_id))
    }

    /// Looks up a task conditional level by description (or by id).
    pub fn task_conditional_factor(&self, league_id: &str, level: &str) -> Result<&Fraction, RulebookError> {
        let league = self.league(league_id)?;
        league
            .task_conditional_levels
            .iter()
            .find(|l| l.description == level)
            .or_else(|| league.task_level(level))
            .map(|l| &l.factor)
            .ok_or_else(|| RulebookError::not_found("task conditional level", level))
    }

    /// Combines several single-league books. Versions are joined with `+`
    /// when they differ.
    pub fn merge(books: impl IntoIterator<Item = Rulebook>) -> Result<Rulebook, RulebookError> {
        let mut versions = BTreeSet::new();
        let mut leagues: Vec<LeagueSpec> = Vec::new();
        for book in books {
            versions.insert(book.version);
            for league in book.leagues {
                if leagues.iter().any(|l| l.id == league.id) {
                    return Err(RulebookError::invalid(
                        format!("leagues[{}]", league.id),
                        "duplicate league id across rulebooks",
                    ));
                }
                leagues.push(league);
            }
        }
        if leagues.is_empty() {
            return Err(RulebookError::invalid("leagues", "no leagues"));
        }
        Ok(Rulebook { version: versions.into_iter().collect::<Vec<_>>().join("+"), leagues })
    }
}

// Document shapes. Integers are read signed so negative scores surface as
// validation errors with a path instead of opaque parse failures.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulebookDocument {
    version: String,
    leagues: Vec<LeagueDocument>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeagueDocument {
    id: String,
    name: String,
    default_royalty: Fraction,
    attempt_limit: i64,
    attempt_duration_secs: i64,
    task_conditional_levels: Vec<ConditionalLevel>,
    #[serde(default)]
    level_catalogs: BTreeMap<MilestoneType, Vec<ConditionalLevel>>,
    #[serde(default)]
    penalty_catalogs: BTreeMap<MilestoneType, Vec<PenaltyDocument>>,
    tasks: Vec<TaskDocument>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDocument {
    id: String,
    name: String,
    milestones: Vec<MilestoneDocument>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PenaltyDocument {
    id: String,
    description: String,
    points: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MilestoneDocument {
    id: String,
    number: i64,
    description: String,
    milestone_type: MilestoneType,
    base_score: i64,
    #[serde(default)]
    conditional_levels: Vec<ConditionalLevel>,
    #[serde(default)]
    penalties: Vec<PenaltyDocument>,
    #[serde(default)]
    exclusive_group: Option<String>,
}

pub fn load_rulebook_str(text: &str) -> Result<LoadedRulebook, RulebookError> {
    let doc: RulebookDocument =
        serde_json::from_str(text).map_err(|e| RulebookError::Parse(e.to_string()))?;
    validate(doc)
}

/// Loads and validates a rulebook from an already parsed tree.
pub fn load_rulebook(document: &serde_json::Value) -> Result<LoadedRulebook, RulebookError> {
    let doc = RulebookDocument::deserialize(document).map_err(|e| RulebookError::Parse(e.to_string()))?;
    validate(doc)
}

fn check_unit(path: &str, factor: &Fraction) -> Result<(), RulebookError> {
    if factor.is_unit_interval() {
        Ok(())
    } else {
        Err(RulebookError::invalid(path, format!("factor {factor} outside [0, 1]")))
    }
}

fn check_id(path: &str, id: &str) -> Result<(), RulebookError> {
    if id.trim().is_empty() {
        return Err(RulebookError::invalid(path, "empty id"));
    }
    if id.contains('/') {
        return Err(RulebookError::invalid(path, format!("id {id:?} must not contain '/'")));
    }
    Ok(())
}

fn validate(doc: RulebookDocument) -> Result<LoadedRulebook, RulebookError> {
    let mut warnings = Vec::new();
    if doc.version.trim().is_empty() {
        return Err(RulebookError::invalid("version", "empty version"));
    }
    if doc.leagues.is_empty() {
        return Err(RulebookError::invalid("leagues", "no leagues"));
    }
    let mut league_ids = BTreeSet::new();
    let mut leagues = Vec::with_capacity(doc.leagues.len());
    for (li, league) in doc.leagues.into_iter().enumerate() {
        let lp = format!("leagues[{li}]");
        check_id(&format!("{lp}.id"), &league.id)?;
        if !league_ids.insert(league.id.clone()) {
            return Err(RulebookError::invalid(format!("{lp}.id"), format!("duplicate league id {:?}", league.id)));
        }
        check_unit(&format!("{lp}.default_royalty"), &league.default_royalty)?;
        if league.attempt_limit < 1 {
            return Err(RulebookError::invalid(format!("{lp}.attempt_limit"), "must be at least 1"));
        }
        if league.attempt_duration_secs <= 0 {
            return Err(RulebookError::invalid(format!("{lp}.attempt_duration_secs"), "must be positive"));
        }
        if league.task_conditional_levels.is_empty() {
            return Err(RulebookError::invalid(format!("{lp}.task_conditional_levels"), "no task conditional levels"));
        }
        let mut seen = BTreeSet::new();
        for (i, level) in league.task_conditional_levels.iter().enumerate() {
            let p = format!("{lp}.task_conditional_levels[{i}]");
            check_id(&format!("{p}.id"), &level.id)?;
            if !seen.insert(level.id.as_str()) {
                return Err(RulebookError::invalid(format!("{p}.id"), format!("duplicate level id {:?}", level.id)));
            }
            check_unit(&format!("{p}.factor"), &level.factor)?;
        }
        if !league.task_conditional_levels.iter().any(|l| l.factor.is_one()) {
            return Err(RulebookError::invalid(
                format!("{lp}.task_conditional_levels"),
                "no level with factor 1.0",
            ));
        }
        if league.tasks.is_empty() {
            return Err(RulebookError::invalid(format!("{lp}.tasks"), "no tasks"));
        }
        let mut tasks = Vec::with_capacity(league.tasks.len());
        let mut task_ids = BTreeSet::new();
        for (ti, task) in league.tasks.into_iter().enumerate() {
            let tp = format!("{lp}.tasks[{ti}]");
            check_id(&format!("{tp}.id"), &task.id)?;
            if !task_ids.insert(task.id.clone()) {
                return Err(RulebookError::invalid(format!("{tp}.id"), format!("duplicate task id {:?}", task.id)));
            }
            if task.milestones.is_empty() {
                return Err(RulebookError::invalid(format!("{tp}.milestones"), "no milestones"));
            }
            let mut milestones = Vec::with_capacity(task.milestones.len());
            let mut ms_ids = BTreeSet::new();
            let mut last_number = 0;
            for (mi, ms) in task.milestones.into_iter().enumerate() {
                let mp = format!("{tp}.milestones[{mi}]");
                check_id(&format!("{mp}.id"), &ms.id)?;
                if !ms_ids.insert(ms.id.clone()) {
                    return Err(RulebookError::invalid(format!("{mp}.id"), format!("duplicate milestone id {:?}", ms.id)));
                }
                if ms.number < 1 {
                    return Err(RulebookError::invalid(format!("{mp}.number"), "must be a positive integer"));
                }
                if ms.number < last_number {
                    return Err(RulebookError::invalid(format!("{mp}.number"), "milestones out of order"));
                }
                last_number = ms.number;
                if ms.base_score < 0 {
                    return Err(RulebookError::invalid(format!("{mp}.base_score"), "must be non-negative"));
                }
                let mut levels: Vec<ConditionalLevel> =
                    league.level_catalogs.get(&ms.milestone_type).cloned().unwrap_or_default();
                let catalog_len = levels.len();
                levels.extend(ms.conditional_levels);
                let mut level_ids = BTreeSet::new();
                for (i, level) in levels.iter().enumerate() {
                    let p = if i < catalog_len {
                        format!("{lp}.level_catalogs.{}[{i}]", ms.milestone_type)
                    } else {
                        format!("{mp}.conditional_levels[{}]", i - catalog_len)
                    };
                    check_id(&format!("{p}.id"), &level.id)?;
                    if !level_ids.insert(level.id.clone()) {
                        return Err(RulebookError::invalid(
                            format!("{p}.id"),
                            format!("duplicate level id {:?} in milestone {}", level.id, ms.id),
                        ));
                    }
                    check_unit(&format!("{p}.factor"), &level.factor)?;
                }
                if levels.is_empty() {
                    return Err(RulebookError::invalid(format!("{mp}.conditional_levels"), "no conditional levels"));
                }
                let mut penalty_docs: Vec<PenaltyDocument> =
                    league.penalty_catalogs.get(&ms.milestone_type).cloned().unwrap_or_default();
                let catalog_len = penalty_docs.len();
                penalty_docs.extend(ms.penalties);
                let mut penalties = Vec::with_capacity(penalty_docs.len());
                let mut penalty_ids = BTreeSet::new();
                for (i, pen) in penalty_docs.into_iter().enumerate() {
                    let p = if i < catalog_len {
                        format!("{lp}.penalty_catalogs.{}[{i}]", ms.milestone_type)
                    } else {
                        format!("{mp}.penalties[{}]", i - catalog_len)
                    };
                    check_id(&format!("{p}.id"), &pen.id)?;
                    if !penalty_ids.insert(pen.id.clone()) {
                        return Err(RulebookError::invalid(format!("{p}.id"), format!("duplicate penalty id {:?}", pen.id)));
                    }
                    if pen.points < 0 {
                        return Err(RulebookError::invalid(format!("{p}.points"), "must be non-negative"));
                    }
                    penalties.push(Penalty { id: pen.id, description: pen.description, points: pen.points as u64 });
                }
                let spec = MilestoneSpec {
                    id: ms.id,
                    number: u32::try_from(ms.number)
                        .map_err(|_| RulebookError::invalid(format!("{mp}.number"), "too large"))?,
                    description: ms.description,
                    milestone_type: ms.milestone_type,
                    base_score: ms.base_score as u64,
                    conditional_levels: levels,
                    penalties,
                    exclusive_group: ms.exclusive_group,
                };
                if !spec.has_full_autonomy_level() {
                    warnings.push(RulebookWarning {
                        path: mp.clone(),
                        message: format!("milestone {} cannot be scored at full autonomy (no level with factor 1.0)", spec.id),
                    });
                }
                milestones.push(spec);
            }
            tasks.push(TaskSpec { id: task.id, name: task.name, milestones });
        }
        leagues.push(LeagueSpec {
            id: league.id,
            name: league.name,
            default_royalty: league.default_royalty,
            attempt_limit: u32::try_from(league.attempt_limit)
                .map_err(|_| RulebookError::invalid(format!("{lp}.attempt_limit"), "too large"))?,
            attempt_duration_secs: league.attempt_duration_secs as u64,
            task_conditional_levels: league.task_conditional_levels,
            tasks,
        });
    }
    Ok(LoadedRulebook { rulebook: Rulebook { version: doc.version, leagues }, warnings })
}
