//! Scoring, marketplace and event runtime for robotics coopetition events.
//!
//! Rulebooks are data; everything else is derived from an append-only event
//! ledger so any published number can be recomputed offline.

pub mod analytics;
pub mod commands;
pub mod demo;
pub mod exact;
pub mod ledger;
pub mod marketplace;
pub mod roles;
pub mod rulebook;
pub mod runtime;
pub mod scoring;

pub use exact::{Exact, Fraction};
pub use marketplace::{MarketplaceError, MarketplaceState, ModuleCategory, ModuleRecord, Scope};
pub use roles::{Actor, Role};
pub use rulebook::{load_rulebook, load_rulebook_str, LeagueSpec, MilestoneSpec, Rulebook, RulebookError, TaskSpec};
pub use runtime::{Applied, Competition, Event, EventConfig, LedgerEntry, RuntimeError, Team};
pub use scoring::{AttemptRecord, MilestoneResult, RoyaltyEntry, ScoreBreakdown, ScoringError, SubjectiveScore};

pub type Timestamp = chrono::DateTime<chrono::Utc>;
