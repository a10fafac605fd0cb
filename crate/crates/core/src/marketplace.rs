//! Module marketplace: uploads inside windows, the on-site freeze, integration
//! declarations and the per-milestone set of external modules a team used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exact::Fraction;
use crate::roles::{Actor, Role};
use crate::rulebook::Rulebook;
use crate::scoring::{ExternalModule, MarketplaceView};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarketplaceError {
    #[error("marketplace frozen at {0}; no new modules can be uploaded")]
    FrozenMarketplace(Timestamp),
    #[error("no upload window is open at {0}")]
    OutsideWindow(Timestamp),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("marketplace already frozen at {0}")]
    AlreadyFrozen(Timestamp),
    #[error("team {team:?} co-develops module {module:?} and cannot declare it as external")]
    SelfIntegration { team: String, module: String },
    #[error("module {0:?} has been removed from the marketplace")]
    ModuleRemoved(String),
    #[error("scope does not resolve: {0}")]
    UnknownScope(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleCategory {
    RigidBodyDynamicsControl,
    PoseEstimationVisionDetection,
    SimulationDigitalEnvironments,
    LocalizationMapping,
    DatasetsModels,
    SpeechCommunication,
    Other,
}

impl ModuleCategory {
    pub const ALL: [ModuleCategory; 7] = [
        ModuleCategory::RigidBodyDynamicsControl,
        ModuleCategory::PoseEstimationVisionDetection,
        ModuleCategory::SimulationDigitalEnvironments,
        ModuleCategory::LocalizationMapping,
        ModuleCategory::DatasetsModels,
        ModuleCategory::SpeechCommunication,
        ModuleCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleCategory::RigidBodyDynamicsControl => "rigid_body_dynamics_control",
            ModuleCategory::PoseEstimationVisionDetection => "pose_estimation_vision_detection",
            ModuleCategory::SimulationDigitalEnvironments => "simulation_digital_environments",
            ModuleCategory::LocalizationMapping => "localization_mapping",
            ModuleCategory::DatasetsModels => "datasets_models",
            ModuleCategory::SpeechCommunication => "speech_communication",
            ModuleCategory::Other => "other",
        }
    }

    pub fn parse(text: &str) -> Option<ModuleCategory> {
        ModuleCategory::ALL.into_iter().find(|c| c.as_str() == text)
    }
}

impl fmt::Display for ModuleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Software,
    Data,
    Hardware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleStatus {
    Active,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub id: String,
    pub name: String,
    pub category: ModuleCategory,
    pub kind: ModuleKind,
    pub developer_team_ids: BTreeSet<String>,
    pub royalty_rate: Fraction,
    pub uploaded_at: Timestamp,
    pub upload_window_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub artifact_uri: String,
    pub status: ModuleStatus,
}

impl ModuleRecord {
    /// Number of co-developing teams.
    pub fn developer_count(&self) -> usize {
        self.developer_team_ids.len()
    }

    pub fn is_developed_by(&self, team_id: &str) -> bool {
        self.developer_team_ids.contains(team_id)
    }
}

/// Upload request. An unset royalty takes the event default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDraft {
    pub id: String,
    pub name: String,
    pub category: ModuleCategory,
    pub kind: ModuleKind,
    pub developer_team_ids: BTreeSet<String>,
    #[serde(default)]
    pub royalty_rate: Option<Fraction>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub artifact_uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadWindow {
    pub id: String,
    pub opens_at: Timestamp,
    pub closes_at: Timestamp,
}

impl UploadWindow {
    /// Half-open: `[opens_at, closes_at)`.
    pub fn contains(&self, at: Timestamp) -> bool {
        self.opens_at <= at && at < self.closes_at
    }
}

/// The milestone a module was used for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scope {
    pub league_id: String,
    pub task_id: String,
    pub milestone_id: String,
}

impl Scope {
    pub fn new(league: impl Into<String>, task: impl Into<String>, milestone: impl Into<String>) -> Self {
        Scope { league_id: league.into(), task_id: task.into(), milestone_id: milestone.into() }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.league_id, self.task_id, self.milestone_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationDeclaration {
    pub id: String,
    pub user_team_id: String,
    pub module_id: String,
    #[serde(flatten)]
    pub scope: Scope,
    pub declared_at: Timestamp,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclarationDraft {
    pub user_team_id: String,
    pub module_id: String,
    #[serde(flatten)]
    pub scope: Scope,
}

/// Which declarations count when resolving external modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewPolicy {
    /// Only declarations made at or before this instant count.
    pub cutoff: Option<Timestamp>,
    /// Trust-based tracking: unverified declarations count too.
    pub include_unverified: bool,
}

impl ViewPolicy {
    pub fn verified_only() -> Self {
        ViewPolicy { cutoff: None, include_unverified: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketplaceState {
    windows: Vec<UploadWindow>,
    default_royalty: Fraction,
    modules: BTreeMap<String, ModuleRecord>,
    declarations: BTreeMap<String, IntegrationDeclaration>,
    frozen_at: Option<Timestamp>,
}

impl MarketplaceState {
    pub fn new(mut windows: Vec<UploadWindow>, default_royalty: Fraction) -> Result<Self, MarketplaceError> {
        if !default_royalty.is_unit_interval() {
            return Err(MarketplaceError::Invalid {
                field: "default_royalty",
                message: format!("{default_royalty} outside [0, 1]"),
            });
        }
        windows.sort_by(|a, b| a.opens_at.cmp(&b.opens_at));
        let mut ids = BTreeSet::new();
        for w in &windows {
            if w.opens_at >= w.closes_at {
                return Err(MarketplaceError::Invalid {
                    field: "windows",
                    message: format!("window {:?} does not open before it closes", w.id),
                });
            }
            if !ids.insert(w.id.as_str()) {
                return Err(MarketplaceError::DuplicateId(w.id.clone()));
            }
        }
        for pair in windows.windows(2) {
            if pair[1].opens_at < pair[0].closes_at {
                return Err(MarketplaceError::Invalid {
                    field: "windows",
                    message: format!("windows {:?} and {:?} overlap", pair[0].id, pair[1].id),
                });
            }
        }
        Ok(MarketplaceState {
            windows,
            default_royalty,
            modules: BTreeMap::new(),
            declarations: BTreeMap::new(),
            frozen_at: None,
        })
    }

    pub fn windows(&self) -> &[UploadWindow] {
        &self.windows
    }

    pub fn default_royalty(&self) -> &Fraction {
        &self.default_royalty
    }

    pub fn frozen_at(&self) -> Option<Timestamp> {
        self.frozen_at
    }

    /// True once the freeze instant has been reached.
    pub fn is_frozen(&self, now: Timestamp) -> bool {
        self.frozen_at.is_some_and(|f| now >= f)
    }

    pub fn modules(&self) -> impl Iterator<Item = &ModuleRecord> {
        self.modules.values()
    }

    pub fn module(&self, id: &str) -> Option<&ModuleRecord> {
        self.modules.get(id)
    }

    pub fn declarations(&self) -> impl Iterator<Item = &IntegrationDeclaration> {
        self.declarations.values()
    }

    pub fn declaration(&self, id: &str) -> Option<&IntegrationDeclaration> {
        self.declarations.get(id)
    }

    /// Id the next accepted declaration will receive.
    pub fn next_declaration_id(&self) -> String {
        format!("D{:04}", self.declarations.len() + 1)
    }

    /// Checks an upload without applying it.
    pub fn check_upload(&self, draft: &ModuleDraft, now: Timestamp) -> Result<ModuleRecord, MarketplaceError> {
        if let Some(frozen) = self.frozen_at {
            if now >= frozen {
                return Err(MarketplaceError::FrozenMarketplace(frozen));
            }
        }
        let window = self
            .windows
            .iter()
            .find(|w| w.contains(now))
            .ok_or(MarketplaceError::OutsideWindow(now))?;
        if draft.id.trim().is_empty() || draft.id.contains('/') {
            return Err(MarketplaceError::Invalid { field: "id", message: format!("{:?} is not a valid module id", draft.id) });
        }
        if self.modules.contains_key(&draft.id) {
            return Err(MarketplaceError::DuplicateId(draft.id.clone()));
        }
        if draft.developer_team_ids.is_empty() {
            return Err(MarketplaceError::Invalid { field: "developer_team_ids", message: "must not be empty".into() });
        }
        let royalty_rate = draft.royalty_rate.clone().unwrap_or_else(|| self.default_royalty.clone());
        if !royalty_rate.is_unit_interval() {
            return Err(MarketplaceError::Invalid {
                field: "royalty_rate",
                message: format!("{royalty_rate} outside [0, 1]"),
            });
        }
        Ok(ModuleRecord {
            id: draft.id.clone(),
            name: draft.name.clone(),
            category: draft.category,
            kind: draft.kind,
            developer_team_ids: draft.developer_team_ids.clone(),
            royalty_rate,
            uploaded_at: now,
            upload_window_id: window.id.clone(),
            description: draft.description.clone(),
            artifact_uri: draft.artifact_uri.clone(),
            status: ModuleStatus::Active,
        })
    }

    pub fn upload_module(&mut self, draft: ModuleDraft, now: Timestamp) -> Result<ModuleRecord, MarketplaceError> {
        let record = self.check_upload(&draft, now)?;
        self.modules.insert(record.id.clone(), record.clone());
        Ok(record)
    }

    pub fn freeze(&mut self, at: Timestamp) -> Result<(), MarketplaceError> {
        if let Some(frozen) = self.frozen_at {
            return Err(MarketplaceError::AlreadyFrozen(frozen));
        }
        self.frozen_at = Some(at);
        Ok(())
    }

    /// Checks a declaration without applying it.
    pub fn check_declaration(
        &self,
        rulebook: &Rulebook,
        draft: &DeclarationDraft,
        now: Timestamp,
    ) -> Result<IntegrationDeclaration, MarketplaceError> {
        let module = self
            .modules
            .get(&draft.module_id)
            .ok_or_else(|| MarketplaceError::NotFound { kind: "module", id: draft.module_id.clone() })?;
        if module.status == ModuleStatus::Removed {
            return Err(MarketplaceError::ModuleRemoved(module.id.clone()));
        }
        if module.is_developed_by(&draft.user_team_id) {
            return Err(MarketplaceError::SelfIntegration {
                team: draft.user_team_id.clone(),
                module: module.id.clone(),
            });
        }
        let scope = &draft.scope;
        rulebook
            .lookup_milestone(&scope.league_id, &scope.task_id, &scope.milestone_id)
            .map_err(|e| MarketplaceError::UnknownScope(format!("{scope}: {e}")))?;
        Ok(IntegrationDeclaration {
            id: self.next_declaration_id(),
            user_team_id: draft.user_team_id.clone(),
            module_id: draft.module_id.clone(),
            scope: scope.clone(),
            declared_at: now,
            verified: false,
        })
    }

    pub fn declare_integration(
        &mut self,
        rulebook: &Rulebook,
        draft: DeclarationDraft,
        now: Timestamp,
    ) -> Result<IntegrationDeclaration, MarketplaceError> {
        let decl = self.check_declaration(rulebook, &draft, now)?;
        self.declarations.insert(decl.id.clone(), decl.clone());
        Ok(decl)
    }

    pub fn verify_declaration(&mut self, id: &str) -> Result<IntegrationDeclaration, MarketplaceError> {
        let decl = self
            .declarations
            .get_mut(id)
            .ok_or_else(|| MarketplaceError::NotFound { kind: "declaration", id: id.to_string() })?;
        decl.verified = true;
        Ok(decl.clone())
    }

    pub fn check_removal(&self, module_id: &str, actor: &Actor) -> Result<&ModuleRecord, MarketplaceError> {
        if !actor.has(Role::TechnicalCommittee) {
            return Err(MarketplaceError::Unauthorized(format!(
                "{} may not remove modules; technical committee role required",
                actor.id
            )));
        }
        let module = self
            .modules
            .get(module_id)
            .ok_or_else(|| MarketplaceError::NotFound { kind: "module", id: module_id.to_string() })?;
        if module.status == ModuleStatus::Removed {
            return Err(MarketplaceError::ModuleRemoved(module_id.to_string()));
        }
        Ok(module)
    }

    /// Marks a module removed. Existing declarations keep counting for scoring.
    pub fn remove_module(&mut self, module_id: &str, actor: &Actor) -> Result<ModuleRecord, MarketplaceError> {
        self.check_removal(module_id, actor)?;
        let module = self.modules.get_mut(module_id).expect("checked above");
        module.status = ModuleStatus::Removed;
        Ok(module.clone())
    }

    /// Distinct modules a team declared for a milestone, subject to `policy`.
    /// Modules the team co-develops never qualify.
    pub fn external_modules_for(&self, user_team_id: &str, scope: &Scope, policy: ViewPolicy) -> Vec<&ModuleRecord> {
        let ids: BTreeSet<&str> = self
            .declarations
            .values()
            .filter(|d| d.user_team_id == user_team_id && &d.scope == scope)
            .filter(|d| d.verified || policy.include_unverified)
            .filter(|d| policy.cutoff.is_none_or(|c| d.declared_at <= c))
            .map(|d| d.module_id.as_str())
            .collect();
        ids.into_iter()
            .filter_map(|id| self.modules.get(id))
            .filter(|m| !m.is_developed_by(user_team_id))
            .collect()
    }

    pub fn view(&self, policy: ViewPolicy) -> DeclaredModules<'_> {
        DeclaredModules { state: self, policy }
    }
}

/// Scoring view over the marketplace's declarations.
#[derive(Debug, Clone, Copy)]
pub struct DeclaredModules<'a> {
    state: &'a MarketplaceState,
    policy: ViewPolicy,
}

impl MarketplaceView for DeclaredModules<'_> {
    fn external_modules(&self, user_team_id: &str, scope: &Scope) -> Vec<ExternalModule> {
        self.state
            .external_modules_for(user_team_id, scope, self.policy)
            .into_iter()
            .map(ExternalModule::from)
            .collect()
    }
}

impl From<&ModuleRecord> for ExternalModule {
    fn from(m: &ModuleRecord) -> Self {
        ExternalModule {
            module_id: m.id.clone(),
            royalty_rate: m.royalty_rate.clone(),
            developer_team_ids: m.developer_team_ids.clone(),
        }
    }
}
