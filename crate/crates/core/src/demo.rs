//! Demo event shaped like the 2024 coopetition: the three leagues' teams,
//! 24 + 32 + 34 module uploads, pre-event integrations that form two separate
//! graphs, on-site integrations that join them, and scored attempts.
//!
//! Module names follow the published module list; the remaining uploads,
//! all dates other than the on-site week, and every score are synthetic.

use chrono::{Duration, TimeZone, Utc};

use crate::exact::Fraction;
use crate::marketplace::{DeclarationDraft, ModuleCategory, ModuleDraft, ModuleKind, Scope, UploadWindow};
use crate::roles::Actor;
use crate::rulebook::{bundled, MilestoneSpec, Rulebook};
use crate::runtime::{Applied, Competition, EventConfig, Event, OutcomeInput, RuntimeError, Team};
use crate::scoring::SubjectiveScore;
use crate::Timestamp;

pub const COMMITTEE_ID: &str = "committee";
pub const REFEREE_ID: &str = "referee";
pub const EVALUATOR_ID: &str = "evaluator";

/// `(id, name, institution, league, robot)`
pub const TEAMS: [(&str, &str, &str, &str, &str); 15] = [
    ("tum-mirmi", "TUM-MIRMI", "TUM", "irl", "Franka FR3 / Franka Hand / Realsense D435i"),
    ("hcr", "HCR Team", "J. Stefan Inst.", "irl", "Franka FR3 / Franka Hand / Realsense D435"),
    ("tecnalia", "Tecnalia Flexbotics", "Tecnalia", "irl", "Nextage / Pneumatic EE / Stereo Vision"),
    ("fraunhofer-ipa", "Fraunhofer IPA", "Fraunhofer IPA", "irl", "UR5e / WSG 50-110 / Realsense D435"),
    ("oscar", "OSCAR", "CEA", "irl", "UR10e / Robotiq 2F-140 / Realsense D435, Phoxi M, FT Sensor"),
    ("alter-ego", "Alter-Ego", "University of Pisa", "srl", "Alter-Ego"),
    ("inria", "INRIA", "INRIA", "srl", "Inria Tiago Dual"),
    ("susr", "SUSR Team", "ISIR, Sorbonne Université", "srl", "TIAGo"),
    ("dlr", "DLR", "DLR", "srl", "Rollin' Justin"),
    ("kit", "KIT", "H2T", "srl", "ARMAR-7"),
    ("socrob", "SocRob@Home", "ISR (IST)", "srl", "TIAGo"),
    ("gepetto", "GEPETTO", "LAAS, CNRS", "srl", ""),
    ("use", "USE", "GRVC Robotics Lab", "orl", "Dual Arm Aerial Manipulation Robot & LiCAS A1"),
    ("rsl", "RSL", "RSL ETH Zurich", "orl", "Transformer Robot & Leva"),
    ("iit", "IIT", "Istituto Italiano Di Tecnologia", "orl", "Centauro"),
];

/// `(id, name, category, kind, developer)`
const NAMED_MODULES: [(&str, &str, ModuleCategory, ModuleKind, &str); 16] = [
    ("tum-task-board-perception", "TUM Task Board Perception Package", ModuleCategory::PoseEstimationVisionDetection, ModuleKind::Software, "tum-mirmi"),
    ("pinocchio", "Pinocchio Library", ModuleCategory::RigidBodyDynamicsControl, ModuleKind::Software, "gepetto"),
    ("opensot-cartesio", "OpenSoT & CartesI/O", ModuleCategory::RigidBodyDynamicsControl, ModuleKind::Software, "iit"),
    ("happypose", "HappyPose", ModuleCategory::PoseEstimationVisionDetection, ModuleKind::Software, "inria"),
    ("object-tracking-3d", "3D Object Tracking", ModuleCategory::PoseEstimationVisionDetection, ModuleKind::Software, "kit"),
    ("yolo-ros", "YOLO ROS", ModuleCategory::PoseEstimationVisionDetection, ModuleKind::Software, "socrob"),
    ("blenderproc", "BlenderProc", ModuleCategory::SimulationDigitalEnvironments, ModuleKind::Software, "dlr"),
    ("nancy-digital-twin", "Nancy Digital Twin", ModuleCategory::SimulationDigitalEnvironments, ModuleKind::Data, "inria"),
    ("kitchens-envs", "Kitchens Envs", ModuleCategory::SimulationDigitalEnvironments, ModuleKind::Data, "alter-ego"),
    ("dlr-kitchen", "DLR Kitchen", ModuleCategory::SimulationDigitalEnvironments, ModuleKind::Data, "dlr"),
    ("icp-localization", "ICP Localization", ModuleCategory::LocalizationMapping, ModuleKind::Software, "rsl"),
    ("kit-object-dataset", "KIT Object Dataset", ModuleCategory::DatasetsModels, ModuleKind::Data, "kit"),
    ("table-obj", "Table obj", ModuleCategory::DatasetsModels, ModuleKind::Data, "susr"),
    ("speech-to-text", "Speech-To-Text", ModuleCategory::SpeechCommunication, ModuleKind::Software, "socrob"),
    ("text-to-speech", "Text-To-Speech", ModuleCategory::SpeechCommunication, ModuleKind::Software, "susr"),
    ("llm-task-planning", "LLM Task Planning", ModuleCategory::SpeechCommunication, ModuleKind::Software, "inria"),
];

pub const WINDOW_UPLOADS: [usize; 3] = [24, 32, 34];

/// `(user, module, league, task, milestone)`, declared before the freeze.
const PRE_EVENT: [(&str, &str, &str, &str, &str); 14] = [
    ("hcr", "tum-task-board-perception", "irl", "task-board", "MS1"),
    ("tecnalia", "tum-task-board-perception", "irl", "task-board", "MS4"),
    ("fraunhofer-ipa", "tum-task-board-perception", "irl", "task-board", "MS10"),
    ("oscar", "tum-task-board-perception", "irl", "task-board", "MS1"),
    ("inria", "pinocchio", "srl", "multi-functional-1", "MS7"),
    ("iit", "nancy-digital-twin", "orl", "delivery-3", "MS1"),
    ("alter-ego", "llm-task-planning", "srl", "multi-functional-1", "MS2"),
    ("susr", "happypose", "srl", "multi-functional-1", "MS6"),
    ("socrob", "table-obj", "srl", "multi-functional-1", "MS6"),
    ("kit", "speech-to-text", "srl", "multi-functional-1", "MS2"),
    ("dlr", "kit-object-dataset", "srl", "multi-functional-1", "MS6"),
    ("kit", "dlr-kitchen", "srl", "multi-functional-1", "MS3"),
    ("rsl", "opensot-cartesio", "orl", "delivery-1", "MS6"),
    ("use", "icp-localization", "orl", "delivery-1", "MS3"),
];

/// Declared on site, after the freeze.
const POST_EVENT: [(&str, &str, &str, &str, &str); 6] = [
    ("fraunhofer-ipa", "happypose", "irl", "task-board", "MS1"),
    ("use", "yolo-ros", "orl", "delivery-1", "MS5"),
    ("iit", "nancy-digital-twin", "orl", "delivery-3", "MS3"),
    ("iit", "speech-to-text", "orl", "delivery-3", "MS2"),
    ("alter-ego", "text-to-speech", "srl", "multi-functional-1", "MS2"),
    ("inria", "pinocchio", "srl", "multi-functional-2", "MS7"),
];

fn at(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> Timestamp {
    Utc.with_ymd_and_hms(y, mo, d, h, mi, 0).single().expect("valid demo timestamp")
}

pub fn windows() -> Vec<UploadWindow> {
    vec![
        UploadWindow { id: "W1".into(), opens_at: at(2024, 7, 15, 0, 0), closes_at: at(2024, 9, 1, 0, 0) },
        UploadWindow { id: "W2".into(), opens_at: at(2024, 9, 1, 0, 0), closes_at: at(2024, 10, 1, 0, 0) },
        UploadWindow { id: "W3".into(), opens_at: at(2024, 10, 1, 0, 0), closes_at: at(2024, 11, 1, 0, 0) },
    ]
}

pub fn freeze_at() -> Timestamp {
    at(2024, 11, 24, 8, 0)
}

pub fn config() -> EventConfig {
    EventConfig {
        name: "Coopetition 2024 demo".into(),
        rulebook_version: bundled().version,
        windows: windows(),
        default_royalty: Fraction::new(1, 4),
        freeze_at: Some(freeze_at()),
        trust_based: false,
        domain: Default::default(),
    }
}

/// Highest-factor conditional level of a milestone.
pub fn top_level(spec: &MilestoneSpec) -> &str {
    spec.conditional_levels
        .iter()
        .max_by(|a, b| a.factor.cmp(&b.factor))
        .map(|l| l.id.as_str())
        .expect("milestones have levels")
}

struct Script {
    comp: Competition,
    now: Timestamp,
}

impl Script {
    fn run(&mut self, actor: Actor, event: Event) -> Result<Applied, RuntimeError> {
        self.comp.execute(actor, event, self.now)
    }

    fn tick(&mut self, minutes: i64) {
        self.now += Duration::minutes(minutes);
    }

    fn declare(&mut self, (user, module, league, task, ms): (&str, &str, &str, &str, &str)) -> Result<(), RuntimeError> {
        let draft = DeclarationDraft {
            user_team_id: user.into(),
            module_id: module.into(),
            scope: Scope::new(league, task, ms),
        };
        let Applied::Declaration(d) = self.run(Actor::team(user), Event::IntegrationDeclared { declaration: draft })? else {
            unreachable!("declarations yield declarations")
        };
        self.tick(5);
        self.run(Actor::referee(REFEREE_ID), Event::IntegrationVerified { declaration_id: d.id })?;
        self.tick(5);
        Ok(())
    }

    /// Opens, fills and closes one attempt. `plan` maps milestone ids to
    /// `(level override, q tenths, penalties)`; unlisted milestones fail.
    fn attempt(
        &mut self,
        team: &str,
        task: &str,
        task_level: &str,
        plan: &[(&str, Option<&str>, u8, &[&str])],
    ) -> Result<(), RuntimeError> {
        let referee = Actor::referee(REFEREE_ID);
        let Applied::Session(session) = self.run(
            referee.clone(),
            Event::AttemptOpened { team_id: team.into(), task_id: task.into(), task_level: task_level.into() },
        )?
        else {
            unreachable!("opening yields a session")
        };
        let league = self.comp.team(team).expect("registered").league_id.clone();
        for (ms, level, q, penalties) in plan {
            self.tick(1);
            let spec = self.comp.rulebook().lookup_milestone(&league, task, ms)?;
            let level = level.map(str::to_string).unwrap_or_else(|| top_level(spec).to_string());
            let outcome = OutcomeInput {
                milestone_id: ms.to_string(),
                success: true,
                level: Some(level),
                subjective_score: None,
                penalties: penalties.iter().map(|p| p.to_string()).collect(),
            };
            self.run(referee.clone(), Event::OutcomeRecorded { attempt_id: session.id.clone(), outcome })?;
            if *q > 0 {
                let score = SubjectiveScore::from_tenths(*q).expect("demo q within range");
                self.run(
                    Actor::evaluator(EVALUATOR_ID),
                    Event::SubjectiveScored { attempt_id: session.id.clone(), milestone_id: ms.to_string(), score },
                )?;
            }
        }
        self.tick(1);
        self.run(referee, Event::AttemptClosed { attempt_id: session.id })?;
        self.tick(15);
        Ok(())
    }
}

/// Builds the demo event. `token_digest` gives the stored digest of each
/// team's bearer token, if any.
pub fn build(token_digest: impl Fn(&str) -> Option<String>) -> Result<Competition, RuntimeError> {
    build_with(bundled(), token_digest)
}

pub fn build_with(rulebook: Rulebook, token_digest: impl Fn(&str) -> Option<String>) -> Result<Competition, RuntimeError> {
    let committee = Actor::committee(COMMITTEE_ID);
    let start = at(2024, 7, 1, 9, 0);
    let comp = Competition::new(rulebook, config(), committee.clone(), start)?;
    let mut s = Script { comp, now: start };

    for (id, name, institution, league, robot) in TEAMS {
        let team = Team {
            id: id.into(),
            name: name.into(),
            institution: institution.into(),
            league_id: league.into(),
            robot_description: robot.into(),
        };
        s.run(committee.clone(), Event::TeamRegistered { team, token_sha256: token_digest(id) })?;
        s.tick(1);
    }

    let mut drafts: Vec<ModuleDraft> = NAMED_MODULES
        .iter()
        .map(|(id, name, category, kind, dev)| ModuleDraft {
            id: id.to_string(),
            name: name.to_string(),
            category: *category,
            kind: *kind,
            developer_team_ids: [dev.to_string()].into(),
            royalty_rate: None,
            description: String::new(),
            artifact_uri: format!("https://example.org/modules/{id}"),
        })
        .collect();
    let total: usize = WINDOW_UPLOADS.iter().sum();
    for i in drafts.len()..total {
        let (dev, ..) = TEAMS[i % TEAMS.len()];
        let category = ModuleCategory::ALL[i % ModuleCategory::ALL.len()];
        let kind = if i % 3 == 0 { ModuleKind::Data } else { ModuleKind::Software };
        let mut developers = vec![dev.to_string()];
        if i % 17 == 0 {
            developers.push(TEAMS[(i + 1) % TEAMS.len()].0.to_string());
        }
        drafts.push(ModuleDraft {
            id: format!("{dev}-module-{i:02}"),
            name: format!("{} {}", dev.to_uppercase(), category.as_str().replace('_', " ")),
            category,
            kind,
            developer_team_ids: developers.into_iter().collect(),
            royalty_rate: None,
            description: "Synthetic demo module".into(),
            artifact_uri: String::new(),
        });
    }

    let mut drafts = drafts.into_iter();
    for (window, count) in windows().iter().zip(WINDOW_UPLOADS) {
        s.now = window.opens_at + Duration::days(1);
        for draft in drafts.by_ref().take(count) {
            let uploader = Actor::team(draft.developer_team_ids.iter().next().expect("developer").clone());
            s.run(uploader, Event::ModuleUploaded { module: draft })?;
            s.tick(30);
        }
    }

    s.now = at(2024, 11, 10, 9, 0);
    for decl in PRE_EVENT {
        s.declare(decl)?;
    }

    s.now = freeze_at();
    s.run(committee, Event::MarketplaceFrozen)?;
    s.tick(30);
    for decl in POST_EVENT {
        s.declare(decl)?;
    }

    const NONE: &[&str] = &[];
    let all_irl: Vec<(&str, Option<&str>, u8, &[&str])> =
        ["MS1", "MS2", "MS3", "MS4", "MS5", "MS6", "MS7", "MS8", "MS9", "MS10"].iter().map(|m| (*m, None, 50, NONE)).collect();
    s.attempt("tum-mirmi", "task-board", "board-random", &all_irl)?;
    s.attempt("hcr", "task-board", "board-random", &[("MS1", None, 70, NONE), ("MS2", None, 0, NONE)])?;
    s.attempt(
        "hcr",
        "task-board",
        "board-random",
        &[("MS1", None, 80, NONE), ("MS2", None, 0, NONE), ("MS3", None, 0, &["collision"])],
    )?;
    s.attempt("hcr", "task-board", "board-fixed", &[("MS1", None, 50, NONE)])?;
    s.attempt("tecnalia", "task-board", "board-fixed", &[("MS1", Some("teleop-remote"), 0, NONE), ("MS4", None, 60, NONE)])?;
    s.attempt("fraunhofer-ipa", "task-board", "board-random", &[("MS1", None, 60, NONE), ("MS10", None, 40, NONE)])?;
    s.attempt("oscar", "task-board", "board-random", &[("MS1", None, 0, NONE), ("MS2", None, 30, NONE)])?;

    s.attempt(
        "inria",
        "multi-functional-1",
        "random",
        &[("MS1", None, 50, NONE), ("MS2", None, 50, NONE), ("MS3", None, 0, NONE), ("MS6", Some("cluttered-visible-known"), 0, NONE), ("MS7", None, 70, NONE)],
    )?;
    s.attempt("inria", "multi-functional-2", "one-variable", &[("MS1", None, 0, NONE), ("MS7", Some("teleop-remote"), 0, NONE)])?;
    s.attempt("alter-ego", "multi-functional-1", "two-variables", &[("MS1", None, 0, NONE), ("MS2", None, 60, NONE)])?;
    s.attempt("kit", "multi-functional-1", "random", &[("MS2", None, 40, NONE), ("MS3", None, 0, &["hits-obstacles"])])?;
    s.attempt("susr", "multi-functional-1", "random", &[("MS1", None, 0, NONE), ("MS6", Some("target-only"), 20, NONE)])?;
    s.attempt("socrob", "multi-functional-1", "random", &[("MS1", None, 0, NONE), ("MS6", Some("occluded-known"), 0, NONE)])?;
    s.attempt("dlr", "multi-functional-1", "one-variable", &[("MS6", None, 50, NONE), ("MS10.2", Some("teleop-remote"), 0, NONE)])?;

    s.attempt("iit", "delivery-3", "random", &[("MS1", None, 0, NONE), ("MS2", Some("text-interface"), 0, NONE), ("MS3", None, 30, NONE)])?;
    s.attempt("use", "delivery-1", "random", &[("MS1", None, 0, NONE), ("MS3", None, 40, NONE), ("MS5", None, 50, NONE)])?;
    s.attempt("rsl", "delivery-1", "one-variable", &[("MS1", None, 0, NONE), ("MS6", Some("teleop-line-of-sight"), 0, NONE)])?;

    Ok(s.comp)
}
