use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::json;

use coopetition_core::analytics::{
    build_transfer_graph, category_color, connected_components, node_sizes, reuse_stats, to_dot, CompetitionSnapshot,
    ExportFormat, Phase,
};
use coopetition_core::commands::{CommandRequest, PinSet, Platform};
use coopetition_core::marketplace::{DeclarationDraft, ModuleDraft, ModuleStatus};
use coopetition_core::runtime::OutcomeInput;
use coopetition_core::scoring::SubjectiveScore;
use coopetition_core::{Actor, Applied, Exact, Event, ModuleCategory, Role, RuntimeError, Scope, Team};

use crate::api::{created, ok, parse_body, ApiError, SCHEMA_VERSION};
use crate::auth::{self, new_token, token_digest};
use crate::Service;

type Shared = State<Arc<Service>>;
type Reply = Result<Response, ApiError>;

const STAFF: &[Role] = &[Role::Referee, Role::TechnicalCommittee];

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/teams", post(register_team).get(list_teams))
        .route("/teams/{id}", get(get_team))
        .route("/teams/{id}/royalties", get(team_royalties))
        .route("/teams/{id}/notifications", get(team_notifications))
        .route("/modules", post(upload_module).get(list_modules))
        .route("/modules/{id}", get(get_module))
        .route("/modules/{id}/remove", post(remove_module))
        .route("/marketplace", get(marketplace_status))
        .route("/marketplace/freeze", post(freeze_marketplace))
        .route("/integrations", post(declare_integration).get(list_integrations))
        .route("/integrations/{id}/verify", post(verify_integration))
        .route("/attempts", post(open_attempt).get(list_attempts))
        .route("/attempts/{id}", get(get_attempt))
        .route("/attempts/{id}/outcomes", post(record_outcome))
        .route("/attempts/{id}/subjective", post(record_subjective))
        .route("/attempts/{id}/close", post(close_attempt))
        .route("/attempts/{id}/score", get(attempt_score))
        .route("/leaderboard/{league}", get(leaderboard))
        .route("/commands/generate", post(generate_command))
        .route("/commands", get(list_commands))
        .route("/graph", get(graph))
        .route("/stats", get(stats))
        .route("/ledger", get(ledger))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(service)
}

fn caller(s: &Service, headers: &HeaderMap) -> Result<Option<Actor>, ApiError> {
    s.read(|c| auth::principal(headers, s.staff(), c))
}

fn runtime<T>(r: Result<T, RuntimeError>) -> Result<T, ApiError> {
    r.map_err(ApiError::from)
}

async fn health() -> Response {
    ok(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION"), "schema_version": SCHEMA_VERSION }))
}

#[derive(Deserialize)]
struct TeamBody {
    id: String,
    name: String,
    #[serde(default)]
    institution: String,
    league_id: String,
    #[serde(default)]
    robot_description: String,
}

async fn register_team(State(s): Shared, headers: HeaderMap, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::TechnicalCommittee], "register teams")?;
    let b: TeamBody = parse_body(&body)?;
    let team = Team {
        id: b.id,
        name: b.name,
        institution: b.institution,
        league_id: b.league_id,
        robot_description: b.robot_description,
    };
    let token = new_token();
    let digest = token_digest(&token);
    let Applied::Team(team) = s.mutate(actor, |_| Event::TeamRegistered { team, token_sha256: Some(digest) })? else {
        unreachable!("registration yields a team")
    };
    Ok(created(json!({ "team": team, "token": token })))
}

async fn list_teams(State(s): Shared, Query(q): Query<BTreeMap<String, String>>) -> Reply {
    let league = q.get("league");
    let teams: Vec<Team> = s.read(|c| c.teams().filter(|t| league.is_none_or(|l| &t.league_id == l)).cloned().collect());
    Ok(ok(teams))
}

async fn get_team(State(s): Shared, Path(id): Path<String>) -> Reply {
    let team = s.read(|c| c.team(&id).cloned());
    team.map(ok).ok_or_else(|| ApiError::not_found(format!("team {id:?} not found")))
}

async fn team_royalties(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> Reply {
    auth::require_team_or_staff(caller(&s, &headers)?, &id, "read royalties")?;
    let (entries, total) = s.read(|c| -> Result<_, ApiError> {
        c.team(&id).ok_or_else(|| ApiError::not_found(format!("team {id:?} not found")))?;
        let entries = runtime(c.royalties_for(&id))?;
        let total = coopetition_core::scoring::royalties_total(&entries);
        Ok((entries, total))
    })?;
    Ok(ok(json!({ "team_id": id, "total": total, "entries": entries })))
}

async fn team_notifications(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> Reply {
    auth::require_team_or_staff(caller(&s, &headers)?, &id, "read notifications")?;
    let notes = s.read(|c| {
        c.team(&id).ok_or_else(|| ApiError::not_found(format!("team {id:?} not found")))?;
        Ok::<_, ApiError>(c.notifications(&id))
    })?;
    Ok(ok(notes))
}

async fn upload_module(State(s): Shared, headers: HeaderMap, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::Team, Role::TechnicalCommittee], "upload modules")?;
    let draft: ModuleDraft = parse_body(&body)?;
    let Applied::Module(m) = s.mutate(actor, |_| Event::ModuleUploaded { module: draft })? else {
        unreachable!("uploads yield modules")
    };
    Ok(created(m))
}

async fn list_modules(State(s): Shared, Query(q): Query<BTreeMap<String, String>>) -> Reply {
    let category = match q.get("category") {
        Some(text) => Some(ModuleCategory::parse(text).ok_or_else(|| ApiError::validation(format!("unknown category {text:?}")))?),
        None => None,
    };
    let developer = q.get("developer");
    let include_removed = q.get("include_removed").is_some_and(|v| v == "true");
    let modules: Vec<_> = s.read(|c| {
        c.marketplace()
            .modules()
            .filter(|m| category.is_none_or(|k| m.category == k))
            .filter(|m| developer.is_none_or(|d| m.is_developed_by(d)))
            .filter(|m| include_removed || m.status == ModuleStatus::Active)
            .cloned()
            .collect()
    });
    Ok(ok(modules))
}

async fn get_module(State(s): Shared, Path(id): Path<String>) -> Reply {
    let module = s.read(|c| c.marketplace().module(&id).cloned());
    module.map(ok).ok_or_else(|| ApiError::not_found(format!("module {id:?} not found")))
}

async fn remove_module(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::TechnicalCommittee], "remove modules")?;
    let Applied::Module(m) = s.mutate(actor, |_| Event::ModuleRemoved { module_id: id })? else {
        unreachable!("removal yields the module")
    };
    Ok(ok(m))
}

async fn marketplace_status(State(s): Shared) -> Reply {
    let status = s.read(|c| {
        let m = c.marketplace();
        json!({
            "frozen_at": m.frozen_at(),
            "scheduled_freeze_at": c.config().freeze_at,
            "windows": m.windows(),
            "default_royalty": m.default_royalty(),
            "trust_based": c.config().trust_based,
        })
    });
    Ok(ok(status))
}

async fn freeze_marketplace(State(s): Shared, headers: HeaderMap) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::TechnicalCommittee], "freeze the marketplace")?;
    let Applied::Frozen(at) = s.mutate(actor, |_| Event::MarketplaceFrozen)? else {
        unreachable!("freezing yields the instant")
    };
    Ok(ok(json!({ "frozen_at": at })))
}

#[derive(Deserialize)]
struct DeclarationBody {
    #[serde(default)]
    user_team_id: Option<String>,
    module_id: String,
    #[serde(flatten)]
    scope: Scope,
}

async fn declare_integration(State(s): Shared, headers: HeaderMap, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::Team, Role::Referee, Role::TechnicalCommittee], "declare integrations")?;
    let b: DeclarationBody = parse_body(&body)?;
    let user_team_id = match (b.user_team_id, actor.has(Role::Team)) {
        (Some(u), _) => u,
        (None, true) => actor.id.clone(),
        (None, false) => return Err(ApiError::validation("user_team_id is required for staff declarations")),
    };
    let declaration = DeclarationDraft { user_team_id, module_id: b.module_id, scope: b.scope };
    let Applied::Declaration(d) = s.mutate(actor, |_| Event::IntegrationDeclared { declaration })? else {
        unreachable!("declarations yield declarations")
    };
    Ok(created(d))
}

async fn list_integrations(State(s): Shared, Query(q): Query<BTreeMap<String, String>>) -> Reply {
    let user = q.get("user");
    let module = q.get("module");
    let decls: Vec<_> = s.read(|c| {
        c.marketplace()
            .declarations()
            .filter(|d| user.is_none_or(|u| &d.user_team_id == u))
            .filter(|d| module.is_none_or(|m| &d.module_id == m))
            .cloned()
            .collect()
    });
    Ok(ok(decls))
}

async fn verify_integration(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, STAFF, "verify integrations")?;
    let Applied::Declaration(d) = s.mutate(actor, |_| Event::IntegrationVerified { declaration_id: id })? else {
        unreachable!("verification yields the declaration")
    };
    Ok(ok(d))
}

#[derive(Deserialize)]
struct OpenBody {
    team_id: String,
    task_id: String,
    task_level: String,
}

async fn open_attempt(State(s): Shared, headers: HeaderMap, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::Referee], "open attempts")?;
    let b: OpenBody = parse_body(&body)?;
    let event = Event::AttemptOpened { team_id: b.team_id, task_id: b.task_id, task_level: b.task_level };
    let Applied::Session(session) = s.mutate(actor, |_| event)? else {
        unreachable!("opening yields a session")
    };
    Ok(created(session))
}

async fn list_attempts(State(s): Shared, Query(q): Query<BTreeMap<String, String>>) -> Reply {
    let team = q.get("team");
    let sessions: Vec<_> =
        s.read(|c| c.sessions().filter(|x| team.is_none_or(|t| &x.attempt.team_id == t)).cloned().collect());
    Ok(ok(sessions))
}

async fn get_attempt(State(s): Shared, Path(id): Path<String>) -> Reply {
    let session = s.read(|c| c.session(&id).cloned());
    session.map(ok).ok_or_else(|| ApiError::not_found(format!("attempt {id:?} not found")))
}

async fn record_outcome(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::Referee], "record milestone outcomes")?;
    let outcome: OutcomeInput = parse_body(&body)?;
    let Applied::Session(session) = s.mutate(actor, |_| Event::OutcomeRecorded { attempt_id: id, outcome })? else {
        unreachable!("outcomes yield the session")
    };
    Ok(ok(session))
}

#[derive(Deserialize)]
struct SubjectiveBody {
    milestone_id: String,
    score: SubjectiveScore,
}

async fn record_subjective(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::Referee, Role::ExternalEvaluator], "record subjective scores")?;
    let b: SubjectiveBody = parse_body(&body)?;
    let event = Event::SubjectiveScored { attempt_id: id, milestone_id: b.milestone_id, score: b.score };
    let Applied::Session(session) = s.mutate(actor, |_| event)? else {
        unreachable!("subjective scores yield the session")
    };
    Ok(ok(session))
}

async fn close_attempt(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, &[Role::Referee], "close attempts")?;
    let Applied::Breakdown(b) = s.mutate(actor, |_| Event::AttemptClosed { attempt_id: id })? else {
        unreachable!("closing yields a breakdown")
    };
    Ok(ok(b))
}

async fn attempt_score(State(s): Shared, Path(id): Path<String>) -> Reply {
    Ok(ok(s.read(|c| runtime(c.breakdown(&id)))?))
}

async fn leaderboard(State(s): Shared, Path(league): Path<String>) -> Reply {
    Ok(ok(s.read(|c| runtime(c.leaderboard(&league)))?))
}

#[derive(Deserialize)]
struct CommandBody {
    league_id: String,
    task_number: u32,
    #[serde(default)]
    base_kitchen: Option<String>,
    #[serde(default)]
    pins: PinSet,
    #[serde(default)]
    platform: Option<Platform>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn generate_command(State(s): Shared, headers: HeaderMap, body: Bytes) -> Reply {
    let actor = auth::require(caller(&s, &headers)?, STAFF, "issue commands")?;
    let b: CommandBody = parse_body(&body)?;
    let Applied::Command(cmd) = s.mutate(actor, |c| Event::CommandIssued {
        request: CommandRequest {
            league_id: b.league_id,
            task_number: b.task_number,
            base_kitchen: b.base_kitchen,
            pins: b.pins,
            platform: b.platform,
            seed: b.seed.unwrap_or_else(|| s.seed_for(c.next_seq())),
        },
    })?
    else {
        unreachable!("commands yield commands")
    };
    Ok(created(cmd))
}

async fn list_commands(State(s): Shared) -> Reply {
    Ok(ok(s.read(|c| c.commands().to_vec())))
}

async fn graph(State(s): Shared, Query(q): Query<BTreeMap<String, String>>) -> Reply {
    let phase: Phase = q.get("phase").map(String::as_str).unwrap_or("post").parse().map_err(|e| ApiError::validation(format!("{e}")))?;
    let format: ExportFormat =
        q.get("format").map(String::as_str).unwrap_or("json").parse().map_err(|e| ApiError::validation(format!("{e}")))?;
    s.read(|c| {
        let snap = runtime(CompetitionSnapshot::of(c))?;
        let graph = build_transfer_graph(&snap.input(c), phase);
        Ok(match format {
            ExportFormat::Dot => ([(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")], to_dot(&graph)).into_response(),
            ExportFormat::Json => {
                let sizes: Vec<f64> = node_sizes(&graph).into_iter().map(|r| Exact::from(r).to_f64()).collect();
                let colors: BTreeMap<&str, &str> = ModuleCategory::ALL.iter().map(|k| (k.as_str(), category_color(*k))).collect();
                ok(json!({
                    "graph": graph,
                    "connected_components": connected_components(&graph),
                    "node_sizes": sizes,
                    "category_colors": colors,
                }))
            }
        })
    })
}

async fn stats(State(s): Shared) -> Reply {
    s.read(|c| {
        let snap = runtime(CompetitionSnapshot::of(c))?;
        Ok(ok(reuse_stats(&snap.input(c))))
    })
}

async fn ledger(State(s): Shared, headers: HeaderMap) -> Reply {
    auth::require(caller(&s, &headers)?, STAFF, "read the ledger")?;
    Ok(ok(s.read(|c| c.ledger().to_vec())))
}
