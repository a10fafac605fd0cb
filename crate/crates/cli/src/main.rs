//! `coopetition`: run and inspect coopetition events.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use coopetition_core::analytics::{build_transfer_graph, export_graph, CompetitionSnapshot, Phase};
use coopetition_core::commands::{generate, parse_pins, CommandRequest, Platform, VariableDomain};
use coopetition_core::ledger::{read_ledger, write_ledger};
use coopetition_core::marketplace::UploadWindow;
use coopetition_core::rulebook::{bundled, bundled_documents, LoadedRulebook};
use coopetition_core::{demo, load_rulebook_str, Actor, Competition, EventConfig, Fraction, Rulebook, Timestamp};
use coopetition_server::{new_token, token_digest, Service, ServiceConfig, SystemClock};

#[derive(Parser)]
#[command(name = "coopetition", version, about = "Run and inspect coopetition robotics events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
    /// Check a rulebook file, or every `.json` file in a directory.
    ValidateRulebook {
        path: PathBuf,
    },
    /// Offline scoring.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Task command generation.
    #[command(subcommand)]
    Command(CommandCommand),
    /// Module transfer graphs.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Demo data.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Args)]
struct RulebookArgs {
    /// Rulebook file or directory; repeat to merge leagues. Defaults to the bundled 2024 leagues.
    #[arg(long = "rulebook", env = "COOP_RULEBOOK", value_delimiter = ',')]
    rulebooks: Vec<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "COOP_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "COOP_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, env = "COOP_DATA_DIR", default_value = "coop-data")]
    data_dir: PathBuf,
    #[command(flatten)]
    rulebook: RulebookArgs,
    /// Start of the on-site phase (RFC 3339); the marketplace freezes then.
    #[arg(long, env = "COOP_FREEZE_AT", value_parser = parse_time)]
    freeze_at: Option<Timestamp>,
    /// Upload window as ID=START/END (RFC 3339); repeatable.
    #[arg(long = "window", env = "COOP_WINDOWS", value_delimiter = ',', value_parser = parse_window)]
    windows: Vec<UploadWindow>,
    /// Count integrations before a referee verifies them.
    #[arg(long, env = "COOP_TRUST_BASED")]
    trust_based: bool,
    /// Base seed for commands requested without one.
    #[arg(long, env = "COOP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "COOP_DEFAULT_ROYALTY", default_value = "0.25")]
    default_royalty: Fraction,
    #[arg(long, env = "COOP_EVENT_NAME", default_value = "Coopetition event")]
    event_name: String,
    #[arg(long, env = "COOP_COMMITTEE_TOKEN", hide_env_values = true)]
    committee_token: Option<String>,
    #[arg(long, env = "COOP_REFEREE_TOKEN", hide_env_values = true)]
    referee_token: Option<String>,
    #[arg(long, env = "COOP_EVALUATOR_TOKEN", hide_env_values = true)]
    evaluator_token: Option<String>,
}

#[derive(Subcommand)]
enum ScoreCommand {
    /// Rebuild every breakdown and leaderboard from a ledger file.
    Replay {
        ledger: PathBuf,
        #[command(flatten)]
        rulebook: RulebookArgs,
    },
}

#[derive(Subcommand)]
enum CommandCommand {
    /// Draw one task command.
    Generate {
        #[arg(long)]
        league: String,
        #[arg(long)]
        task: u32,
        #[arg(long, env = "COOP_SEED", default_value_t = 0)]
        seed: u64,
        /// Fix a variable, as key=value; repeatable.
        #[arg(long = "pin")]
        pins: Vec<String>,
        #[arg(long)]
        base_kitchen: Option<String>,
        /// aerial or ground
        #[arg(long, value_parser = parse_platform)]
        platform: Option<Platform>,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Write the pre- or post-event transfer graph.
    Export {
        /// Ledger to read; defaults to the data directory's ledger.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, env = "COOP_DATA_DIR", default_value = "coop-data")]
        data_dir: PathBuf,
        #[command(flatten)]
        rulebook: RulebookArgs,
        #[arg(long, default_value = "post")]
        phase: Phase,
        /// dot or json
        #[arg(long, default_value = "dot")]
        format: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Write the demo event ledger, rulebooks and team tokens.
    Init {
        #[arg(long, default_value = "fixtures")]
        output: PathBuf,
        /// Replace existing files.
        #[arg(long)]
        force: bool,
    },
}

fn parse_time(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc)).map_err(|e| format!("{s:?}: {e}"))
}

fn parse_window(s: &str) -> Result<UploadWindow, String> {
    let (id, range) = s.split_once('=').ok_or("expected ID=START/END")?;
    let (a, b) = range.split_once('/').ok_or("expected ID=START/END")?;
    Ok(UploadWindow { id: id.trim().into(), opens_at: parse_time(a.trim())?, closes_at: parse_time(b.trim())? })
}

fn parse_platform(s: &str) -> Result<Platform, String> {
    serde_json::from_value(json!(s.to_ascii_lowercase())).map_err(|_| format!("{s:?}: expected aerial or ground"))
}

/// Resolves `path`, `path.json`, or a directory of `.json` files.
fn rulebook_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("{} contains no .json rulebooks", path.display());
        }
        return Ok(files);
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let with_ext = path.with_extension("json");
    if with_ext.is_file() {
        return Ok(vec![with_ext]);
    }
    bail!("{}: no such rulebook", path.display())
}

fn load_file(path: &Path) -> anyhow::Result<LoadedRulebook> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_rulebook_str(&text).with_context(|| format!("{} is not a valid rulebook", path.display()))
}

fn load_rulebooks(args: &RulebookArgs) -> anyhow::Result<Rulebook> {
    if args.rulebooks.is_empty() {
        return Ok(bundled());
    }
    let mut books = Vec::new();
    for path in &args.rulebooks {
        for file in rulebook_files(path)? {
            let loaded = load_file(&file)?;
            for w in &loaded.warnings {
                tracing::warn!("{}: {}: {}", file.display(), w.path, w.message);
            }
            books.push(loaded.rulebook);
        }
    }
    Ok(Rulebook::merge(books)?)
}

fn validate_rulebook(path: &Path) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    for file in rulebook_files(path)? {
        let loaded = load_file(&file)?;
        for league in &loaded.rulebook.leagues {
            let milestones: usize = league.tasks.iter().map(|t| t.milestones.len()).sum();
            writeln!(
                out,
                "{}: league {} ({}), {} tasks, {} milestones, version {}",
                file.display(),
                league.id,
                league.name,
                league.tasks.len(),
                milestones,
                loaded.rulebook.version
            )?;
        }
        for w in &loaded.warnings {
            writeln!(out, "{}: warning: {}: {}", file.display(), w.path, w.message)?;
        }
    }
    Ok(())
}

fn replay(ledger: &Path, rulebook: Rulebook) -> anyhow::Result<Competition> {
    let entries = read_ledger(ledger)?;
    Ok(Competition::replay(rulebook, entries)?)
}

fn score_replay(ledger: &Path, args: &RulebookArgs) -> anyhow::Result<()> {
    let comp = replay(ledger, load_rulebooks(args)?)?;
    let mut boards = serde_json::Map::new();
    for league in &comp.rulebook().leagues {
        boards.insert(league.id.clone(), serde_json::to_value(comp.leaderboard(&league.id)?)?);
    }
    let doc = json!({
        "schema_version": coopetition_server::SCHEMA_VERSION,
        "ledger_entries": comp.ledger().len(),
        "breakdowns": comp.closed_breakdowns()?,
        "leaderboards": boards,
    });
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

fn command_generate(request: CommandRequest) -> anyhow::Result<()> {
    let cmd = generate(&VariableDomain::default(), &request)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", cmd.text)?;
    serde_json::to_writer_pretty(&mut out, &cmd)?;
    writeln!(out)?;
    for w in &cmd.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn graph_export(ledger: &Path, args: &RulebookArgs, phase: Phase, format: &str, output: Option<&Path>) -> anyhow::Result<()> {
    let comp = replay(ledger, load_rulebooks(args)?)?;
    let snap = CompetitionSnapshot::of(&comp)?;
    let graph = build_transfer_graph(&snap.input(&comp), phase);
    let bytes = export_graph(&graph, format)?;
    match output {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn write_new(path: &Path, bytes: &[u8], force: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to replace it", path.display());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn fixtures_init(output: &Path, force: bool) -> anyhow::Result<()> {
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let tokens: std::collections::BTreeMap<String, String> =
        demo::TEAMS.iter().map(|t| (t.0.to_string(), new_token())).collect();
    let comp = demo::build(|id| tokens.get(id).map(|t| token_digest(t)))?;
    let ledger = output.join("ledger.jsonl");
    if ledger.exists() && !force {
        bail!("{} exists; pass --force to replace it", ledger.display());
    }
    write_ledger(&ledger, comp.ledger())?;
    for (stem, text) in bundled_documents() {
        write_new(&output.join(format!("{stem}.json")), text.as_bytes(), force)?;
    }
    write_new(&output.join("team-tokens.json"), &serde_json::to_vec_pretty(&tokens)?, force)?;
    println!(
        "wrote {} ledger entries, {} teams and {} modules to {}",
        comp.ledger().len(),
        comp.teams().count(),
        comp.marketplace().modules().count(),
        output.display()
    );
    Ok(())
}

/// Staff tokens from flags, else from `staff-tokens.json`, else freshly generated.
fn staff_tokens(args: &ServeArgs) -> anyhow::Result<Vec<(String, Actor)>> {
    let path = args.data_dir.join("staff-tokens.json");
    let mut stored: std::collections::BTreeMap<String, String> = if path.exists() {
        serde_json::from_slice(&fs::read(&path)?).with_context(|| format!("reading {}", path.display()))?
    } else {
        Default::default()
    };
    let mut changed = false;
    let mut pick = |role: &str, given: &Option<String>| -> String {
        if let Some(t) = given {
            return t.clone();
        }
        stored
            .entry(role.to_string())
            .or_insert_with(|| {
                changed = true;
                new_token()
            })
            .clone()
    };
    let tokens = vec![
        (pick("committee", &args.committee_token), Actor::committee(demo::COMMITTEE_ID)),
        (pick("referee", &args.referee_token), Actor::referee(demo::REFEREE_ID)),
        (pick("evaluator", &args.evaluator_token), Actor::evaluator(demo::EVALUATOR_ID)),
    ];
    if changed {
        fs::write(&path, serde_json::to_vec_pretty(&stored)?).with_context(|| format!("writing {}", path.display()))?;
        tracing::info!("generated staff tokens in {}", path.display());
    }
    Ok(tokens)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let rulebook = load_rulebooks(&args.rulebook)?;
    fs::create_dir_all(&args.data_dir).with_context(|| format!("creating {}", args.data_dir.display()))?;
    let now = Utc::now();
    let windows = if args.windows.is_empty() {
        let closes = args.freeze_at.unwrap_or(now + Duration::days(30));
        vec![UploadWindow { id: "W1".into(), opens_at: now.min(closes - Duration::seconds(1)), closes_at: closes }]
    } else {
        args.windows.clone()
    };
    let event = EventConfig {
        name: args.event_name.clone(),
        rulebook_version: rulebook.version.clone(),
        windows,
        default_royalty: args.default_royalty.clone(),
        freeze_at: args.freeze_at,
        trust_based: args.trust_based,
        domain: VariableDomain::default(),
    };
    let config = ServiceConfig {
        data_dir: args.data_dir.clone(),
        rulebook,
        event,
        staff: staff_tokens(&args)?,
        seed: args.seed,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let service = Service::open(config, Arc::new(SystemClock))?;
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(args.bind, args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.bind, args.port))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        coopetition_server::serve(service, listener, shutdown_signal()).await
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::ValidateRulebook { path } => validate_rulebook(&path),
        Command::Score(ScoreCommand::Replay { ledger, rulebook }) => score_replay(&ledger, &rulebook),
        Command::Command(CommandCommand::Generate { league, task, seed, pins, base_kitchen, platform }) => {
            let pins = parse_pins(pins.iter().map(String::as_str))?;
            command_generate(CommandRequest { league_id: league, task_number: task, base_kitchen, pins, platform, seed })
        }
        Command::Graph(GraphCommand::Export { ledger, data_dir, rulebook, phase, format, output }) => {
            let ledger = ledger.unwrap_or_else(|| data_dir.join("ledger.jsonl"));
            graph_export(&ledger, &rulebook, phase, &format, output.as_deref())
        }
        Command::Fixtures(FixturesCommand::Init { output, force }) => fixtures_init(&output, force),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
