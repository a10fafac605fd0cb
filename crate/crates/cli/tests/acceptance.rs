//! End-to-end acceptance checks. Prints one `[PASS]` or `[FAIL]` line per
//! criterion and exits non-zero if any fail.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};

use chrono::{Duration, TimeZone, Utc};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use coopetition_core::analytics::{build_transfer_graph, components, connected_components, reuse_stats, CompetitionSnapshot, Phase};
use coopetition_core::commands::{generate, CommandRequest, PinSet, Variable, VariableDomain};
use coopetition_core::marketplace::{DeclarationDraft, MarketplaceError, MarketplaceState, ModuleDraft, ModuleKind, UploadWindow};
use coopetition_core::rulebook::{bundled, ConditionalLevel, LeagueSpec, MilestoneSpec, MilestoneType, Penalty, TaskSpec};
use coopetition_core::scoring::{
    best_attempt, milestone_score, royalty_entries, score_attempt, subjective_factor, task_score, AttemptRecord, ExternalModule,
    MilestoneResult, StaticView, SubjectiveScore,
};
use coopetition_core::{demo, Actor, Competition, Event, Exact, Fraction, ModuleCategory, RuntimeError, Scope, Timestamp};

type Check = Result<(), String>;

const IRL_JSON: &str = include_str!("../../core/rulebooks/irl.json");

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn t(minute: i64) -> Timestamp {
    Utc.with_ymd_and_hms(2024, 11, 25, 9, 0, 0).unwrap() + Duration::minutes(minute)
}

fn attempt(team: &str, league: &str, task: &str, number: u32, level: &str, results: Vec<MilestoneResult>) -> AttemptRecord {
    AttemptRecord {
        team_id: team.into(),
        league_id: league.into(),
        task_id: task.into(),
        attempt_number: number,
        task_level: level.into(),
        results,
        started_at: t(0),
        closed_at: Some(t(number as i64)),
    }
}

fn q_tenths(v: u8) -> SubjectiveScore {
    SubjectiveScore::from_tenths(v).unwrap()
}

/// A one-task, one-milestone league with an adjustable level and penalty.
fn toy_league(b: u64, level: Fraction, penalty: u64, task_factor: Fraction) -> LeagueSpec {
    LeagueSpec {
        id: "toy".into(),
        name: "Toy".into(),
        default_royalty: Fraction::new(1, 4),
        attempt_limit: 3,
        attempt_duration_secs: 600,
        task_conditional_levels: vec![ConditionalLevel { id: "chosen".into(), description: String::new(), factor: task_factor }],
        tasks: vec![TaskSpec {
            id: "t".into(),
            name: "T".into(),
            milestones: vec![MilestoneSpec {
                id: "M".into(),
                number: 1,
                description: String::new(),
                milestone_type: MilestoneType::Other,
                base_score: b,
                conditional_levels: vec![ConditionalLevel { id: "lvl".into(), description: String::new(), factor: level }],
                penalties: vec![Penalty { id: "pen".into(), description: String::new(), points: penalty }],
                exclusive_group: None,
            }],
        }],
    }
}

fn toy_result(q: u8, penalties: usize) -> MilestoneResult {
    let mut r = MilestoneResult::success("M", "lvl").with_subjective(q_tenths(q));
    r.penalties = vec!["pen".into(); penalties];
    r
}

fn toy_scope() -> Scope {
    Scope::new("toy", "t", "M")
}

fn external(id: &str, r: Fraction, devs: &[&str]) -> ExternalModule {
    ExternalModule { module_id: id.into(), royalty_rate: r, developer_team_ids: devs.iter().map(|d| d.to_string()).collect() }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopetition"))
}

fn run_bin(args: &[&str], dir: &Path) -> Result<Vec<u8>, String> {
    let out = bin().args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("coopetition {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

// ---------------------------------------------------------------------------

fn perfect_irl_run() -> Check {
    // Spreadsheet route: read the document directly and evaluate by hand.
    let doc: Value = serde_json::from_str(IRL_JSON).map_err(|e| e.to_string())?;
    let milestones = doc["leagues"][0]["tasks"][0]["milestones"].as_array().ok_or("no milestones")?;
    let sum_b: i64 = milestones.iter().map(|m| m["base_score"].as_i64().unwrap()).sum();
    ensure(sum_b == 2100, || format!("IRL base scores sum to {sum_b}, expected 2100"))?;
    // l = 1, q = 5, T = 1, no penalties: sum of b * (1 + 5/50).
    let expected = rat(sum_b) * BigRational::new(55.into(), 50.into());
    ensure(expected == rat(2310), || format!("hand evaluation gives {expected}"))?;

    let book = bundled();
    let (_, task) = book.task("irl", "task-board").map_err(|e| e.to_string())?;
    let results = task
        .milestones
        .iter()
        .map(|m| MilestoneResult::success(&m.id, "autonomous").with_subjective(q_tenths(50)))
        .collect();
    let scored = score_attempt(&book, &attempt("team", "irl", "task-board", 1, "board-random", results), &StaticView::new())
        .map_err(|e| e.to_string())?;
    ensure(scored.s_task.ratio() == &expected, || format!("engine scored {}", scored.s_task))?;

    let comp = demo::build(|_| None).map_err(|e| e.to_string())?;
    let row = comp.leaderboard("irl").map_err(|e| e.to_string())?.into_iter().find(|r| r.team_id == "tum-mirmi").ok_or("no row")?;
    ensure(row.s_challenge.ratio() == &expected, || format!("demo leaderboard shows {}", row.s_challenge))
}

fn transfer_tenfold() -> Check {
    let strategy = (0u64..5000, (1i64..=100).prop_flat_map(|d| (0..=d, Just(d))), 0u8..=100, 0usize..3, 0u64..500);
    runner(1000)
        .run(&strategy, |(b, (n, d), q, p, pts)| {
            let league = toy_league(b, Fraction::new(n, d), pts, Fraction::one());
            let spec = &league.tasks[0].milestones[0];
            let r = toy_result(q, p);
            let plain = milestone_score(spec, &r, false).unwrap();
            let boosted = milestone_score(spec, &r, true).unwrap();
            // MS * 500d = n * (b * (500 + q) - 500 * p * pts), q in tenths.
            let oracle = n as i128 * (b as i128 * (500 + q as i128) - 500 * (p as i128) * pts as i128);
            let scale = rat(500 * d);
            prop_assert_eq!(plain.ratio() * &scale, BigRational::from_integer(oracle.into()));
            prop_assert_eq!(boosted.ratio() * &scale, BigRational::from_integer((10 * oracle).into()));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn subjective_bound() -> Check {
    let mut previous = rat(0);
    for tenths in 0..=100u8 {
        let f = subjective_factor(q_tenths(tenths));
        ensure(f >= rat(1) && f <= BigRational::new(6.into(), 5.into()), || format!("factor {f} at q={tenths}/10"))?;
        ensure(f >= previous, || format!("factor decreases at q={tenths}/10"))?;
        ensure(f == BigRational::new((500 + tenths as i64).into(), 500.into()), || format!("factor {f} at q={tenths}/10"))?;
        previous = f;
    }
    runner(1000)
        .run(&(1u64..5000, 0u8..100, 0usize..3), |(b, q, p)| {
            let league = toy_league(b, Fraction::new(3, 5), 40, Fraction::one());
            let spec = &league.tasks[0].milestones[0];
            let lo = milestone_score(spec, &toy_result(q, p), false).unwrap();
            let hi = milestone_score(spec, &toy_result(q + 1, p), false).unwrap();
            prop_assert!(hi > lo);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn conservation() -> Check {
    let rate = (1i64..=20).prop_flat_map(|d| (0..=d, Just(d)));
    let devs = prop::collection::btree_set(prop::sample::select(vec!["d1", "d2", "d3"]), 1..=3);
    let strategy = (
        0u64..3000,
        0u8..=100,
        prop::collection::vec((rate, devs), 1..=4),
        (1i64..=10).prop_flat_map(|d| (1..=d, Just(d))),
        any::<bool>(),
    );
    runner(1000)
        .run(&strategy, |(b, q, modules, (tn, td), unit_t)| {
            let t = if unit_t { Fraction::one() } else { Fraction::new(tn, td) };
            let league = toy_league(b, Fraction::one(), 0, t.clone());
            let ext: Vec<ExternalModule> = modules
                .iter()
                .enumerate()
                .map(|(i, ((rn, rd), devs))| external(&format!("k{i}"), Fraction::new(*rn, *rd), &devs.iter().copied().collect::<Vec<_>>()))
                .collect();
            let view = StaticView::new().with("user", toy_scope(), ext.clone());
            let a = attempt("user", "toy", "t", 1, "chosen", vec![toy_result(q, 0)]);
            let score = task_score(&league, &league.tasks[0], &a, &view).unwrap();
            let line = &score.milestones[0];
            let ms = line.milestone_score.ratio().clone();
            let deduction = t.ratio() * &ms - line.contribution.ratio();
            let payouts: BigRational = royalty_entries(&a, &score).iter().map(|e| e.amount.ratio().clone()).sum();
            // Hand evaluation: every developer of k gets MS * r_k / (M * T_k).
            let m = rat(ext.len() as i64);
            let oracle: BigRational = ext.iter().map(|k| &ms * k.royalty_rate.ratio() / &m).sum();
            prop_assert_eq!(&payouts, &oracle);
            prop_assert_eq!(&deduction, &(t.ratio() * &payouts));
            if unit_t {
                prop_assert_eq!(&deduction, &payouts);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn fixed_royalty() -> Check {
    let quarter = Fraction::new(1, 4);
    for (b, q, penalties) in [(480u64, 0u8, 0usize), (400, 100, 0), (300, 35, 1), (100, 0, 2), (0, 0, 0)] {
        let league = toy_league(b, Fraction::one(), 100, Fraction::one());
        let view = StaticView::new().with("user", toy_scope(), vec![external("k", quarter.clone(), &["dev"])]);
        let a = attempt("user", "toy", "t", 1, "chosen", vec![toy_result(q, penalties)]);
        let score = task_score(&league, &league.tasks[0], &a, &view).map_err(|e| e.to_string())?;
        let clamped = score.milestones[0].clamped_score();
        let entries = royalty_entries(&a, &score);
        let paid: BigRational = entries.iter().map(|e| e.amount.ratio().clone()).sum();
        ensure(paid == &clamped / rat(4), || format!("b={b}: paid {paid} of clamped {clamped}"))?;
        ensure(entries.iter().all(|e| e.developer_team_id == "dev"), || "payee other than the developer".into())?;
    }
    // 480 points with transfer is 4800; a quarter is 1200.
    let league = toy_league(480, Fraction::one(), 0, Fraction::one());
    let view = StaticView::new().with("user", toy_scope(), vec![external("k", quarter, &["dev"])]);
    let a = attempt("user", "toy", "t", 1, "chosen", vec![toy_result(0, 0)]);
    let score = task_score(&league, &league.tasks[0], &a, &view).map_err(|e| e.to_string())?;
    let entries = royalty_entries(&a, &score);
    ensure(entries.len() == 1 && entries[0].amount == Exact::from_integer(1200), || format!("{entries:?}"))
}

fn no_self_royalties() -> Check {
    let teams = ["t0", "t1", "t2", "t3"];
    let masks: Vec<Vec<&str>> = (1u8..16).map(|m| teams.iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, t)| *t).collect()).collect();
    let league = toy_league(100, Fraction::one(), 0, Fraction::one());
    let mut cases = 0usize;
    for user in teams {
        let a = attempt(user, "toy", "t", 1, "chosen", vec![toy_result(0, 0)]);
        // Every declaration pattern of up to four modules with any developer sets.
        for k in 0..=4u32 {
            for combo in 0..(masks.len() as u32).pow(k) {
                let mut rest = combo;
                let mut modules = Vec::new();
                for i in 0..k {
                    let devs = &masks[(rest % masks.len() as u32) as usize];
                    rest /= masks.len() as u32;
                    modules.push(external(&format!("k{i}"), Fraction::new(1, 4), devs));
                }
                let foreign = modules.iter().filter(|m| !m.developer_team_ids.contains(user)).count();
                let view = StaticView::new().with(user, toy_scope(), modules);
                let score = task_score(&league, &league.tasks[0], &a, &view).map_err(|e| e.to_string())?;
                let entries = royalty_entries(&a, &score);
                ensure(entries.iter().all(|e| e.developer_team_id != user), || format!("{user} paid itself"))?;
                ensure(score.milestones[0].transfer == (foreign > 0), || format!("{user}: transfer flag with {foreign} foreign modules"))?;
                let paid: BigRational = entries.iter().map(|e| e.amount.ratio().clone()).sum();
                let expected = if foreign > 0 { rat(250) } else { rat(0) };
                ensure(paid == expected, || format!("{user}: paid {paid}, expected {expected}"))?;
                cases += 1;
            }
        }
    }
    ensure(cases == 4 * (1 + 15 + 225 + 3375 + 50625), || format!("{cases} cases"))?;

    // The marketplace refuses such declarations outright.
    let book = bundled();
    let window = UploadWindow { id: "W".into(), opens_at: t(-100), closes_at: t(100) };
    let mut market = MarketplaceState::new(vec![window], Fraction::new(1, 4)).map_err(|e| e.to_string())?;
    for (i, devs) in masks.iter().enumerate() {
        let draft = ModuleDraft {
            id: format!("m{i}"),
            name: format!("m{i}"),
            category: ModuleCategory::ALL[i % ModuleCategory::ALL.len()],
            kind: ModuleKind::Software,
            developer_team_ids: devs.iter().map(|d| d.to_string()).collect(),
            royalty_rate: None,
            description: String::new(),
            artifact_uri: String::new(),
        };
        market.upload_module(draft, t(0)).map_err(|e| e.to_string())?;
        for user in teams {
            let d = DeclarationDraft { user_team_id: user.into(), module_id: format!("m{i}"), scope: Scope::new("irl", "task-board", "MS1") };
            let out = market.check_declaration(&book, &d, t(1));
            let own = devs.contains(&user);
            ensure(own == matches!(out, Err(MarketplaceError::SelfIntegration { .. })), || format!("{user} on {devs:?}: {out:?}"))?;
        }
    }
    Ok(())
}

fn best_of_three() -> Check {
    let book = bundled();
    let view = StaticView::new().with("user", Scope::new("irl", "task-board", "MS7"), vec![external("probe", Fraction::new(1, 4), &["dev"])]);
    // (MS7 success, MS7 q tenths, MS1 state: 0 fail, 1 clean, 2 with a collision)
    let grid: Vec<(bool, u8, u8)> =
        [false, true].into_iter().flat_map(|a| [0u8, 50].into_iter().flat_map(move |q| [0u8, 1, 2].into_iter().map(move |b| (a, q, b)))).collect();
    let results = |(a, q, b): (bool, u8, u8)| {
        let mut out = Vec::new();
        if a {
            out.push(MilestoneResult::success("MS7", "autonomous").with_subjective(q_tenths(q)));
        }
        if b > 0 {
            let mut r = MilestoneResult::success("MS1", "autonomous");
            if b == 2 {
                r.penalties.push("collision".into());
            }
            out.push(r);
        }
        out
    };
    // Hand values, times four: MS7 keeps 3/4 of 8 * (500 + q); MS1 adds 100 or 0.
    let hand = |(a, q, b): (bool, u8, u8)| -> (i64, u64, i64) {
        let ms7 = if a { 8 * (500 + q as i64) } else { 0 };
        let ms1 = if b == 1 { 100 } else { 0 };
        (3 * ms7 + 4 * ms1, if b == 2 { 100 } else { 0 }, if a { 2 * (500 + q as i64) } else { 0 })
    };
    for x in &grid {
        for y in &grid {
            for z in &grid {
                let triple = [*x, *y, *z];
                let scored: Vec<_> = triple
                    .iter()
                    .enumerate()
                    .map(|(i, g)| score_attempt(&book, &attempt("user", "irl", "task-board", i as u32 + 1, "board-random", results(*g)), &view))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                let best = best_attempt(&scored).map_err(|e| e.to_string())?;
                // Brute force: highest score, then fewer penalty points, then the earlier attempt.
                let values: Vec<_> = triple.iter().map(|g| hand(*g)).collect();
                let pick = (0..3).min_by_key(|&i| (-values[i].0, values[i].1, i)).unwrap();
                let max = values.iter().map(|v| v.0).max().unwrap();
                ensure(best.s_task.ratio() * rat(4) == rat(max), || format!("{triple:?}: s_task {}", best.s_task))?;
                ensure(best.attempt_number == pick as u32 + 1, || format!("{triple:?}: chose {}", best.attempt_number))?;
                let paid: Vec<_> = best.royalties.iter().map(|e| (e.developer_team_id.as_str(), e.amount.clone(), e.attempt_number)).collect();
                let expected: Vec<_> = if values[pick].2 > 0 {
                    vec![("dev", Exact::from_integer(values[pick].2), pick as u32 + 1)]
                } else {
                    vec![]
                };
                ensure(paid == expected, || format!("{triple:?}: royalties {paid:?}, expected {expected:?}"))?;
            }
        }
    }

    // Through the runtime: only the counted attempt pays.
    let comp = demo::build(|_| None).map_err(|e| e.to_string())?;
    let best = comp.best_breakdowns().map_err(|e| e.to_string())?;
    let counted: BTreeSet<_> = best.iter().map(|b| (b.team_id.clone(), b.task_id.clone(), b.attempt_number)).collect();
    let all = comp.royalty_entries().map_err(|e| e.to_string())?;
    ensure(all.iter().all(|e| counted.contains(&(e.user_team_id.clone(), e.task_id.clone(), e.attempt_number))), || {
        "royalty from an attempt that does not count".into()
    })
}

fn marketplace_stats() -> Check {
    let comp = demo::build(|_| None).map_err(|e| e.to_string())?;
    let snap = CompetitionSnapshot::of(&comp).map_err(|e| e.to_string())?;
    let stats = reuse_stats(&snap.input(&comp));
    ensure(stats.modules_total == 90, || format!("modules_total {}", stats.modules_total))?;
    let per_window: Vec<usize> = stats.uploads_per_window.values().copied().collect();
    ensure(per_window == [24, 32, 34], || format!("uploads per window {per_window:?}"))?;

    // Count upload entries in the ledger against the configured windows.
    let windows = &comp.config().windows;
    let mut counted = vec![0usize; windows.len()];
    for entry in comp.ledger() {
        if let Event::ModuleUploaded { .. } = entry.event {
            let i = windows.iter().position(|w| w.opens_at <= entry.at && entry.at < w.closes_at).ok_or("upload outside windows")?;
            counted[i] += 1;
        }
    }
    ensure(counted == [24, 32, 34], || format!("ledger uploads per window {counted:?}"))?;

    let frozen = comp.marketplace().frozen_at().ok_or("demo marketplace is not frozen")?;
    for minutes in [0, 1, 60 * 24 * 30] {
        let mut late = comp.clone();
        let at = late.last_at().max(frozen) + Duration::minutes(minutes);
        let draft = ModuleDraft {
            id: format!("late-{minutes}"),
            name: "late".into(),
            category: ModuleCategory::ALL[0],
            kind: ModuleKind::Software,
            developer_team_ids: ["dlr".to_string()].into(),
            royalty_rate: None,
            description: String::new(),
            artifact_uri: String::new(),
        };
        let out = late.execute(Actor::committee(demo::COMMITTEE_ID), Event::ModuleUploaded { module: draft }, at);
        ensure(matches!(out, Err(RuntimeError::Marketplace(MarketplaceError::FrozenMarketplace(_)))), || format!("{out:?}"))?;
    }
    Ok(())
}

/// Weakly connected components of a DOT edge list, by breadth-first search.
fn dot_components(dot: &str) -> (usize, Vec<BTreeSet<String>>) {
    let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in dot.lines().map(str::trim) {
        let quoted: Vec<&str> = line.split('"').collect();
        if line.contains("->") && quoted.len() >= 4 {
            let (a, b) = (quoted[1].to_string(), quoted[3].to_string());
            adj.entry(a.clone()).or_default().insert(b.clone());
            adj.entry(b).or_default().insert(a);
        } else if line.starts_with('"') && quoted.len() >= 2 && !line.contains("->") {
            adj.entry(quoted[1].to_string()).or_default();
        }
    }
    let mut seen = BTreeSet::new();
    let mut groups = Vec::new();
    for start in adj.keys() {
        if seen.contains(start) {
            continue;
        }
        let mut group = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(n) = queue.pop_front() {
            if seen.insert(n.clone()) {
                group.insert(n.clone());
                queue.extend(adj[&n].iter().cloned());
            }
        }
        groups.push(group);
    }
    (groups.len(), groups)
}

fn graph_merge() -> Check {
    let comp = demo::build(|_| None).map_err(|e| e.to_string())?;
    let snap = CompetitionSnapshot::of(&comp).map_err(|e| e.to_string())?;
    let input = snap.input(&comp);
    let pre = build_transfer_graph(&input, Phase::PreEvent);
    let post = build_transfer_graph(&input, Phase::PostEvent);
    let irl: BTreeSet<String> = comp.teams().filter(|t| t.league_id == "irl").map(|t| t.id.clone()).collect();
    ensure(connected_components(&pre) >= 2, || format!("pre-event components {}", connected_components(&pre)))?;
    ensure(components(&pre).len() == connected_components(&pre), || "component routes disagree before the event".into())?;
    ensure(components(&pre).contains(&irl), || "IRL is not isolated before the event".into())?;
    ensure(connected_components(&post) == 1 && components(&post).len() == 1, || "post-event graph is not connected".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_bin(&["fixtures", "init", "--output", "demo"], dir.path())?;
    for (phase, single) in [("pre", false), ("post", true)] {
        let dot = run_bin(&["graph", "export", "--ledger", "demo/ledger.jsonl", "--phase", phase, "--format", "dot"], dir.path())?;
        let dot = String::from_utf8(dot).map_err(|e| e.to_string())?;
        let (count, groups) = dot_components(&dot);
        if single {
            ensure(count == 1, || format!("exported post-event DOT has {count} components"))?;
        } else {
            ensure(count >= 2 && groups.contains(&irl), || format!("exported pre-event DOT has {count} components"))?;
        }
    }
    Ok(())
}

fn command_generator() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = ["command", "generate", "--league", "srl", "--task", "3", "--seed", "2024", "--base-kitchen", "DLR"];
    let one = run_bin(&args, dir.path())?;
    let two = run_bin(&args, dir.path())?;
    ensure(one == two, || "two runs with one seed differ".into())?;

    let domain = VariableDomain::default();
    let free = [Variable::KitchenI, Variable::LocationI, Variable::Object, Variable::Action, Variable::KitchenJ, Variable::LocationJ];
    let pin_sets = free
        .iter()
        .map(|v| prop::option::of(prop::sample::select(domain.values(*v).to_vec())).prop_map(move |x| (*v, x)))
        .collect::<Vec<_>>()
        .prop_map(|pairs| pairs.into_iter().filter_map(|(v, x)| x.map(|x| (v, x))).collect::<PinSet>());
    let d = domain.clone();
    runner(1000)
        .run(&(pin_sets, any::<u64>()), move |(pins, seed)| {
            let req = CommandRequest { league_id: "srl".into(), task_number: 3, base_kitchen: None, pins: pins.clone(), platform: None, seed };
            let c = generate(&d, &req).unwrap();
            for (var, value) in &pins {
                prop_assert_eq!(&c.assignments[var], value);
            }
            let a = &c.assignments;
            let head = format!("Pick the {} from the {} {}", a[&Variable::Object], a[&Variable::KitchenI], a[&Variable::LocationI].to_lowercase());
            prop_assert!(c.text.starts_with(&head));
            if a[&Variable::Action] == "give" {
                let tail = format!(" and give them to the person in the {} kitchen.", a[&Variable::KitchenJ]);
                prop_assert!(c.text.ends_with(&tail));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    const DRAWS: u64 = 10_000;
    for var in free {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for seed in 0..DRAWS {
            let req = CommandRequest { league_id: "srl".into(), task_number: 3, base_kitchen: None, pins: PinSet::new(), platform: None, seed };
            let c = generate(&domain, &req).map_err(|e| e.to_string())?;
            *counts.entry(c.assignments[&var].clone()).or_default() += 1.0;
        }
        let k = domain.values(var).len();
        let expected = DRAWS as f64 / k as f64;
        let stat: f64 = domain.values(var).iter().map(|v| (counts.get(v).copied().unwrap_or(0.0) - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((k - 1) as f64).map_err(|e| e.to_string())?.inverse_cdf(0.99);
        ensure(stat < critical, || format!("{var}: chi-square {stat:.2} >= {critical:.2}"))?;
    }

    let mut pins = PinSet::new();
    for (v, x) in [(Variable::KitchenI, "INRIA"), (Variable::LocationI, "Cabinet"), (Variable::Object, "Pringles"), (Variable::Action, "give"), (Variable::KitchenJ, "KIT")] {
        pins.insert(v, x.into());
    }
    let req = CommandRequest { league_id: "srl".into(), task_number: 3, base_kitchen: None, pins, platform: None, seed: 1 };
    let c = generate(&domain, &req).map_err(|e| e.to_string())?;
    let text = "Pick the Pringles from the INRIA cabinet and give them to the person in the KIT kitchen.";
    ensure(c.text == text, || format!("rendered {:?}", c.text))
}

fn ledger_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_bin(&["fixtures", "init", "--output", "demo"], dir.path())?;
    let one = run_bin(&["score", "replay", "demo/ledger.jsonl"], dir.path())?;
    let two = run_bin(&["score", "replay", "demo/ledger.jsonl"], dir.path())?;
    ensure(one == two, || "two replays differ".into())?;

    let live = demo::build(|_| None).map_err(|e| e.to_string())?;
    let printed: Value = serde_json::from_slice(&one).map_err(|e| e.to_string())?;
    let breakdowns = serde_json::to_value(live.closed_breakdowns().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(printed["breakdowns"] == breakdowns, || "replayed breakdowns differ from the live event".into())?;
    for league in ["irl", "srl", "orl"] {
        let board = serde_json::to_value(live.leaderboard(league).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(printed["leaderboards"][league] == board, || format!("{league} leaderboard differs"))?;
    }

    let replayed = Competition::replay(bundled(), live.ledger().to_vec()).map_err(|e| e.to_string())?;
    ensure(replayed.marketplace() == live.marketplace(), || "marketplace differs after replay".into())?;
    ensure(replayed.sessions().eq(live.sessions()), || "sessions differ after replay".into())?;
    ensure(replayed.royalty_entries().map_err(|e| e.to_string())? == live.royalty_entries().map_err(|e| e.to_string())?, || {
        "royalties differ after replay".into()
    })
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 11] = [
        ("perfect IRL run scores 2310", perfect_irl_run),
        ("transfer multiplies milestone scores by exactly ten", transfer_tenfold),
        ("subjective factor stays in [1, 1.2] and rises with q", subjective_bound),
        ("royalty deductions equal developer payouts", conservation),
        ("a 25% module pays its developer a quarter of the clamped score", fixed_royalty),
        ("no team earns royalties from its own modules", no_self_royalties),
        ("best of three attempts counts and alone pays royalties", best_of_three),
        ("demo marketplace totals 90 modules and rejects late uploads", marketplace_stats),
        ("transfer graph merges into one component after the event", graph_merge),
        ("command generator is seeded, respects pins and draws uniformly", command_generator),
        ("ledger replay is byte-identical and matches live state", ledger_replay),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("[PASS] {name}"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {name}: {reason}");
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
