//! Scoring invariants, checked against a scaled-integer oracle.

use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use coopetition_core::exact::{Exact, Fraction};
use coopetition_core::marketplace::Scope;
use coopetition_core::rulebook::{ConditionalLevel, LeagueSpec, MilestoneSpec, MilestoneType, Penalty, TaskSpec};
use coopetition_core::scoring::{
    best_attempt, milestone_score, royalty_entries, score_attempt, subjective_factor, task_score, AttemptRecord,
    ExternalModule, MilestoneResult, StaticView, SubjectiveScore,
};
use coopetition_core::Rulebook;

/// MS * 500 * d for level n/d, q in tenths, p points, as an integer.
fn oracle_scaled(b: u64, n: i64, q_tenths: u8, p: u64, transfer: bool) -> i128 {
    let raw = n as i128 * (b as i128 * (500 + q_tenths as i128) - 500 * p as i128);
    if transfer {
        10 * raw
    } else {
        raw
    }
}

fn exact_scaled(value: &Exact, d: i64) -> BigRational {
    value.ratio() * BigRational::from_integer(BigInt::from(500 * d))
}

fn spec(b: u64, level: Fraction, penalty: u64) -> MilestoneSpec {
    MilestoneSpec {
        id: "M".into(),
        number: 1,
        description: String::new(),
        milestone_type: MilestoneType::Other,
        base_score: b,
        conditional_levels: vec![ConditionalLevel { id: "lvl".into(), description: String::new(), factor: level }],
        penalties: vec![Penalty { id: "pen".into(), description: String::new(), points: penalty }],
        exclusive_group: None,
    }
}

fn result(q: u8, penalties: usize) -> MilestoneResult {
    let mut r = MilestoneResult::success("M", "lvl").with_subjective(SubjectiveScore::from_tenths(q).unwrap());
    r.penalties = vec!["pen".into(); penalties];
    r
}

fn level() -> impl Strategy<Value = (i64, i64)> {
    (1i64..=100).prop_flat_map(|d| (0..=d, Just(d)))
}

fn league(task_factor: Fraction, milestones: Vec<MilestoneSpec>) -> LeagueSpec {
    LeagueSpec {
        id: "l".into(),
        name: "L".into(),
        default_royalty: Fraction::new(1, 4),
        attempt_limit: 3,
        attempt_duration_secs: 600,
        task_conditional_levels: vec![
            ConditionalLevel { id: "chosen".into(), description: String::new(), factor: task_factor },
            ConditionalLevel { id: "full".into(), description: String::new(), factor: Fraction::one() },
        ],
        tasks: vec![TaskSpec { id: "t".into(), name: "T".into(), milestones }],
    }
}

fn attempt(team: &str, number: u32, results: Vec<MilestoneResult>, close_min: u32) -> AttemptRecord {
    AttemptRecord {
        team_id: team.into(),
        league_id: "l".into(),
        task_id: "t".into(),
        attempt_number: number,
        task_level: "chosen".into(),
        results,
        started_at: Utc.with_ymd_and_hms(2024, 11, 25, 9, 0, 0).unwrap(),
        closed_at: Some(Utc.with_ymd_and_hms(2024, 11, 25, 10, close_min, 0).unwrap()),
    }
}

fn module(id: usize, r: (i64, i64), devs: &BTreeSet<String>) -> ExternalModule {
    ExternalModule { module_id: format!("k{id}"), royalty_rate: Fraction::new(r.0, r.1), developer_team_ids: devs.clone() }
}

fn royalty() -> impl Strategy<Value = (i64, i64)> {
    (1i64..=20).prop_flat_map(|d| (0..=d, Just(d)))
}

fn developers() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(prop::sample::select(vec!["d1", "d2", "d3", "d4"]).prop_map(String::from), 1..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transfer_is_exactly_tenfold(b in 0u64..5000, (n, d) in level(), q in 0u8..=100, p in 0u64..3, pts in 0u64..500) {
        let s = spec(b, Fraction::new(n, d), pts);
        let r = result(q, p as usize);
        let plain = milestone_score(&s, &r, false).unwrap();
        let boosted = milestone_score(&s, &r, true).unwrap();
        prop_assert_eq!(boosted.ratio(), &(plain.ratio() * BigRational::from_integer(10.into())));
        let expected = BigRational::from_integer(oracle_scaled(b, n, q, p * pts, false).into());
        prop_assert_eq!(exact_scaled(&plain, d), expected);
        let expected = BigRational::from_integer(oracle_scaled(b, n, q, p * pts, true).into());
        prop_assert_eq!(exact_scaled(&boosted, d), expected);
    }

    #[test]
    fn subjective_factor_bounded_and_monotone(q in 0u8..=100, b in 1u64..5000, p in 0u64..3, (n, d) in level()) {
        let f = subjective_factor(SubjectiveScore::from_tenths(q).unwrap());
        prop_assert!(f >= BigRational::from_integer(1.into()));
        prop_assert!(f <= BigRational::new(6.into(), 5.into()));
        let s = spec(b, Fraction::new(n, d), 100);
        let here = milestone_score(&s, &result(q, p as usize), false).unwrap();
        if q < 100 {
            let up = milestone_score(&s, &result(q + 1, p as usize), false).unwrap();
            prop_assert!(up >= here);
        }
        let more_penalty = milestone_score(&s, &result(q, p as usize + 1), false).unwrap();
        prop_assert!(more_penalty <= here);
    }

    #[test]
    fn contributions_are_clamped(
        bases in prop::collection::vec(0u64..1000, 1..6),
        outcomes in prop::collection::vec((any::<bool>(), 0u8..=100, 0usize..4, any::<bool>()), 6),
        (tn, td) in (1i64..=10).prop_flat_map(|d| (0..=d, Just(d))),
    ) {
        let milestones: Vec<MilestoneSpec> = bases.iter().enumerate().map(|(i, b)| {
            let mut m = spec(*b, Fraction::new(1, 2), 300);
            m.id = format!("M{i}");
            m.number = i as u32 + 1;
            m
        }).collect();
        let lg = league(Fraction::new(tn, td), milestones.clone());
        let devs: BTreeSet<String> = ["dev".to_string()].into();
        let mut view = StaticView::new();
        let results: Vec<MilestoneResult> = milestones.iter().zip(&outcomes).map(|(m, (ok, q, p, transfer))| {
            if *transfer {
                view = std::mem::take(&mut view).with("user", Scope::new("l", "t", &m.id), vec![module(0, (1, 4), &devs)]);
            }
            let mut r = result(*q, *p);
            r.milestone_id = m.id.clone();
            r.success = *ok;
            r
        }).collect();
        let a = attempt("user", 1, results, 0);
        let score = task_score(&lg, &lg.tasks[0], &a, &view).unwrap();
        let mut sum = BigRational::from_integer(0.into());
        for line in &score.milestones {
            prop_assert!(!line.contribution.is_negative());
            sum += line.contribution.ratio();
        }
        prop_assert!(!score.total.is_negative());
        prop_assert_eq!(score.total.ratio(), &sum);
    }

    #[test]
    fn deductions_equal_payouts(
        b in 0u64..3000,
        q in 0u8..=100,
        rates in prop::collection::vec((royalty(), developers()), 1..=4),
        (tn, td) in (1i64..=10).prop_flat_map(|d| (1..=d, Just(d))),
    ) {
        let m = spec(b, Fraction::one(), 0);
        let modules: Vec<ExternalModule> = rates.iter().enumerate().map(|(i, (r, devs))| module(i, *r, devs)).collect();
        let view = StaticView::new().with("user", Scope::new("l", "t", "M"), modules.clone());
        let t = Fraction::new(tn, td);
        let lg = league(t.clone(), vec![m]);
        let a = attempt("user", 1, vec![result(q, 0)], 0);
        let score = task_score(&lg, &lg.tasks[0], &a, &view).unwrap();
        let line = &score.milestones[0];
        let ms = line.milestone_score.ratio().clone();
        prop_assert!(ms >= BigRational::from_integer(0.into()));

        let r_sum: BigRational = modules.iter().map(|k| k.royalty_rate.ratio().clone()).sum();
        let m_n = BigRational::from_integer(modules.len().into());
        let deduction = t.ratio() * &ms * &r_sum / &m_n;
        let kept = line.contribution.ratio().clone();
        prop_assert_eq!(&(t.ratio() * &ms - &kept), &deduction);

        let payouts: BigRational = royalty_entries(&a, &score).iter().map(|e| e.amount.ratio().clone()).sum();
        prop_assert_eq!(&deduction, &(t.ratio() * &payouts));
        if t.is_one() {
            prop_assert_eq!(&deduction, &payouts);
        }
    }

    #[test]
    fn no_self_royalties(
        user in prop::sample::select(vec!["d1", "d2", "d3", "d4"]),
        rates in prop::collection::vec((royalty(), developers()), 0..=4),
    ) {
        let modules: Vec<ExternalModule> = rates.iter().enumerate().map(|(i, (r, devs))| module(i, *r, devs)).collect();
        let view = StaticView::new().with(user, Scope::new("l", "t", "M"), modules.clone());
        let lg = league(Fraction::one(), vec![spec(400, Fraction::one(), 0)]);
        let a = attempt(user, 1, vec![result(0, 0)], 0);
        let score = task_score(&lg, &lg.tasks[0], &a, &view).unwrap();
        let entries = royalty_entries(&a, &score);
        prop_assert!(entries.iter().all(|e| e.developer_team_id != user));
        let foreign = modules.iter().any(|m| !m.developer_team_ids.contains(user));
        prop_assert_eq!(score.milestones[0].transfer, foreign);
    }

    #[test]
    fn scoring_is_deterministic(b in 0u64..3000, q in 0u8..=100, p in 0usize..3, transfer in any::<bool>()) {
        let book = Rulebook {
            version: "t".into(),
            leagues: vec![league(Fraction::new(7, 10), vec![spec(b, Fraction::new(3, 5), 50)])],
        };
        let devs: BTreeSet<String> = ["dev".to_string()].into();
        let modules = if transfer { vec![module(0, (1, 4), &devs)] } else { vec![] };
        let view = StaticView::new().with("user", Scope::new("l", "t", "M"), modules);
        let a = attempt("user", 1, vec![result(q, p)], 0);
        let one = score_attempt(&book, &a, &view).unwrap();
        let two = score_attempt(&book, &a.clone(), &view).unwrap();
        prop_assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&two).unwrap());
        prop_assert_eq!(one, two);
    }

    #[test]
    fn argmax_stable_under_scaling(
        attempts in prop::collection::vec(prop::collection::vec((any::<bool>(), 0u8..=100, 0usize..3), 3), 1..=3),
        bases in prop::collection::vec(1u64..800, 3),
        k in 1u64..6,
    ) {
        let pick = |scale: u64| {
            let milestones: Vec<MilestoneSpec> = bases.iter().enumerate().map(|(i, b)| {
                let mut m = spec(b * scale, Fraction::new(4, 5), 40 * scale);
                m.id = format!("M{i}");
                m.number = i as u32 + 1;
                m
            }).collect();
            let book = Rulebook { version: "t".into(), leagues: vec![league(Fraction::one(), milestones.clone())] };
            let scored: Vec<_> = attempts.iter().enumerate().map(|(n, outcomes)| {
                let results = milestones.iter().zip(outcomes).map(|(m, (ok, q, p))| {
                    let mut r = result(*q, *p);
                    r.milestone_id = m.id.clone();
                    r.success = *ok;
                    r
                }).collect();
                score_attempt(&book, &attempt("user", n as u32 + 1, results, n as u32), &StaticView::new()).unwrap()
            }).collect();
            best_attempt(&scored).unwrap().attempt_number
        };
        prop_assert_eq!(pick(1), pick(k));
    }
}
