//! Module transferability graph and reuse statistics.
//!
//! Edges point from developer to user: `inria -> iit` means IIT integrated a
//! module INRIA developed. Nodes are weighted by the team's royalty income.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use petgraph::graph::UnGraph;
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::exact::Exact;
use crate::marketplace::{MarketplaceState, ModuleCategory, ModuleStatus};
use crate::runtime::{Competition, RuntimeError};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("unsupported format {0:?}; expected dot or json")]
    UnsupportedFormat(String),
    #[error("unknown phase {0:?}; expected pre or post")]
    UnknownPhase(String),
    #[error("graph document: {0}")]
    Import(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreEvent,
    PostEvent,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreEvent => "pre_event",
            Phase::PostEvent => "post_event",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" | "pre_event" | "pre-event" => Ok(Phase::PreEvent),
            "post" | "post_event" | "post-event" => Ok(Phase::PostEvent),
            other => Err(AnalyticsError::UnknownPhase(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            _ => Err(AnalyticsError::UnsupportedFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub team_id: String,
    pub league_id: String,
    pub royalty_weight: Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub developer_team_id: String,
    pub user_team_id: String,
    pub module_id: String,
    pub category: ModuleCategory,
    pub verified: bool,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferGraph {
    pub phase: Phase,
    pub cutoff: Option<Timestamp>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

/// Everything the graph is built from.
#[derive(Debug, Clone, Copy)]
pub struct GraphInput<'a> {
    /// `(team_id, league_id)` of every registered team.
    pub teams: &'a [(String, String)],
    pub marketplace: &'a MarketplaceState,
    pub royalty_totals: &'a BTreeMap<String, Exact>,
    /// Declarations strictly before this instant are pre-event.
    pub cutoff: Option<Timestamp>,
    /// Trust-based tracking: unverified declarations become flagged edges.
    pub include_unverified: bool,
}

/// Owned inputs taken from a running competition.
#[derive(Debug, Clone)]
pub struct CompetitionSnapshot {
    pub teams: Vec<(String, String)>,
    pub royalty_totals: BTreeMap<String, Exact>,
}

impl CompetitionSnapshot {
    pub fn of(comp: &Competition) -> Result<Self, RuntimeError> {
        Ok(CompetitionSnapshot {
            teams: comp.teams().map(|t| (t.id.clone(), t.league_id.clone())).collect(),
            royalty_totals: comp.royalty_totals()?,
        })
    }

    pub fn input<'a>(&'a self, comp: &'a Competition) -> GraphInput<'a> {
        GraphInput {
            teams: &self.teams,
            marketplace: comp.marketplace(),
            royalty_totals: &self.royalty_totals,
            cutoff: comp.marketplace().frozen_at(),
            include_unverified: comp.config().trust_based,
        }
    }
}

pub fn build_transfer_graph(input: &GraphInput<'_>, phase: Phase) -> TransferGraph {
    let is_pre = |at: Timestamp| input.cutoff.is_none_or(|c| at < c);
    // (developer, user, module) -> (verified, earliest phase)
    let mut triples: BTreeMap<(String, String, String), (bool, Phase)> = BTreeMap::new();
    for d in input.marketplace.declarations() {
        if !d.verified && !input.include_unverified {
            continue;
        }
        let decl_phase = if is_pre(d.declared_at) { Phase::PreEvent } else { Phase::PostEvent };
        if phase == Phase::PreEvent && decl_phase != Phase::PreEvent {
            continue;
        }
        let Some(module) = input.marketplace.module(&d.module_id) else { continue };
        for dev in module.developer_team_ids.iter().filter(|dev| **dev != d.user_team_id) {
            let slot = triples
                .entry((dev.clone(), d.user_team_id.clone(), module.id.clone()))
                .or_insert((false, Phase::PostEvent));
            slot.0 |= d.verified;
            slot.1 = slot.1.min(decl_phase);
        }
    }

    let mut nodes: BTreeMap<String, GraphNode> = input
        .teams
        .iter()
        .map(|(id, league)| {
            let weight = input.royalty_totals.get(id).cloned().unwrap_or_else(Exact::zero);
            (id.clone(), GraphNode { team_id: id.clone(), league_id: league.clone(), royalty_weight: weight })
        })
        .collect();
    let edges: Vec<GraphEdge> = triples
        .into_iter()
        .map(|((dev, user, module_id), (verified, edge_phase))| {
            for id in [&dev, &user] {
                nodes.entry(id.clone()).or_insert_with(|| GraphNode {
                    team_id: id.clone(),
                    league_id: String::new(),
                    royalty_weight: Exact::zero(),
                });
            }
            let category = input.marketplace.module(&module_id).map(|m| m.category).unwrap_or(ModuleCategory::Other);
            GraphEdge { developer_team_id: dev, user_team_id: user, module_id, category, verified, phase: edge_phase }
        })
        .collect();
    TransferGraph { phase, cutoff: input.cutoff, nodes: nodes.into_values().collect(), edges }
}

/// Weakly connected components, each as a sorted set of team ids.
pub fn components(graph: &TransferGraph) -> Vec<BTreeSet<String>> {
    let index: BTreeMap<&str, usize> = graph.nodes.iter().enumerate().map(|(i, n)| (n.team_id.as_str(), i)).collect();
    let mut uf = UnionFind::<usize>::new(graph.nodes.len());
    for e in &graph.edges {
        if let (Some(&a), Some(&b)) = (index.get(e.developer_team_id.as_str()), index.get(e.user_team_id.as_str())) {
            uf.union(a, b);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert(n.team_id.clone());
    }
    let mut out: Vec<_> = groups.into_values().collect();
    out.sort();
    out
}

pub fn connected_components(graph: &TransferGraph) -> usize {
    let mut g = UnGraph::<(), ()>::new_undirected();
    let index: BTreeMap<&str, _> = graph.nodes.iter().map(|n| (n.team_id.as_str(), g.add_node(()))).collect();
    for e in &graph.edges {
        if let (Some(&a), Some(&b)) = (index.get(e.developer_team_id.as_str()), index.get(e.user_team_id.as_str())) {
            g.add_edge(a, b, ());
        }
    }
    petgraph::algo::connected_components(&g)
}

/// Edge colors, in category declaration order.
pub const PALETTE: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#7f7f7f"];

pub fn category_color(category: ModuleCategory) -> &'static str {
    let i = ModuleCategory::ALL.iter().position(|c| *c == category).unwrap_or(PALETTE.len() - 1);
    PALETTE[i]
}

/// Node size bounds in inches.
pub const SIZE_MIN: (i64, i64) = (1, 2);
pub const SIZE_MAX: (i64, i64) = (2, 1);

/// `s_min + (w / w_max) * (s_max - s_min)`; all-zero weights map to `s_min`.
pub fn node_sizes(graph: &TransferGraph) -> Vec<BigRational> {
    let s_min = BigRational::new(SIZE_MIN.0.into(), SIZE_MIN.1.into());
    let s_max = BigRational::new(SIZE_MAX.0.into(), SIZE_MAX.1.into());
    let w_max = graph
        .nodes
        .iter()
        .map(|n| n.royalty_weight.ratio().clone())
        .max()
        .unwrap_or_else(BigRational::zero);
    graph
        .nodes
        .iter()
        .map(|n| {
            let w = n.royalty_weight.ratio();
            if w_max <= BigRational::zero() || *w <= BigRational::zero() {
                s_min.clone()
            } else {
                &s_min + w / &w_max * (&s_max - &s_min)
            }
        })
        .collect()
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(graph: &TransferGraph) -> String {
    let mut out = String::new();
    out.push_str("// edge colors by category:");
    for c in ModuleCategory::ALL {
        let _ = write!(out, " {}={}", c.as_str(), category_color(c));
    }
    out.push('\n');
    out.push_str("// dashed edges are unverified declarations\n");
    let _ = writeln!(out, "digraph transfer {{");
    let _ = writeln!(out, "  graph [label={}];", quote(graph.phase.as_str()));
    out.push_str("  node [shape=circle, style=filled, fixedsize=true];\n");
    for (node, size) in graph.nodes.iter().zip(node_sizes(graph)) {
        let size = size.to_f64().unwrap_or(0.0);
        let _ = writeln!(
            out,
            "  {} [league={}, royalties={}, width={size:.3}, height={size:.3}];",
            quote(&node.team_id),
            quote(&node.league_id),
            quote(&node.royalty_weight.to_decimal()),
        );
    }
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "  {} -> {} [module={}, category={}, color={}{}];",
            quote(&e.developer_team_id),
            quote(&e.user_team_id),
            quote(&e.module_id),
            quote(e.category.as_str()),
            quote(category_color(e.category)),
            if e.verified { "" } else { ", style=dashed" },
        );
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(graph: &TransferGraph, format: &str) -> Result<Vec<u8>, AnalyticsError> {
    Ok(match format.parse()? {
        ExportFormat::Dot => to_dot(graph).into_bytes(),
        ExportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(graph).expect("graph serializes");
            v.push(b'\n');
            v
        }
    })
}

pub fn import_graph_json(bytes: &[u8]) -> Result<TransferGraph, AnalyticsError> {
    serde_json::from_slice(bytes).map_err(|e| AnalyticsError::Import(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseStats {
    /// Modules currently available: uploads minus removals.
    pub modules_total: usize,
    pub modules_removed: usize,
    pub uploads_per_window: BTreeMap<String, usize>,
    /// Post-event graph edges.
    pub integrations_total: usize,
    pub integrations_per_category: BTreeMap<ModuleCategory, usize>,
    /// Keyed by the user team's league.
    pub integrations_per_league: BTreeMap<String, usize>,
    pub connected_components: BTreeMap<Phase, usize>,
}

pub fn reuse_stats(input: &GraphInput<'_>) -> ReuseStats {
    let market = input.marketplace;
    let mut uploads_per_window: BTreeMap<String, usize> = market.windows().iter().map(|w| (w.id.clone(), 0)).collect();
    for m in market.modules() {
        *uploads_per_window.entry(m.upload_window_id.clone()).or_default() += 1;
    }
    let removed = market.modules().filter(|m| m.status == ModuleStatus::Removed).count();
    let uploads: usize = uploads_per_window.values().sum();

    let pre = build_transfer_graph(input, Phase::PreEvent);
    let post = build_transfer_graph(input, Phase::PostEvent);
    let league_of: BTreeMap<&str, &str> = post.nodes.iter().map(|n| (n.team_id.as_str(), n.league_id.as_str())).collect();
    let mut per_category: BTreeMap<ModuleCategory, usize> = ModuleCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let mut per_league: BTreeMap<String, usize> = BTreeMap::new();
    for e in &post.edges {
        *per_category.entry(e.category).or_default() += 1;
        let league = league_of.get(e.user_team_id.as_str()).copied().unwrap_or_default();
        *per_league.entry(league.to_string()).or_default() += 1;
    }
    ReuseStats {
        modules_total: uploads - removed,
        modules_removed: removed,
        uploads_per_window,
        integrations_total: post.edges.len(),
        integrations_per_category: per_category,
        integrations_per_league: per_league,
        connected_components: [(Phase::PreEvent, connected_components(&pre)), (Phase::PostEvent, connected_components(&post))]
            .into_iter()
            .collect(),
    }
}
