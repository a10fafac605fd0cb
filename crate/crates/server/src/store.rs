//! Ledger file plus a periodic read-only snapshot in the data directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use coopetition_core::ledger::{read_ledger, LedgerWriter};
use coopetition_core::{Actor, Competition, EventConfig, Rulebook, Timestamp};
use serde_json::json;

use crate::api::SCHEMA_VERSION;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug)]
pub struct Store {
    writer: LedgerWriter,
    snapshot_path: PathBuf,
    persisted: u64,
    snapshot_every: u64,
}

impl Store {
    /// Replays an existing ledger, or starts a new one from `config`.
    pub fn open(
        data_dir: &Path,
        rulebook: Rulebook,
        config: EventConfig,
        committee: Actor,
        now: Timestamp,
    ) -> anyhow::Result<(Competition, Store)> {
        fs::create_dir_all(data_dir).with_context(|| format!("creating {}", data_dir.display()))?;
        let ledger_path = data_dir.join(LEDGER_FILE);
        let existing = if ledger_path.exists() { read_ledger(&ledger_path)? } else { Vec::new() };
        let fresh = existing.is_empty();
        let comp = if fresh {
            Competition::new(rulebook, config, committee, now)?
        } else {
            let comp = Competition::replay(rulebook, existing)?;
            if comp.config() != &config {
                tracing::warn!("ledger configuration differs from the command line; the ledger wins");
            }
            comp
        };
        let mut store = Store {
            writer: LedgerWriter::open(&ledger_path)?,
            snapshot_path: data_dir.join(SNAPSHOT_FILE),
            persisted: if fresh { 0 } else { comp.ledger().len() as u64 },
            snapshot_every: 50,
        };
        store.persist(&comp)?;
        Ok((comp, store))
    }

    pub fn ledger_path(&self) -> &Path {
        self.writer.path()
    }

    /// Appends every entry not yet on disk.
    pub fn persist(&mut self, comp: &Competition) -> anyhow::Result<()> {
        let before = self.persisted;
        for entry in &comp.ledger()[self.persisted as usize..] {
            self.writer.append(entry)?;
            self.persisted += 1;
        }
        if before / self.snapshot_every != self.persisted / self.snapshot_every {
            self.snapshot(comp)?;
        }
        Ok(())
    }

    /// Writes derived state for inspection. Recovery always replays the ledger.
    pub fn snapshot(&self, comp: &Competition) -> anyhow::Result<()> {
        let leagues: Vec<_> = comp.rulebook().leagues.iter().map(|l| l.id.clone()).collect();
        let mut boards = serde_json::Map::new();
        for league in leagues {
            boards.insert(league.clone(), serde_json::to_value(comp.leaderboard(&league)?)?);
        }
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "seq": comp.ledger().last().map(|e| e.seq).unwrap_or(0),
            "at": comp.last_at(),
            "teams": comp.teams().collect::<Vec<_>>(),
            "marketplace": comp.marketplace(),
            "leaderboards": boards,
        });
        let tmp = self.snapshot_path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&doc)?).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &self.snapshot_path).with_context(|| format!("replacing {}", self.snapshot_path.display()))?;
        Ok(())
    }
}
