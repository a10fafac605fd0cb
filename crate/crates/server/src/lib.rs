//! HTTP/JSON service over a single event ledger.

pub mod api;
pub mod auth;
pub mod clock;
mod routes;
pub mod store;

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use coopetition_core::ledger::read_ledger;
use tokio::net::TcpListener;
use coopetition_core::{Actor, Applied, Competition, Event, EventConfig, Role, Rulebook, Timestamp};

pub use api::{ApiError, SCHEMA_VERSION};
pub use auth::{new_token, token_digest, StaffTokens};
pub use clock::{Clock, ManualClock, SystemClock};
pub use routes::router;
use store::Store;

/// Id used for ledger entries the service writes on its own.
pub const SCHEDULER_ID: &str = "scheduler";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub rulebook: Rulebook,
    pub event: EventConfig,
    /// Bearer tokens for referees, committee members and evaluators.
    pub staff: Vec<(String, Actor)>,
    /// Base of the seed used when a command request carries none.
    pub seed: u64,
}

struct Inner {
    comp: Competition,
    store: Store,
}

pub struct Service {
    inner: RwLock<Inner>,
    clock: Arc<dyn Clock>,
    staff: StaffTokens,
    seed: u64,
}

impl Service {
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> anyhow::Result<Arc<Service>> {
        let committee = Actor::new(SCHEDULER_ID, [Role::TechnicalCommittee]);
        let (comp, store) = Store::open(&config.data_dir, config.rulebook, config.event, committee, clock.now())?;
        Ok(Arc::new(Service {
            inner: RwLock::new(Inner { comp, store }),
            clock,
            staff: StaffTokens::new(config.staff),
            seed: config.seed,
        }))
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn staff(&self) -> &StaffTokens {
        &self.staff
    }

    pub fn seed_for(&self, seq: u64) -> u64 {
        self.seed.wrapping_add(seq)
    }

    /// Runs `f` against a consistent view of the event.
    pub fn read<R>(&self, f: impl FnOnce(&Competition) -> R) -> R {
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        f(&inner.comp)
    }

    /// Validates, applies and durably records one event. `build` sees the
    /// current state so it can fill defaults such as command seeds.
    pub fn mutate(&self, actor: Actor, build: impl FnOnce(&Competition) -> Event) -> Result<Applied, ApiError> {
        let mut inner = self.inner.write().unwrap_or_else(|p| p.into_inner());
        let now = self.clock.now().max(inner.comp.last_at());
        let Inner { comp, store } = &mut *inner;
        Self::scheduled_freeze(comp, now);
        let event = build(comp);
        let result = comp.execute(actor, event, now);
        if let Err(e) = store.persist(comp) {
            tracing::error!("ledger write failed: {e:#}");
            let path = store.ledger_path().to_path_buf();
            match read_ledger(&path).map_err(anyhow::Error::from).and_then(|entries| {
                Competition::replay(comp.rulebook().clone(), entries).map_err(anyhow::Error::from)
            }) {
                Ok(restored) => *comp = restored,
                Err(e) => tracing::error!("reloading {} failed: {e:#}", path.display()),
            }
            return Err(ApiError::storage(format!("could not record the event: {e}")));
        }
        result.map_err(ApiError::from)
    }

    /// Freezes the marketplace once the configured instant has passed.
    fn scheduled_freeze(comp: &mut Competition, now: Timestamp) {
        let Some(freeze_at) = comp.config().freeze_at else { return };
        if now < freeze_at || comp.marketplace().frozen_at().is_some() {
            return;
        }
        let at = freeze_at.max(comp.last_at());
        let scheduler = Actor::new(SCHEDULER_ID, [Role::TechnicalCommittee]);
        if let Err(e) = comp.execute(scheduler, Event::MarketplaceFrozen, at) {
            tracing::warn!("scheduled freeze failed: {e}");
        }
    }

    /// Writes a final snapshot. Ledger entries are already synced.
    pub fn flush(&self) -> anyhow::Result<()> {
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        inner.store.snapshot(&inner.comp)
    }
}

/// Serves on `listener` until `shutdown` resolves, then flushes.
pub async fn serve(
    service: Arc<Service>,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    axum::serve(listener, router(service.clone())).with_graceful_shutdown(shutdown).await?;
    service.flush()?;
    Ok(())
}
