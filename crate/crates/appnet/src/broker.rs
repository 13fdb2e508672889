//! State shared by the market and the runtime.
//!
//! Both services run over one [`Store`]. The message registry and the app
//! catalog are cached in memory behind a read-write lock and written through
//! to the store; everything user-scoped lives in one userspace document per
//! user, updated with compare-and-set so that mutations of one userspace are
//! linearized while different users never contend.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use appnet_core::{AdapterDefinition, NamedMessage, Timestamp};
use appnet_core::{
    AppId, ApplicationDefinition, ConnectionId, MessageRegistry, Reason, UserId, Userspace,
    DEFAULT_MAX_CHAIN_LEN,
};
use base64::Engine;
use parking_lot::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::store::{Batch, Collection, Expect, Store, StoreError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrokerConfig {
    pub max_chain_len: usize,
    pub grant_ttl: Duration,
    pub token_ttl: Duration,
    pub comm_ttl: Duration,
    /// Serve `GET /audit` on the runtime.
    pub expose_audit: bool,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            max_chain_len: DEFAULT_MAX_CHAIN_LEN,
            grant_ttl: Duration::from_secs(300),
            token_ttl: Duration::from_secs(24 * 3600),
            comm_ttl: Duration::from_secs(600),
            expose_audit: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct AppRecord {
    pub definition: ApplicationDefinition,
    pub credential_digest: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct UserRecord {
    pub user_id: UserId,
    pub name: String,
    pub created_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Ranked {
    pub rank: u32,
    pub reason: Reason,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct UserspaceRecord {
    pub userspace: Userspace,
    pub next_connection: u64,
    /// Recommendations must be recomputed before they are served.
    pub stale: bool,
    pub ranks: BTreeMap<ConnectionId, Ranked>,
    /// Store keys of the grants and tokens issued per installed app, so that
    /// uninstalling can revoke them without scanning other users' documents.
    pub grants: BTreeMap<AppId, BTreeSet<String>>,
    pub tokens: BTreeMap<AppId, BTreeSet<String>>,
}

impl UserspaceRecord {
    pub fn new(user_id: UserId) -> Self {
        Self {
            userspace: Userspace::new(user_id),
            next_connection: 1,
            stale: false,
            ranks: BTreeMap::new(),
            grants: BTreeMap::new(),
            tokens: BTreeMap::new(),
        }
    }

    pub fn mint_connection_id(&mut self) -> ConnectionId {
        let id = ConnectionId::new(format!(
            "conn-{}-{:06}",
            self.userspace.user_id, self.next_connection
        ));
        self.next_connection += 1;
        id
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct GrantRecord {
    pub user_id: UserId,
    pub app_id: AppId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub consumed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct TokenRecord {
    pub user_id: UserId,
    pub app_id: AppId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct CommRecord {
    pub connection_id: ConnectionId,
    pub user_id: UserId,
    pub producer: AppId,
    pub consumer: AppId,
    pub message: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Query,
    VerifyOk,
    VerifyFail,
    DeliveryReported,
    Confirm,
    ManualCreate,
    Revoke,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub kind: AuditKind,
    /// Store key (digest) of the communication id, never the id itself.
    pub comm_ref: Option<String>,
    pub connection_id: Option<ConnectionId>,
    pub user_id: Option<UserId>,
    pub app_id: Option<AppId>,
    pub detail: String,
}

pub(crate) struct AuditEntry {
    pub kind: AuditKind,
    pub comm_ref: Option<String>,
    pub connection_id: Option<ConnectionId>,
    pub user_id: Option<UserId>,
    pub app_id: Option<AppId>,
    pub detail: String,
}

struct AuditCursor {
    next: u64,
    last: Option<Timestamp>,
}

pub(crate) struct Catalog {
    pub registry: MessageRegistry,
    pub apps: BTreeMap<AppId, AppRecord>,
}

impl Catalog {
    pub fn app(&self, id: &AppId) -> Result<&AppRecord> {
        self.apps
            .get(id)
            .ok_or_else(|| Error::UnknownApp(id.to_string()))
    }

    pub fn definitions_of<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a AppId>,
    ) -> BTreeMap<AppId, ApplicationDefinition> {
        ids.into_iter()
            .filter_map(|id| {
                self.apps
                    .get(id)
                    .map(|r| (id.clone(), r.definition.clone()))
            })
            .collect()
    }
}

pub struct Broker {
    pub(crate) store: Arc<dyn Store>,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) config: BrokerConfig,
    catalog: RwLock<Catalog>,
    audit: Mutex<AuditCursor>,
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broker")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Broker {
    /// Loads the catalog and audit position from `store`.
    pub fn open(
        store: Arc<dyn Store>,
        clock: Arc<dyn Clock>,
        config: BrokerConfig,
    ) -> Result<Arc<Self>> {
        let mut registry = MessageRegistry::new();
        for (key, doc) in store.list(Collection::Messages)? {
            let m: NamedMessage = doc.decode(Collection::Messages, &key)?;
            registry.register_message(m)?;
        }
        for (key, doc) in store.list(Collection::Adapters)? {
            let a: AdapterDefinition = doc.decode(Collection::Adapters, &key)?;
            registry.register_adapter(a)?;
        }
        let mut apps = BTreeMap::new();
        for (key, doc) in store.list(Collection::Apps)? {
            let rec: AppRecord = doc.decode(Collection::Apps, &key)?;
            apps.insert(rec.definition.app_id.clone(), rec);
        }
        let audit = store.list(Collection::Audit)?;
        let cursor = match audit.last() {
            Some((key, doc)) => {
                let rec: AuditRecord = doc.decode(Collection::Audit, key)?;
                AuditCursor {
                    next: rec.seq + 1,
                    last: Some(rec.timestamp),
                }
            }
            None => AuditCursor {
                next: 1,
                last: None,
            },
        };
        Ok(Arc::new(Self {
            store,
            clock,
            config,
            catalog: RwLock::new(Catalog { registry, apps }),
            audit: Mutex::new(cursor),
        }))
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub(crate) fn catalog(&self) -> RwLockReadGuard<'_, Catalog> {
        self.catalog.read()
    }

    pub(crate) fn catalog_mut(&self) -> RwLockWriteGuard<'_, Catalog> {
        self.catalog.write()
    }

    pub(crate) fn expiry(&self, from: Timestamp, ttl: Duration) -> Timestamp {
        from + chrono::Duration::from_std(ttl).unwrap_or(chrono::Duration::MAX)
    }

    /// Adds an audit record to `batch`. Sequence numbers and timestamps are
    /// monotone per broker.
    pub(crate) fn audit(&self, batch: &mut Batch, entry: AuditEntry) {
        let mut cursor = self.audit.lock();
        let now = self.clock.now();
        let timestamp = match cursor.last {
            Some(last) if last > now => last,
            _ => now,
        };
        let rec = AuditRecord {
            seq: cursor.next,
            timestamp,
            kind: entry.kind,
            comm_ref: entry.comm_ref,
            connection_id: entry.connection_id,
            user_id: entry.user_id,
            app_id: entry.app_id,
            detail: entry.detail,
        };
        cursor.next += 1;
        cursor.last = Some(timestamp);
        batch.put_doc(
            Collection::Audit,
            format!("{:012}", rec.seq),
            &rec,
            Expect::Absent,
        );
    }

    pub fn audit_log(&self) -> Result<Vec<AuditRecord>> {
        self.store
            .list(Collection::Audit)?
            .into_iter()
            .map(|(k, d)| Ok(d.decode(Collection::Audit, &k)?))
            .collect()
    }

    pub(crate) fn load_userspace(&self, user: &UserId) -> Result<(UserspaceRecord, u64)> {
        let doc = self
            .store
            .get(Collection::Userspaces, user)?
            .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        Ok((doc.decode(Collection::Userspaces, user)?, doc.version))
    }

    /// Read-modify-write of one userspace under compare-and-set, retried on
    /// conflict. `f` may add further operations to the batch; they commit
    /// atomically with the userspace.
    pub(crate) fn update_userspace<T>(
        &self,
        user: &UserId,
        mut f: impl FnMut(&mut UserspaceRecord, &Catalog, &mut Batch) -> Result<T>,
    ) -> Result<T> {
        loop {
            let catalog = self.catalog.read();
            let (mut rec, version) = self.load_userspace(user)?;
            let mut batch = Batch::new();
            let out = f(&mut rec, &catalog, &mut batch)?;
            let mut all = Batch::new();
            all.put_doc(
                Collection::Userspaces,
                user.as_str(),
                &rec,
                Expect::Version(version),
            );
            all.extend(batch);
            match self.store.commit(all) {
                Ok(_) => return Ok(out),
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// 256 random bits, URL-safe base64 without padding.
pub(crate) fn secret() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(bytes)
}

/// Store key for a secret; secrets themselves are never persisted.
pub(crate) fn digest(secret: &str) -> String {
    hex::encode(Sha256::digest(secret.as_bytes()))
}

/// Lowercase slug of a display name, used as the base of an app id.
pub(crate) fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("app");
    }
    out
}
