#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use appnet::broker::{AuditKind, AuditRecord, Broker, BrokerConfig};
use appnet::clock::ManualClock;
use appnet::store::{Batch, Collection, MemoryStore, Op, Store, StoreError, Versioned};
use appnet::{ApplicationSubmission, Error, ManualConnection, Market, Runtime};
use appnet_core::{AppId, ApplicationDefinition, ConnectionStatus, UserId};
use parking_lot::Mutex;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

#[path = "../../../core/tests/common/mod.rs"]
pub mod common;

/// Draws one value from `strategy`, fully determined by `seed`.
pub fn sample<S: Strategy>(strategy: S, seed: u64) -> S::Value {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut runner = TestRunner::new_with_rng(
        Config::default(),
        TestRng::from_seed(RngAlgorithm::ChaCha, &key),
    );
    strategy
        .new_tree(&mut runner)
        .expect("strategy generates")
        .current()
}

pub struct World {
    pub clock: Arc<ManualClock>,
    pub broker: Arc<Broker>,
    pub market: Market,
    pub runtime: Runtime,
}

impl World {
    pub fn new(store: Arc<dyn Store>, config: BrokerConfig) -> Self {
        let clock = Arc::new(ManualClock::default());
        let broker = Broker::open(store, clock.clone(), config).expect("broker opens");
        Self {
            clock,
            market: Market::new(broker.clone()),
            runtime: Runtime::new(broker.clone()),
            broker,
        }
    }

    pub fn memory() -> Self {
        Self::new(Arc::new(MemoryStore::new()), BrokerConfig::default())
    }
}

pub fn submission(def: &ApplicationDefinition) -> ApplicationSubmission {
    ApplicationSubmission {
        display_name: def.display_name.clone(),
        provider_name: def.provider_name.clone(),
        endpoint: def.endpoint.clone(),
        fired: def.fired.clone(),
        handled: def.handled.clone(),
        intents: def.intents.clone(),
        messages: vec![],
    }
}

/// A market populated from a random graph and app set. Returns app ids and
/// credentials in submission order.
pub fn populate(
    world: &World,
    graph: &common::Graph,
    apps: &BTreeMap<AppId, ApplicationDefinition>,
) -> Vec<(AppId, String)> {
    for m in &graph.messages {
        world
            .market
            .register_message(m.clone())
            .expect("message registers");
    }
    for a in &graph.adapters {
        world
            .market
            .register_adapter(a.clone())
            .expect("adapter registers");
    }
    apps.values()
        .map(|def| {
            let s = world
                .market
                .submit_application(submission(def))
                .expect("app submits");
            (s.app_id, s.credential)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Access {
    pub write: bool,
    pub collection: Collection,
    pub key: String,
    pub value: Option<Value>,
}

/// Passes everything through to `inner` and records each document touched.
pub struct RecordingStore {
    inner: Arc<dyn Store>,
    log: Mutex<Vec<Access>>,
}

impl RecordingStore {
    pub fn new(inner: Arc<dyn Store>) -> Self {
        Self {
            inner,
            log: Mutex::default(),
        }
    }

    pub fn take(&self) -> Vec<Access> {
        std::mem::take(&mut self.log.lock())
    }

    pub fn inner(&self) -> &Arc<dyn Store> {
        &self.inner
    }
}

impl Store for RecordingStore {
    fn get(&self, collection: Collection, key: &str) -> Result<Option<Versioned>, StoreError> {
        let got = self.inner.get(collection, key)?;
        self.log.lock().push(Access {
            write: false,
            collection,
            key: key.into(),
            value: got.as_ref().map(|d| d.value.clone()),
        });
        Ok(got)
    }

    fn list(&self, collection: Collection) -> Result<Vec<(String, Versioned)>, StoreError> {
        let got = self.inner.list(collection)?;
        let mut log = self.log.lock();
        for (k, d) in &got {
            log.push(Access {
                write: false,
                collection,
                key: k.clone(),
                value: Some(d.value.clone()),
            });
        }
        Ok(got)
    }

    fn commit(&self, batch: Batch) -> Result<u64, StoreError> {
        let mut touched = Vec::new();
        for op in batch.ops() {
            match op {
                Op::Put {
                    collection,
                    key,
                    value,
                    ..
                } => touched.push(Access {
                    write: true,
                    collection: *collection,
                    key: key.clone(),
                    value: Some(value.clone()),
                }),
                Op::Delete {
                    collection, key, ..
                } => touched.push(Access {
                    write: true,
                    collection: *collection,
                    key: key.clone(),
                    value: self.inner.get(*collection, key)?.map(|d| d.value),
                }),
            }
        }
        let r = self.inner.commit(batch);
        if r.is_ok() {
            self.log.lock().extend(touched);
        }
        r
    }
}

/// The user a stored document belongs to, if it is user-scoped.
pub fn owner_of(a: &Access) -> Option<String> {
    match a.collection {
        Collection::Users | Collection::Userspaces => Some(a.key.clone()),
        _ => a.value.as_ref().and_then(|v| {
            v.get("user_id")
                .or_else(|| v.get("userspace").and_then(|u| u.get("user_id")))
                .and_then(Value::as_str)
                .map(str::to_string)
        }),
    }
}

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub ops: usize,
    pub user_ops: usize,
    pub violations: Vec<String>,
    pub foreign_descriptors: usize,
    pub descriptors: usize,
    pub store_errors: Vec<String>,
    pub audit: Vec<AuditRecord>,
    pub kinds: BTreeMap<&'static str, usize>,
}

fn userspace_docs(store: &dyn Store) -> BTreeMap<String, Value> {
    store
        .list(Collection::Userspaces)
        .expect("list userspaces")
        .into_iter()
        .map(|(k, d)| (k, d.value))
        .collect()
}

struct Comm {
    id: String,
    producer: AppId,
    consumer: AppId,
    message: String,
}

/// Runs `ops` random operations across `users` users against a fresh
/// market built from `seed`, checking after every user-scoped operation
/// that nothing outside that user's documents was read or written and that
/// other users' userspaces are unchanged.
pub fn isolation_fuzz(seed: u64, ops: usize, users: usize) -> FuzzReport {
    // Retry the draw until there is something to connect.
    let (graph, apps) = (0u64..)
        .map(|k| {
            let g = sample(common::graph(12, 10), seed.wrapping_add(k << 32));
            let a = sample(common::apps(g.names(), 8), seed ^ 0x9e37 ^ k);
            (g, a)
        })
        .find(|(_, a)| a.len() >= 3)
        .unwrap();
    let recording = Arc::new(RecordingStore::new(Arc::new(MemoryStore::new())));
    let world = World::new(recording.clone(), BrokerConfig::default());
    let creds: BTreeMap<AppId, String> = populate(&world, &graph, &apps).into_iter().collect();
    let app_ids: Vec<AppId> = creds.keys().cloned().collect();
    let user_ids: Vec<UserId> = (0..users)
        .map(|i| UserId::new(format!("user{i}")))
        .collect();
    for u in &user_ids {
        world.market.create_user(u.as_str()).expect("user creates");
    }
    recording.take();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport::default();
    let mut grants: BTreeMap<(UserId, AppId), String> = BTreeMap::new();
    let mut tokens: BTreeMap<(UserId, AppId), String> = BTreeMap::new();
    let mut comms: BTreeMap<UserId, Vec<Comm>> = BTreeMap::new();
    let mut originals: BTreeMap<AppId, ApplicationDefinition> = BTreeMap::new();
    let m = &world.market;
    let rt = &world.runtime;

    for _ in 0..ops {
        report.ops += 1;
        world
            .clock
            .advance(Duration::from_secs(rng.random_range(0..4)));
        if app_ids.is_empty() {
            break;
        }

        // A provider update now and then; it legitimately touches every
        // userspace with the app installed, so it is not isolation-checked.
        if rng.random_bool(0.03) {
            let app = &app_ids[rng.random_range(0..app_ids.len())];
            let current = m.application(app).expect("app exists");
            let original = originals
                .entry(app.clone())
                .or_insert_with(|| current.clone())
                .clone();
            let mut next = original.clone();
            if current == original && !next.handled.is_empty() {
                let drop = next.handled.iter().next().cloned().unwrap();
                next.handled.remove(&drop);
                next.intents.retain(|i| i.message_name != drop);
            }
            *report.kinds.entry("update-app").or_default() += 1;
            let r = m.update_application(app, &creds[app], submission(&next));
            record_store_error(&mut report, r.err());
            recording.take();
            continue;
        }

        let u = user_ids[rng.random_range(0..user_ids.len())].clone();
        let before = userspace_docs(&**recording.inner());
        recording.take();
        let us = m.userspace(&u).expect("userspace");
        let installed: Vec<AppId> = us.installed.iter().cloned().collect();
        let pick = |rng: &mut ChaCha8Rng, v: &[AppId]| -> Option<AppId> {
            (!v.is_empty()).then(|| v[rng.random_range(0..v.len())].clone())
        };
        const MIX: [usize; 22] = [
            0, 0, 0, 1, 1, 1, 2, 3, 3, 3, 3, 4, 5, 6, 7, 7, 7, 7, 8, 8, 9, 10,
        ];
        let kind = if rng.random_bool(0.05) {
            11
        } else {
            MIX[rng.random_range(0..MIX.len())]
        };
        let err: Option<Error> = match kind {
            0 => {
                let app = pick(&mut rng, &app_ids).unwrap();
                match m.install_app(&u, &app) {
                    Ok(g) => {
                        grants.insert((u.clone(), app), g.code);
                        None
                    }
                    Err(e) => Some(e),
                }
            }
            1 => {
                let keys: Vec<_> = grants.keys().filter(|(gu, _)| gu == &u).cloned().collect();
                if keys.is_empty() {
                    None
                } else {
                    let key = keys[rng.random_range(0..keys.len())].clone();
                    let code = grants[&key].clone();
                    match m.exchange_grant(&code, &key.1, &creds[&key.1]) {
                        Ok(t) => {
                            tokens.insert(key, t.token);
                            None
                        }
                        Err(e) => Some(e),
                    }
                }
            }
            2 => m.recommend_connections(&u).err(),
            3 | 4 => match m.recommend_connections(&u) {
                Ok(recs) if !recs.is_empty() => {
                    let id = recs[rng.random_range(0..recs.len())]
                        .connection
                        .connection_id
                        .clone();
                    if kind == 3 {
                        m.confirm_connection(&u, &id).err()
                    } else {
                        m.reject_connection(&u, &id).err()
                    }
                }
                Ok(_) => None,
                Err(e) => Some(e),
            },
            5 => {
                let (Some(p), Some(c)) = (pick(&mut rng, &installed), pick(&mut rng, &installed))
                else {
                    continue;
                };
                let fired: Vec<String> = m.application(&p).unwrap().fired.into_iter().collect();
                if fired.is_empty() {
                    continue;
                }
                let msg = fired[rng.random_range(0..fired.len())].clone();
                m.create_manual_connection(
                    &u,
                    &ManualConnection {
                        producer: p,
                        message: msg,
                        consumer: c,
                        chain: None,
                    },
                )
                .err()
            }
            6 => match pick(&mut rng, &installed) {
                Some(app) if rng.random_bool(0.4) => {
                    tokens.remove(&(u.clone(), app.clone()));
                    m.uninstall_app(&u, &app).err()
                }
                _ => None,
            },
            7 => {
                let keys: Vec<_> = tokens.keys().filter(|(tu, _)| tu == &u).cloned().collect();
                if keys.is_empty() {
                    None
                } else {
                    // Mostly ask about something that is actually connected.
                    let live: Vec<(AppId, String)> = us
                        .connections
                        .iter()
                        .filter(|c| c.status == ConnectionStatus::Confirmed)
                        .filter(|c| tokens.contains_key(&(u.clone(), c.producer.clone())))
                        .map(|c| (c.producer.clone(), c.message.clone()))
                        .collect();
                    let (key, hint) = if !live.is_empty() && rng.random_bool(0.7) {
                        let (p, msg) = live[rng.random_range(0..live.len())].clone();
                        ((u.clone(), p), Some(msg))
                    } else {
                        (keys[rng.random_range(0..keys.len())].clone(), None)
                    };
                    let fired: Vec<String> =
                        m.application(&key.1).unwrap().fired.into_iter().collect();
                    let msg = if let Some(h) = hint {
                        h
                    } else if fired.is_empty() {
                        "msg.m0".to_string()
                    } else {
                        fired[rng.random_range(0..fired.len())].clone()
                    };
                    match rt.query_connections(&tokens[&key], &msg) {
                        Ok(descs) => {
                            let own = m.userspace(&u).unwrap();
                            for d in descs {
                                report.descriptors += 1;
                                let mine = own.connections.iter().any(|c| {
                                    c.connection_id == d.connection_id
                                        && c.status == ConnectionStatus::Confirmed
                                });
                                if !mine {
                                    report.foreign_descriptors += 1;
                                }
                                comms.entry(u.clone()).or_default().push(Comm {
                                    id: d.comm_id,
                                    producer: key.1.clone(),
                                    consumer: d.consumer,
                                    message: d.target_message,
                                });
                            }
                            None
                        }
                        Err(e) => Some(e),
                    }
                }
            }
            8 | 9 => match comms.get(&u).filter(|v| !v.is_empty()) {
                Some(v) => {
                    let c = &v[rng.random_range(0..v.len())];
                    if kind == 8 {
                        let consumer = if rng.random_bool(0.8) {
                            c.consumer.clone()
                        } else {
                            pick(&mut rng, &app_ids).unwrap()
                        };
                        rt.verify_communication(&c.id, &c.producer, &consumer, &c.message)
                            .err()
                    } else {
                        rt.report_delivery(&c.id, appnet::DeliveryOutcome::Delivered, "fuzz")
                            .err()
                    }
                }
                None => None,
            },
            10 => {
                let keys: Vec<_> = tokens.keys().filter(|(tu, _)| tu == &u).cloned().collect();
                if keys.is_empty() {
                    None
                } else {
                    rt.userspace_query(&tokens[&keys[rng.random_range(0..keys.len())]])
                        .err()
                }
            }
            _ => {
                // Another user's connection id presented under this user.
                let other = &user_ids[rng.random_range(0..user_ids.len())];
                let theirs = m.userspace(other).unwrap();
                recording.take();
                match theirs.connections.first() {
                    Some(c) if other != &u => match m.confirm_connection(&u, &c.connection_id) {
                        Err(Error::UnknownConnection(_)) => None,
                        Ok(_) => {
                            report
                                .violations
                                .push(format!("{u} confirmed {}", c.connection_id));
                            None
                        }
                        Err(e) => Some(e),
                    },
                    _ => None,
                }
            }
        };
        report.user_ops += 1;
        *report.kinds.entry(KINDS[kind]).or_default() += 1;
        record_store_error(&mut report, err);

        for a in recording.take() {
            if let Some(owner) = owner_of(&a) {
                if owner != u.as_str() {
                    report.violations.push(format!(
                        "{} by {u} {} {}/{} owned by {owner}",
                        KINDS[kind],
                        if a.write { "wrote" } else { "read" },
                        a.collection,
                        a.key
                    ));
                }
            }
        }
        let after = userspace_docs(&**recording.inner());
        recording.take();
        for (k, v) in &before {
            if k != u.as_str() && after.get(k) != Some(v) {
                report
                    .violations
                    .push(format!("{} by {u} changed userspace {k}", KINDS[kind]));
            }
        }
        if after.len() != before.len() {
            report.violations.push("userspace set changed".into());
        }
    }
    report.audit = world.broker.audit_log().expect("audit");
    report
}

const KINDS: [&str; 12] = [
    "install",
    "exchange",
    "recommend",
    "confirm",
    "reject",
    "manual-connect",
    "uninstall",
    "query",
    "verify",
    "report",
    "userspace-query",
    "foreign-confirm",
];

fn record_store_error(report: &mut FuzzReport, e: Option<Error>) {
    if let Some(Error::Store(e)) = e {
        report.store_errors.push(e.to_string());
    }
}

/// Connection ids returned by queries that lack a prior confirm or manual
/// create record in `audit`.
pub fn unconfirmed_queries(audit: &[AuditRecord]) -> (usize, Vec<String>) {
    let mut confirmed: BTreeSet<String> = BTreeSet::new();
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut sorted: Vec<&AuditRecord> = audit.iter().collect();
    sorted.sort_by_key(|r| r.seq);
    for r in sorted {
        let Some(id) = &r.connection_id else { continue };
        match r.kind {
            AuditKind::Confirm | AuditKind::ManualCreate => {
                confirmed.insert(id.to_string());
            }
            AuditKind::Query => {
                checked += 1;
                if !confirmed.contains(id.as_str()) {
                    bad.push(id.to_string());
                }
            }
            _ => {}
        }
    }
    (checked, bad)
}

pub struct Bob {
    pub world: World,
    pub stay: appnet::SubmittedApp,
    pub shop: appnet::SubmittedApp,
    pub bob: UserId,
}

/// The two scenario apps and user bob with both installed. Endpoints are
/// placeholders unless given.
pub fn bob_world(adapter: bool, endpoints: Option<(&str, &str)>, config: BrokerConfig) -> Bob {
    use appnet::scenario::*;
    let world = World::new(Arc::new(MemoryStore::new()), config);
    let (se, me) = endpoints.unwrap_or(("http://127.0.0.1:9", "http://127.0.0.1:9"));
    let m = &world.market;
    m.register_message(booking_message(&"stayfinder".into()))
        .unwrap();
    m.register_message(location_message(&"shopmart".into()))
        .unwrap();
    let stay = m.submit_application(stayfinder_submission(se)).unwrap();
    let shop = m.submit_application(shopmart_submission(me)).unwrap();
    if adapter {
        m.register_adapter(booking2location()).unwrap();
    }
    let bob = m.create_user("bob").unwrap();
    Bob {
        world,
        stay,
        shop,
        bob,
    }
}

impl Bob {
    /// Installs both apps and returns the tokens for stayfinder and shopmart.
    pub fn install_both(&self) -> (String, String) {
        let m = &self.world.market;
        let g1 = m.install_app(&self.bob, &self.stay.app_id).unwrap();
        let g2 = m.install_app(&self.bob, &self.shop.app_id).unwrap();
        let t1 = m
            .exchange_grant(&g1.code, &self.stay.app_id, &self.stay.credential)
            .unwrap();
        let t2 = m
            .exchange_grant(&g2.code, &self.shop.app_id, &self.shop.credential)
            .unwrap();
        (t1.token, t2.token)
    }

    /// Installs, confirms the single recommendation and returns the
    /// stayfinder token and the confirmed connection.
    pub fn connected(&self) -> (String, appnet_core::Connection) {
        let (t, _) = self.install_both();
        let recs = self.world.market.recommend_connections(&self.bob).unwrap();
        assert_eq!(recs.len(), 1);
        let c = self
            .world
            .market
            .confirm_connection(&self.bob, &recs[0].connection.connection_id)
            .unwrap();
        (t, c)
    }
}

pub struct Served {
    pub market: appnet::http::Server,
    pub runtime: appnet::http::Server,
    clock: Arc<ManualClock>,
}

impl Served {
    pub async fn start(world: &World) -> Self {
        use appnet::http::{market_router, runtime_router, Server};
        Self {
            market: Server::ephemeral(market_router(world.market.clone()))
                .await
                .unwrap(),
            runtime: Server::ephemeral(runtime_router(world.runtime.clone()))
                .await
                .unwrap(),
            clock: world.clock.clone(),
        }
    }

    pub fn client(&self, app: &appnet::SubmittedApp) -> appnet::sdk::AppClient {
        appnet::sdk::AppClient::new(appnet::sdk::AppRuntimeConfig::new(
            self.market.url(),
            self.runtime.url(),
            app.app_id.clone(),
            app.credential.clone(),
        ))
        .with_clock(self.clock.clone())
    }
}

pub async fn listener() -> (tokio::net::TcpListener, String) {
    let l = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    (l, url)
}

/// An address nothing listens on.
pub async fn dead_endpoint() -> String {
    let (l, url) = listener().await;
    drop(l);
    url
}

pub mod batches {
    use super::*;
    use appnet::store::{Expect, FileStore, FileStoreOptions, State};

    const COLLECTIONS: [Collection; 3] =
        [Collection::Apps, Collection::Userspaces, Collection::Audit];

    /// `n` batches over a small key pool. Version expectations are drawn
    /// near the current sequence number, so some hold and some conflict.
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<Batch> {
        (0..n)
            .map(|i| {
                let mut b = Batch::new();
                for _ in 0..rng.random_range(1..=4) {
                    let c = COLLECTIONS[rng.random_range(0..COLLECTIONS.len())];
                    let key = format!("k{}", rng.random_range(0..5));
                    let expect = match rng.random_range(0..6) {
                        0 => Expect::Absent,
                        1 | 2 => Expect::Version(rng.random_range(1..=(i as u64 / 2 + 2))),
                        _ => Expect::Any,
                    };
                    if rng.random_bool(0.2) {
                        b.delete(c, key, expect);
                    } else {
                        let value = serde_json::json!({ "n": rng.random::<u32>(), "text": "x".repeat(rng.random_range(0..40)) });
                        b.put(c, key, value, expect);
                    }
                }
                b
            })
            .collect()
    }

    pub fn outcome(r: &Result<u64, StoreError>) -> Result<u64, String> {
        match r {
            Ok(s) => Ok(*s),
            Err(StoreError::Conflict { collection, key }) => {
                Err(format!("conflict {collection}/{key}"))
            }
            Err(e) => Err(e.to_string()),
        }
    }

    /// States after 0, 1, .. n batches on a memory store.
    pub fn reference(batches: &[Batch]) -> (Vec<State>, Vec<Result<u64, String>>) {
        let m = MemoryStore::new();
        let mut states = vec![m.snapshot()];
        let mut outcomes = Vec::new();
        for b in batches {
            outcomes.push(outcome(&m.commit(b.clone())));
            states.push(m.snapshot());
        }
        (states, outcomes)
    }

    pub fn options(
        snapshot_every: Option<u64>,
        crash_after_bytes: Option<u64>,
    ) -> FileStoreOptions {
        FileStoreOptions {
            fsync: false,
            snapshot_every,
            crash_after_bytes,
        }
    }

    /// Size on disk after a crash-free run.
    pub fn bytes_written(batches: &[Batch], snapshot_every: Option<u64>) -> u64 {
        let dir = tempfile::tempdir().unwrap();
        let s = FileStore::open(dir.path(), options(snapshot_every, Some(u64::MAX))).unwrap();
        for b in batches {
            let _ = s.commit(b.clone());
        }
        drop(s);
        walk_size(dir.path())
    }

    fn walk_size(p: &std::path::Path) -> u64 {
        // Final size on disk. Snapshots overwrite earlier bytes, so the total
        // written is larger; callers draw crash points from a wider range.
        std::fs::read_dir(p)
            .unwrap()
            .map(|e| e.unwrap().metadata().unwrap().len())
            .sum::<u64>()
    }

    pub struct CrashRun {
        pub crashed_at: Option<usize>,
        pub acked: usize,
        pub recovered_matches: Option<usize>,
        pub resumed: bool,
    }

    /// Runs `batches` on a file store that dies after `budget` bytes, reopens
    /// it and reports which reference state it recovered to.
    pub fn crash_run(batches: &[Batch], snapshot_every: Option<u64>, budget: u64) -> CrashRun {
        let (states, _) = reference(batches);
        let dir = tempfile::tempdir().unwrap();
        let s = FileStore::open(dir.path(), options(snapshot_every, Some(budget))).unwrap();
        let mut crashed_at = None;
        let mut acked = 0;
        for (i, b) in batches.iter().enumerate() {
            match s.commit(b.clone()) {
                Ok(_) => acked = i + 1,
                Err(StoreError::Conflict { .. }) => {}
                Err(StoreError::Crashed) => {
                    crashed_at = Some(i);
                    break;
                }
                Err(e) => panic!("unexpected store error {e}"),
            }
        }
        drop(s);
        let r = FileStore::open(dir.path(), options(snapshot_every, None)).unwrap();
        let got = r.snapshot_state();
        // Only the crashing batch may be in doubt.
        let candidates: Vec<usize> = match crashed_at {
            Some(i) => vec![i, i + 1],
            None => vec![batches.len()],
        };
        let recovered_matches = candidates.into_iter().find(|&j| states[j] == got);
        let mut probe = Batch::new();
        probe.put(Collection::Apps, "probe", serde_json::json!(1), Expect::Any);
        let resumed = r.commit(probe).is_ok();
        CrashRun {
            crashed_at,
            acked,
            recovered_matches,
            resumed,
        }
    }

    /// Same batches on memory and file: identical outcomes and states,
    /// before and after reopening.
    pub fn equivalent(batches: &[Batch], snapshot_every: Option<u64>) -> Result<(), String> {
        let (states, outcomes) = reference(batches);
        let dir = tempfile::tempdir().unwrap();
        let f = FileStore::open(dir.path(), options(snapshot_every, None)).unwrap();
        for (i, b) in batches.iter().enumerate() {
            let o = outcome(&f.commit(b.clone()));
            if o != outcomes[i] {
                return Err(format!("batch {i}: file {o:?}, memory {:?}", outcomes[i]));
            }
            if f.snapshot_state() != states[i + 1] {
                return Err(format!("state differs after batch {i}"));
            }
        }
        drop(f);
        let r = FileStore::open(dir.path(), options(snapshot_every, None)).unwrap();
        if &r.snapshot_state() != states.last().unwrap() {
            return Err("state differs after reopen".into());
        }
        Ok(())
    }
}
