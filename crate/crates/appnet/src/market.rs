//! The configuration-stage service.
//!
//! Providers publish messages, adapters and application definitions here;
//! users install applications, receive grants, review recommended
//! connections and confirm, reject or draw connections by hand. Nothing in
//! this module moves payloads.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use appnet_core::{
    recommend, validate_application, AccessToken, AdapterDefinition, AppId, ApplicationDefinition,
    AuthorizationGrant, Chain, Connection, ConnectionId, ConnectionStatus, Intent, NamedMessage,
    Origin, Recommendation, RegisterOutcome, Timestamp, UserId, Userspace, Violation,
};
use serde::{Deserialize, Serialize};

use crate::broker::{
    digest, secret, slug, AppRecord, AuditEntry, AuditKind, Broker, Catalog, GrantRecord, Ranked,
    TokenRecord, UserRecord, UserspaceRecord,
};
use crate::error::{Error, Result};
use crate::store::{Batch, Collection, Expect, StoreError};

/// An application definition as a provider submits it. The market assigns
/// the id and the credential.
///
/// `messages` may carry message registrations that are committed atomically
/// with the application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSubmission {
    pub display_name: String,
    pub provider_name: String,
    pub endpoint: String,
    #[serde(default)]
    pub fired: BTreeSet<String>,
    #[serde(default)]
    pub handled: BTreeSet<String>,
    #[serde(default)]
    pub intents: Vec<Intent>,
    #[serde(default)]
    pub messages: Vec<NamedMessage>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmittedApp {
    pub app_id: AppId,
    /// Returned once; only its digest is stored.
    pub credential: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualConnection {
    pub producer: AppId,
    pub message: String,
    pub consumer: AppId,
    #[serde(default)]
    pub chain: Option<Chain>,
}

#[derive(Clone, Debug)]
pub struct Market {
    broker: Arc<Broker>,
}

fn valid_user_name(name: &str) -> bool {
    let mut chars = name.chars();
    name.len() <= 64
        && matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_' | '-'))
}

fn check_submission(sub: &ApplicationSubmission) -> Result<()> {
    if sub.display_name.trim().is_empty() {
        return Err(Error::InvalidApplication("display_name is empty".into()));
    }
    if sub.provider_name.trim().is_empty() {
        return Err(Error::InvalidApplication("provider_name is empty".into()));
    }
    if !(sub.endpoint.starts_with("http://") || sub.endpoint.starts_with("https://")) {
        return Err(Error::InvalidApplication(format!(
            "endpoint {:?} is not an http(s) URL",
            sub.endpoint
        )));
    }
    Ok(())
}

/// Splits application violations into the error the caller sees: unknown
/// messages take precedence over intent problems.
fn application_error(violations: Vec<Violation>) -> Error {
    if let Some(Violation::UnknownMessage { message }) = violations
        .iter()
        .find(|v| matches!(v, Violation::UnknownMessage { .. }))
    {
        return Error::Registry(appnet_core::RegistryError::UnknownMessage(message.clone()));
    }
    Error::InvalidIntent(violations)
}

/// Whether a connection still type-checks against the current catalog.
fn type_checks(catalog: &Catalog, c: &Connection) -> bool {
    let (Some(p), Some(k)) = (catalog.apps.get(&c.producer), catalog.apps.get(&c.consumer)) else {
        return false;
    };
    if !p.definition.fired.contains(&c.message) {
        return false;
    }
    match catalog.registry.chain_target(&c.message, &c.chain) {
        Ok(target) => k.definition.handled.contains(&target),
        Err(_) => false,
    }
}

/// Recomputes the recommended connections of a userspace in place. Pending
/// recommendations keep their ids when their tuple is still recommended.
pub(crate) fn refresh(
    rec: &mut UserspaceRecord,
    catalog: &Catalog,
    now: Timestamp,
    max_len: usize,
) -> Result<()> {
    let defs = catalog.definitions_of(&rec.userspace.installed);
    let candidates = recommend(
        &catalog.registry,
        &defs,
        &rec.userspace.connections,
        max_len,
    )?;

    let (mut pending, mut kept): (Vec<Connection>, Vec<Connection>) =
        std::mem::take(&mut rec.userspace.connections)
            .into_iter()
            .partition(|c| c.status == ConnectionStatus::Recommended);
    rec.ranks.clear();
    for (rank, cand) in candidates.into_iter().enumerate() {
        let existing = pending
            .iter()
            .position(|c| c.same_tuple(&cand.producer, &cand.message, &cand.consumer, &cand.chain));
        let conn = match existing {
            Some(i) => pending.swap_remove(i),
            None => Connection {
                connection_id: rec.mint_connection_id(),
                user_id: rec.userspace.user_id.clone(),
                producer: cand.producer,
                message: cand.message,
                chain: cand.chain,
                consumer: cand.consumer,
                status: ConnectionStatus::Recommended,
                origin: Origin::Recommended,
                created_at: now,
                updated_at: now,
            },
        };
        rec.ranks.insert(
            conn.connection_id.clone(),
            Ranked {
                rank: rank as u32,
                reason: cand.reason,
            },
        );
        kept.push(conn);
    }
    kept.sort_by(|a, b| a.connection_id.cmp(&b.connection_id));
    rec.userspace.connections = kept;
    rec.stale = false;
    Ok(())
}

fn ranked_list(rec: &UserspaceRecord) -> Vec<Recommendation> {
    let mut out: Vec<Recommendation> = rec
        .userspace
        .connections
        .iter()
        .filter(|c| c.status == ConnectionStatus::Recommended)
        .filter_map(|c| {
            rec.ranks.get(&c.connection_id).map(|r| Recommendation {
                connection: c.clone(),
                rank: r.rank,
                reason: r.reason,
            })
        })
        .collect();
    out.sort_by_key(|r| r.rank);
    out
}

impl Market {
    pub fn new(broker: Arc<Broker>) -> Self {
        Self { broker }
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    fn max_len(&self) -> usize {
        self.broker.config.max_chain_len
    }

    pub fn register_message(&self, message: NamedMessage) -> Result<RegisterOutcome> {
        let mut catalog = self.broker.catalog_mut();
        let outcome = catalog.registry.check_message(&message)?;
        if outcome == RegisterOutcome::Registered {
            let mut b = Batch::new();
            b.put_doc(
                Collection::Messages,
                message.name.as_str(),
                &message,
                Expect::Absent,
            );
            self.broker.store.commit(b)?;
            catalog.registry.register_message(message)?;
        }
        Ok(outcome)
    }

    pub fn register_adapter(&self, adapter: AdapterDefinition) -> Result<RegisterOutcome> {
        let mut catalog = self.broker.catalog_mut();
        let outcome = catalog.registry.check_adapter(&adapter)?;
        if outcome == RegisterOutcome::Registered {
            let mut b = Batch::new();
            b.put_doc(
                Collection::Adapters,
                adapter.adapter_id.as_str(),
                &adapter,
                Expect::Absent,
            );
            self.broker.store.commit(b)?;
            catalog.registry.register_adapter(adapter)?;
        }
        Ok(outcome)
    }

    pub fn message(&self, name: &str) -> Result<NamedMessage> {
        self.broker
            .catalog()
            .registry
            .message(name)
            .cloned()
            .ok_or_else(|| appnet_core::RegistryError::UnknownMessage(name.into()).into())
    }

    pub fn messages(&self) -> Vec<NamedMessage> {
        self.broker.catalog().registry.messages().cloned().collect()
    }

    pub fn adapters(&self) -> Vec<AdapterDefinition> {
        self.broker.catalog().registry.adapters().cloned().collect()
    }

    pub fn application(&self, id: &AppId) -> Result<ApplicationDefinition> {
        Ok(self.broker.catalog().app(id)?.definition.clone())
    }

    pub fn applications(&self) -> Vec<ApplicationDefinition> {
        self.broker
            .catalog()
            .apps
            .values()
            .map(|r| r.definition.clone())
            .collect()
    }

    /// Builds the registry the submission would see, with inline messages
    /// registered under `owner`. Returns the messages that are new.
    fn stage_messages(
        catalog: &Catalog,
        sub: &ApplicationSubmission,
        owner: &AppId,
    ) -> Result<(appnet_core::MessageRegistry, Vec<NamedMessage>)> {
        let mut registry = catalog.registry.clone();
        let mut fresh = Vec::new();
        for m in &sub.messages {
            let mut m = m.clone();
            m.owner = owner.clone();
            if registry.register_message(m.clone())? == RegisterOutcome::Registered {
                fresh.push(m);
            }
        }
        Ok((registry, fresh))
    }

    fn definition(app_id: AppId, sub: ApplicationSubmission) -> ApplicationDefinition {
        ApplicationDefinition {
            app_id,
            display_name: sub.display_name,
            provider_name: sub.provider_name,
            endpoint: sub.endpoint,
            fired: sub.fired,
            handled: sub.handled,
            intents: sub.intents,
        }
    }

    fn check_display_name(
        catalog: &Catalog,
        sub: &ApplicationSubmission,
        except: Option<&AppId>,
    ) -> Result<()> {
        let taken = catalog.apps.values().any(|r| {
            Some(&r.definition.app_id) != except
                && r.definition.provider_name == sub.provider_name
                && r.definition.display_name == sub.display_name
        });
        if taken {
            return Err(Error::DuplicateApp {
                provider: sub.provider_name.clone(),
                display_name: sub.display_name.clone(),
            });
        }
        Ok(())
    }

    pub fn submit_application(&self, sub: ApplicationSubmission) -> Result<SubmittedApp> {
        check_submission(&sub)?;
        let mut catalog = self.broker.catalog_mut();
        Self::check_display_name(&catalog, &sub, None)?;

        let base = slug(&sub.display_name);
        let mut app_id = AppId::new(base.clone());
        let mut n = 2;
        while catalog.apps.contains_key(&app_id) {
            app_id = AppId::new(format!("{base}-{n}"));
            n += 1;
        }

        let (registry, fresh) = Self::stage_messages(&catalog, &sub, &app_id)?;
        let definition = Self::definition(app_id.clone(), sub);
        let violations = validate_application(&definition, &registry);
        if !violations.is_empty() {
            return Err(application_error(violations));
        }

        let credential = secret();
        let record = AppRecord {
            definition,
            credential_digest: digest(&credential),
        };
        let mut b = Batch::new();
        for m in &fresh {
            b.put_doc(Collection::Messages, m.name.as_str(), m, Expect::Absent);
        }
        b.put_doc(Collection::Apps, app_id.as_str(), &record, Expect::Absent);
        self.broker.store.commit(b)?;
        catalog.registry = registry;
        catalog.apps.insert(app_id.clone(), record);
        tracing::info!(app = %app_id, "application submitted");
        Ok(SubmittedApp { app_id, credential })
    }

    fn authenticate(catalog: &Catalog, app_id: &AppId, credential: &str) -> Result<()> {
        let rec = catalog.apps.get(app_id).ok_or(Error::AuthFailure)?;
        if rec.credential_digest != digest(credential) {
            return Err(Error::AuthFailure);
        }
        Ok(())
    }

    /// Replaces a definition. Every userspace with the app installed has its
    /// recommendations marked stale, and confirmed connections that no longer
    /// type-check are revoked, all in one commit.
    pub fn update_application(
        &self,
        app_id: &AppId,
        credential: &str,
        sub: ApplicationSubmission,
    ) -> Result<ApplicationDefinition> {
        check_submission(&sub)?;
        let mut catalog = self.broker.catalog_mut();
        if !catalog.apps.contains_key(app_id) {
            return Err(Error::UnknownApp(app_id.to_string()));
        }
        Self::authenticate(&catalog, app_id, credential)?;
        Self::check_display_name(&catalog, &sub, Some(app_id))?;

        let (registry, fresh) = Self::stage_messages(&catalog, &sub, app_id)?;
        let definition = Self::definition(app_id.clone(), sub);
        let violations = validate_application(&definition, &registry);
        if !violations.is_empty() {
            return Err(application_error(violations));
        }

        let old_registry = std::mem::replace(&mut catalog.registry, registry);
        let mut record = catalog.apps[app_id].clone();
        let old_record = std::mem::replace(&mut record.definition, definition.clone());
        let old_record = AppRecord {
            definition: old_record,
            credential_digest: record.credential_digest.clone(),
        };
        catalog.apps.insert(app_id.clone(), record.clone());

        let result = self.commit_update(&catalog, app_id, &record, &fresh);
        if result.is_err() {
            catalog.registry = old_registry;
            catalog.apps.insert(app_id.clone(), old_record);
        }
        result.map(|_| definition)
    }

    fn commit_update(
        &self,
        catalog: &Catalog,
        app_id: &AppId,
        record: &AppRecord,
        fresh: &[NamedMessage],
    ) -> Result<()> {
        let now = self.broker.now();
        loop {
            let mut b = Batch::new();
            for m in fresh {
                b.put_doc(Collection::Messages, m.name.as_str(), m, Expect::Absent);
            }
            b.put_doc(Collection::Apps, app_id.as_str(), record, Expect::Any);
            for (key, doc) in self.broker.store.list(Collection::Userspaces)? {
                let mut rec: UserspaceRecord = doc.decode(Collection::Userspaces, &key)?;
                if !rec.userspace.installed.contains(app_id) {
                    continue;
                }
                for c in rec.userspace.connections.iter_mut() {
                    if c.status == ConnectionStatus::Confirmed
                        && c.involves(app_id)
                        && !type_checks(catalog, c)
                    {
                        c.transition(ConnectionStatus::Revoked, now)?;
                        self.broker.audit(
                            &mut b,
                            AuditEntry {
                                kind: AuditKind::Revoke,
                                comm_ref: None,
                                connection_id: Some(c.connection_id.clone()),
                                user_id: Some(c.user_id.clone()),
                                app_id: Some(app_id.clone()),
                                detail: "definition update".into(),
                            },
                        );
                    }
                }
                rec.stale = true;
                b.put_doc(
                    Collection::Userspaces,
                    key,
                    &rec,
                    Expect::Version(doc.version),
                );
            }
            match self.broker.store.commit(b) {
                Ok(_) => return Ok(()),
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn create_user(&self, name: &str) -> Result<UserId> {
        if !valid_user_name(name) {
            return Err(Error::InvalidUserName(name.into()));
        }
        let user_id = UserId::new(name);
        let record = UserRecord {
            user_id: user_id.clone(),
            name: name.into(),
            created_at: self.broker.now(),
        };
        let mut b = Batch::new();
        b.put_doc(Collection::Users, name, &record, Expect::Absent);
        b.put_doc(
            Collection::Userspaces,
            name,
            &UserspaceRecord::new(user_id.clone()),
            Expect::Absent,
        );
        match self.broker.store.commit(b) {
            Ok(_) => Ok(user_id),
            Err(StoreError::Conflict { .. }) => Err(Error::DuplicateUser(name.into())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn userspace(&self, user: &UserId) -> Result<Userspace> {
        Ok(self.broker.load_userspace(user)?.0.userspace)
    }

    /// Adds the app to the userspace and issues a single-use grant for the
    /// (user, app) pair.
    pub fn install_app(&self, user: &UserId, app: &AppId) -> Result<AuthorizationGrant> {
        let max_len = self.max_len();
        let now = self.broker.now();
        let expires_at = self.broker.expiry(now, self.broker.config.grant_ttl);
        self.broker.update_userspace(user, |rec, catalog, batch| {
            catalog.app(app)?;
            if !rec.userspace.installed.insert(app.clone()) {
                return Err(Error::AlreadyInstalled(app.to_string()));
            }
            let code = secret();
            let key = digest(&code);
            let grant = GrantRecord {
                user_id: user.clone(),
                app_id: app.clone(),
                issued_at: now,
                expires_at,
                consumed: false,
            };
            batch.put_doc(Collection::Grants, key.as_str(), &grant, Expect::Absent);
            rec.grants.entry(app.clone()).or_default().insert(key);
            refresh(rec, catalog, now, max_len)?;
            Ok(AuthorizationGrant {
                code,
                user_id: user.clone(),
                app_id: app.clone(),
                issued_at: now,
                expires_at,
                consumed: false,
            })
        })
    }

    /// Trades a grant code for an access token. The app must present its
    /// credential; a code works at most once.
    pub fn exchange_grant(
        &self,
        code: &str,
        app_id: &AppId,
        credential: &str,
    ) -> Result<AccessToken> {
        Self::authenticate(&self.broker.catalog(), app_id, credential)?;
        let key = digest(code);
        let doc = self
            .broker
            .store
            .get(Collection::Grants, &key)?
            .ok_or(Error::InvalidGrant)?;
        let grant: GrantRecord = doc.decode(Collection::Grants, &key)?;
        let ttl = self.broker.config.token_ttl;

        self.broker
            .update_userspace(&grant.user_id, |rec, _, batch| {
                let now = self.broker.now();
                let doc = self
                    .broker
                    .store
                    .get(Collection::Grants, &key)?
                    .ok_or(Error::InvalidGrant)?;
                let mut grant: GrantRecord = doc.decode(Collection::Grants, &key)?;
                if grant.consumed || now >= grant.expires_at || grant.app_id != *app_id {
                    return Err(Error::InvalidGrant);
                }
                grant.consumed = true;
                batch.put_doc(
                    Collection::Grants,
                    key.as_str(),
                    &grant,
                    Expect::Version(doc.version),
                );

                let token = secret();
                let token_key = digest(&token);
                let record = TokenRecord {
                    user_id: grant.user_id.clone(),
                    app_id: app_id.clone(),
                    issued_at: now,
                    expires_at: self.broker.expiry(now, ttl),
                };
                batch.put_doc(
                    Collection::Tokens,
                    token_key.as_str(),
                    &record,
                    Expect::Absent,
                );
                rec.tokens
                    .entry(app_id.clone())
                    .or_default()
                    .insert(token_key);
                Ok(AccessToken {
                    token,
                    user_id: record.user_id,
                    app_id: record.app_id,
                    issued_at: record.issued_at,
                    expires_at: record.expires_at,
                })
            })
    }

    /// The current ranked recommendations. Stored recommendations are
    /// recomputed first when stale or out of date with the catalog.
    pub fn recommend_connections(&self, user: &UserId) -> Result<Vec<Recommendation>> {
        let max_len = self.max_len();
        let (rec, _) = self.broker.load_userspace(user)?;
        let needs_refresh = {
            let catalog = self.broker.catalog();
            let mut probe = rec.clone();
            refresh(&mut probe, &catalog, self.broker.now(), max_len)?;
            rec.stale || ranked_list(&probe) != ranked_list(&rec)
        };
        if !needs_refresh {
            return Ok(ranked_list(&rec));
        }
        self.broker.update_userspace(user, |rec, catalog, _| {
            refresh(rec, catalog, self.broker.now(), max_len)?;
            Ok(ranked_list(rec))
        })
    }

    fn decide(
        &self,
        user: &UserId,
        id: &ConnectionId,
        next: ConnectionStatus,
    ) -> Result<Connection> {
        let max_len = self.max_len();
        self.broker.update_userspace(user, |rec, catalog, batch| {
            let now = self.broker.now();
            if rec.stale {
                refresh(rec, catalog, now, max_len)?;
            }
            let conn = rec
                .userspace
                .connection_mut(id)
                .ok_or_else(|| Error::UnknownConnection(id.to_string()))?;
            conn.transition(next, now)?;
            let conn = conn.clone();
            if next == ConnectionStatus::Confirmed {
                self.broker.audit(
                    batch,
                    AuditEntry {
                        kind: AuditKind::Confirm,
                        comm_ref: None,
                        connection_id: Some(conn.connection_id.clone()),
                        user_id: Some(user.clone()),
                        app_id: None,
                        detail: format!("{} -> {}", conn.producer, conn.consumer),
                    },
                );
            }
            refresh(rec, catalog, now, max_len)?;
            Ok(conn)
        })
    }

    pub fn confirm_connection(&self, user: &UserId, id: &ConnectionId) -> Result<Connection> {
        self.decide(user, id, ConnectionStatus::Confirmed)
    }

    /// Rejection is permanent for the tuple.
    pub fn reject_connection(&self, user: &UserId, id: &ConnectionId) -> Result<Connection> {
        self.decide(user, id, ConnectionStatus::Rejected)
    }

    /// A user-drawn connection, born confirmed. Without an explicit chain the
    /// shortest chain to any handled message of the consumer is used. A
    /// pending recommendation for the same tuple is replaced.
    pub fn create_manual_connection(
        &self,
        user: &UserId,
        req: &ManualConnection,
    ) -> Result<Connection> {
        let max_len = self.max_len();
        self.broker.update_userspace(user, |rec, catalog, batch| {
            let now = self.broker.now();
            for app in [&req.producer, &req.consumer] {
                catalog.app(app)?;
                if !rec.userspace.installed.contains(app) {
                    return Err(Error::NotInstalled(app.to_string()));
                }
            }
            if req.producer == req.consumer {
                return Err(Error::InvalidRequest(
                    "producer and consumer must differ".into(),
                ));
            }
            let producer = &catalog.app(&req.producer)?.definition;
            let consumer = &catalog.app(&req.consumer)?.definition;
            if !producer.fired.contains(&req.message) {
                return Err(Error::NotAFiredMessage {
                    app: req.producer.to_string(),
                    message: req.message.clone(),
                });
            }
            let incompatible = || Error::Incompatible {
                message: req.message.clone(),
                consumer: req.consumer.to_string(),
                max_len,
            };
            let chain = match &req.chain {
                Some(chain) => {
                    let target = catalog
                        .registry
                        .chain_target(&req.message, chain)
                        .map_err(appnet_core::RegistryError::from)?;
                    if !consumer.handled.contains(&target) {
                        return Err(incompatible());
                    }
                    chain.clone()
                }
                None => catalog
                    .registry
                    .compatible_targets(&req.message, &consumer.handled, max_len)?
                    .into_values()
                    .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
                    .ok_or_else(incompatible)?,
            };

            if let Some(live) =
                rec.userspace
                    .live_tuple(&req.producer, &req.message, &req.consumer, &chain)
            {
                if live.status == ConnectionStatus::Confirmed {
                    return Err(Error::DuplicateConnection(live.connection_id.to_string()));
                }
                let id = live.connection_id.clone();
                rec.userspace.connections.retain(|c| c.connection_id != id);
                rec.ranks.remove(&id);
            }

            let conn = Connection {
                connection_id: rec.mint_connection_id(),
                user_id: user.clone(),
                producer: req.producer.clone(),
                message: req.message.clone(),
                chain,
                consumer: req.consumer.clone(),
                status: ConnectionStatus::Confirmed,
                origin: Origin::Manual,
                created_at: now,
                updated_at: now,
            };
            rec.userspace.connections.push(conn.clone());
            self.broker.audit(
                batch,
                AuditEntry {
                    kind: AuditKind::ManualCreate,
                    comm_ref: None,
                    connection_id: Some(conn.connection_id.clone()),
                    user_id: Some(user.clone()),
                    app_id: None,
                    detail: format!("{} -> {}", conn.producer, conn.consumer),
                },
            );
            refresh(rec, catalog, now, max_len)?;
            Ok(conn)
        })
    }

    /// Removes the app: confirmed connections touching it are revoked,
    /// pending ones dropped, and its grants and tokens for this user deleted.
    pub fn uninstall_app(&self, user: &UserId, app: &AppId) -> Result<()> {
        let max_len = self.max_len();
        self.broker.update_userspace(user, |rec, catalog, batch| {
            let now = self.broker.now();
            if !rec.userspace.installed.remove(app) {
                return Err(Error::NotInstalled(app.to_string()));
            }
            let mut kept = Vec::with_capacity(rec.userspace.connections.len());
            for mut c in std::mem::take(&mut rec.userspace.connections) {
                if !c.involves(app) {
                    kept.push(c);
                    continue;
                }
                match c.status {
                    ConnectionStatus::Recommended => {
                        rec.ranks.remove(&c.connection_id);
                    }
                    ConnectionStatus::Confirmed => {
                        c.transition(ConnectionStatus::Revoked, now)?;
                        self.broker.audit(
                            batch,
                            AuditEntry {
                                kind: AuditKind::Revoke,
                                comm_ref: None,
                                connection_id: Some(c.connection_id.clone()),
                                user_id: Some(user.clone()),
                                app_id: Some(app.clone()),
                                detail: "uninstall".into(),
                            },
                        );
                        kept.push(c);
                    }
                    _ => kept.push(c),
                }
            }
            rec.userspace.connections = kept;
            for key in rec.grants.remove(app).unwrap_or_default() {
                batch.delete(Collection::Grants, key, Expect::Any);
            }
            for key in rec.tokens.remove(app).unwrap_or_default() {
                batch.delete(Collection::Tokens, key, Expect::Any);
            }
            refresh(rec, catalog, now, max_len)?;
            Ok(())
        })
    }

    /// Every live recommendation and confirmed connection per user, for
    /// inspection tools.
    pub fn userspaces(&self) -> Result<BTreeMap<UserId, Userspace>> {
        self.broker
            .store
            .list(Collection::Userspaces)?
            .into_iter()
            .map(|(k, d)| {
                let rec: UserspaceRecord = d.decode(Collection::Userspaces, &k)?;
                Ok((rec.userspace.user_id.clone(), rec.userspace))
            })
            .collect()
    }
}
