//! The execution-stage service: token resolution, connection queries with
//! fresh communication ids, delivery verification and the audit log.
//!
//! Payloads never pass through here. Producers receive full adapter bodies
//! and transform locally.

use std::sync::Arc;

use appnet_core::{AdapterDefinition, AppId, Connection, ConnectionId, ConnectionStatus, UserId};
use serde::{Deserialize, Serialize};

use crate::broker::{
    digest, secret, AuditEntry, AuditKind, AuditRecord, Broker, CommRecord, TokenRecord,
};
use crate::error::{Error, Result};
use crate::store::{Batch, Collection, Expect};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionDescriptor {
    pub comm_id: String,
    pub connection_id: ConnectionId,
    pub consumer: AppId,
    pub consumer_endpoint: String,
    /// The message the consumer receives, after the chain.
    pub target_message: String,
    pub chain: Vec<AdapterDefinition>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    Unknown,
    Expired,
    TupleMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<InvalidReason>,
    /// On success, the user the communication belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<UserId>,
}

impl Verification {
    pub fn valid(user_id: UserId) -> Self {
        Self {
            valid: true,
            reason: None,
            user_id: Some(user_id),
        }
    }

    pub fn invalid(reason: InvalidReason) -> Self {
        Self {
            valid: false,
            reason: Some(reason),
            user_id: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryOutcome {
    Delivered,
    Failed,
}

/// What an app may see of a userspace: the installed apps and the confirmed
/// connections it takes part in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserspaceView {
    pub user_id: UserId,
    pub app_id: AppId,
    pub installed: Vec<AppId>,
    pub connections: Vec<Connection>,
}

#[derive(Clone, Debug)]
pub struct Runtime {
    broker: Arc<Broker>,
}

impl Runtime {
    pub fn new(broker: Arc<Broker>) -> Self {
        Self { broker }
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    pub fn resolve_token(&self, token: &str) -> Result<(UserId, AppId)> {
        let key = digest(token);
        let doc = self
            .broker
            .store
            .get(Collection::Tokens, &key)?
            .ok_or(Error::InvalidToken)?;
        let rec: TokenRecord = doc.decode(Collection::Tokens, &key)?;
        if self.broker.now() >= rec.expires_at {
            return Err(Error::ExpiredToken);
        }
        Ok((rec.user_id, rec.app_id))
    }

    /// One descriptor per confirmed connection in the caller's userspace with
    /// the caller as producer of `fired`, in connection-id order.
    pub fn query_connections(&self, token: &str, fired: &str) -> Result<Vec<ConnectionDescriptor>> {
        let (user, app) = self.resolve_token(token)?;
        let catalog = self.broker.catalog();
        let producer = catalog.app(&app)?;
        if !producer.definition.fired.contains(fired) {
            return Err(Error::NotAFiredMessage {
                app: app.to_string(),
                message: fired.into(),
            });
        }
        let (rec, _) = self.broker.load_userspace(&user)?;
        let mut selected: Vec<&Connection> = rec
            .userspace
            .connections
            .iter()
            .filter(|c| {
                c.status == ConnectionStatus::Confirmed && c.producer == app && c.message == fired
            })
            .collect();
        selected.sort_by(|a, b| a.connection_id.cmp(&b.connection_id));

        let now = self.broker.now();
        let expires_at = self.broker.expiry(now, self.broker.config.comm_ttl);
        let mut batch = Batch::new();
        let mut out = Vec::with_capacity(selected.len());
        for c in selected {
            let chain = catalog
                .registry
                .resolve_chain(&c.chain)
                .map_err(appnet_core::RegistryError::from)?;
            let target = catalog
                .registry
                .chain_target(&c.message, &c.chain)
                .map_err(appnet_core::RegistryError::from)?;
            let consumer = catalog.app(&c.consumer)?;
            let comm_id = secret();
            let key = digest(&comm_id);
            let comm = CommRecord {
                connection_id: c.connection_id.clone(),
                user_id: user.clone(),
                producer: app.clone(),
                consumer: c.consumer.clone(),
                message: target.clone(),
                issued_at: now,
                expires_at,
            };
            batch.put_doc(Collection::Comms, key.as_str(), &comm, Expect::Absent);
            self.broker.audit(
                &mut batch,
                AuditEntry {
                    kind: AuditKind::Query,
                    comm_ref: Some(key),
                    connection_id: Some(c.connection_id.clone()),
                    user_id: Some(user.clone()),
                    app_id: Some(app.clone()),
                    detail: fired.into(),
                },
            );
            out.push(ConnectionDescriptor {
                comm_id,
                connection_id: c.connection_id.clone(),
                consumer: c.consumer.clone(),
                consumer_endpoint: consumer.definition.endpoint.clone(),
                target_message: target,
                chain: chain.into_iter().cloned().collect(),
            });
        }
        if out.is_empty() {
            self.broker.audit(
                &mut batch,
                AuditEntry {
                    kind: AuditKind::Query,
                    comm_ref: None,
                    connection_id: None,
                    user_id: Some(user.clone()),
                    app_id: Some(app.clone()),
                    detail: fired.into(),
                },
            );
        }
        self.broker.store.commit(batch)?;
        Ok(out)
    }

    fn comm(&self, comm_id: &str) -> Result<Option<(String, CommRecord)>> {
        let key = digest(comm_id);
        match self.broker.store.get(Collection::Comms, &key)? {
            Some(doc) => {
                let rec = doc.decode(Collection::Comms, &key)?;
                Ok(Some((key, rec)))
            }
            None => Ok(None),
        }
    }

    /// Total: every call yields a verdict and an audit record.
    pub fn verify_communication(
        &self,
        comm_id: &str,
        producer: &AppId,
        consumer: &AppId,
        message: &str,
    ) -> Result<Verification> {
        let found = self.comm(comm_id)?;
        let verdict = match &found {
            None => Verification::invalid(InvalidReason::Unknown),
            Some((_, c)) if self.broker.now() >= c.expires_at => {
                Verification::invalid(InvalidReason::Expired)
            }
            Some((_, c))
                if c.producer != *producer || c.consumer != *consumer || c.message != message =>
            {
                Verification::invalid(InvalidReason::TupleMismatch)
            }
            Some((_, c)) => Verification::valid(c.user_id.clone()),
        };
        let mut batch = Batch::new();
        let (comm_ref, connection_id, user_id) = match found {
            Some((key, c)) => (Some(key), Some(c.connection_id), Some(c.user_id)),
            None => (None, None, None),
        };
        self.broker.audit(
            &mut batch,
            AuditEntry {
                kind: if verdict.valid {
                    AuditKind::VerifyOk
                } else {
                    AuditKind::VerifyFail
                },
                comm_ref,
                connection_id,
                user_id,
                app_id: Some(consumer.clone()),
                detail: match verdict.reason {
                    None => format!("{producer} -> {consumer} {message}"),
                    Some(r) => format!("{producer} -> {consumer} {message}: {}", reason_str(r)),
                },
            },
        );
        self.broker.store.commit(batch)?;
        Ok(verdict)
    }

    /// Comm-ids are multi-use within their TTL, so repeated reports each add
    /// a record.
    pub fn report_delivery(
        &self,
        comm_id: &str,
        outcome: DeliveryOutcome,
        detail: &str,
    ) -> Result<()> {
        let (key, c) = self.comm(comm_id)?.ok_or(Error::UnknownComm)?;
        let mut batch = Batch::new();
        self.broker.audit(
            &mut batch,
            AuditEntry {
                kind: AuditKind::DeliveryReported,
                comm_ref: Some(key),
                connection_id: Some(c.connection_id),
                user_id: Some(c.user_id),
                app_id: Some(c.producer),
                detail: match outcome {
                    DeliveryOutcome::Delivered => {
                        format!("delivered {detail}").trim_end().to_string()
                    }
                    DeliveryOutcome::Failed => format!("failed {detail}").trim_end().to_string(),
                },
            },
        );
        self.broker.store.commit(batch)?;
        Ok(())
    }

    pub fn userspace_query(&self, token: &str) -> Result<UserspaceView> {
        let (user, app) = self.resolve_token(token)?;
        let (rec, _) = self.broker.load_userspace(&user)?;
        Ok(UserspaceView {
            user_id: user,
            installed: rec.userspace.installed.iter().cloned().collect(),
            connections: rec
                .userspace
                .connections
                .into_iter()
                .filter(|c| c.status == ConnectionStatus::Confirmed && c.involves(&app))
                .collect(),
            app_id: app,
        })
    }

    pub fn audit(&self) -> Result<Vec<AuditRecord>> {
        self.broker.audit_log()
    }
}

fn reason_str(r: InvalidReason) -> &'static str {
    match r {
        InvalidReason::Unknown => "unknown",
        InvalidReason::Expired => "expired",
        InvalidReason::TupleMismatch => "tuple-mismatch",
    }
}
