//! Connections and userspaces.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AppId, ConnectionId, UserId};
use crate::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionStatus {
    Recommended,
    Confirmed,
    Rejected,
    Revoked,
}

impl ConnectionStatus {
    /// The full transition table. Anything not listed is illegal.
    pub fn can_become(self, next: ConnectionStatus) -> bool {
        use ConnectionStatus::*;
        matches!(
            (self, next),
            (Recommended, Confirmed) | (Recommended, Rejected) | (Confirmed, Revoked)
        )
    }

    /// Recommended and confirmed connections are live; rejected and revoked
    /// ones are kept as history.
    pub fn is_live(self) -> bool {
        matches!(
            self,
            ConnectionStatus::Recommended | ConnectionStatus::Confirmed
        )
    }
}

impl fmt::Display for ConnectionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnectionStatus::Recommended => "recommended",
            ConnectionStatus::Confirmed => "confirmed",
            ConnectionStatus::Rejected => "rejected",
            ConnectionStatus::Revoked => "revoked",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Recommended,
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: ConnectionStatus,
    pub to: ConnectionStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub connection_id: ConnectionId,
    pub user_id: UserId,
    pub producer: AppId,
    pub message: String,
    pub chain: Vec<String>,
    pub consumer: AppId,
    pub status: ConnectionStatus,
    pub origin: Origin,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
}

impl Connection {
    pub fn transition(
        &mut self,
        next: ConnectionStatus,
        at: Timestamp,
    ) -> Result<(), IllegalTransition> {
        if !self.status.can_become(next) {
            return Err(IllegalTransition {
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        self.updated_at = at;
        Ok(())
    }

    pub fn same_tuple(
        &self,
        producer: &AppId,
        message: &str,
        consumer: &AppId,
        chain: &[String],
    ) -> bool {
        self.producer == *producer
            && self.message == message
            && self.consumer == *consumer
            && self.chain == chain
    }

    pub fn involves(&self, app: &AppId) -> bool {
        self.producer == *app || self.consumer == *app
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Userspace {
    pub user_id: UserId,
    pub installed: BTreeSet<AppId>,
    pub connections: Vec<Connection>,
}

impl Userspace {
    pub fn new(user_id: UserId) -> Self {
        Self {
            user_id,
            installed: BTreeSet::new(),
            connections: Vec::new(),
        }
    }

    pub fn connection(&self, id: &ConnectionId) -> Option<&Connection> {
        self.connections.iter().find(|c| c.connection_id == *id)
    }

    pub fn connection_mut(&mut self, id: &ConnectionId) -> Option<&mut Connection> {
        self.connections.iter_mut().find(|c| c.connection_id == *id)
    }

    /// The live connection for a tuple, if any. At most one exists.
    pub fn live_tuple(
        &self,
        producer: &AppId,
        message: &str,
        consumer: &AppId,
        chain: &[String],
    ) -> Option<&Connection> {
        self.connections
            .iter()
            .find(|c| c.status.is_live() && c.same_tuple(producer, message, consumer, chain))
    }

    /// Checks the structural invariants: live endpoints are installed and
    /// no tuple has two live connections.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut live = BTreeSet::new();
        for c in self.connections.iter().filter(|c| c.status.is_live()) {
            if !self.installed.contains(&c.producer) || !self.installed.contains(&c.consumer) {
                return Err(alloc::format!(
                    "connection {} references an app that is not installed",
                    c.connection_id
                ));
            }
            if !live.insert((&c.producer, &c.message, &c.consumer, &c.chain)) {
                return Err(alloc::format!(
                    "duplicate live tuple at {}",
                    c.connection_id
                ));
            }
            if c.user_id != self.user_id {
                return Err(alloc::format!(
                    "connection {} belongs to another user",
                    c.connection_id
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ConnectionStatus::*;

    #[test]
    fn transition_table_is_exact() {
        let all = [Recommended, Confirmed, Rejected, Revoked];
        let mut legal = Vec::new();
        for a in all {
            for b in all {
                if a.can_become(b) {
                    legal.push((a, b));
                }
            }
        }
        assert_eq!(
            legal,
            alloc::vec![
                (Recommended, Confirmed),
                (Recommended, Rejected),
                (Confirmed, Revoked)
            ]
        );
    }

    #[test]
    fn transition_updates_status_and_time() {
        let t0 = Timestamp::from_timestamp(0, 0).unwrap();
        let t1 = Timestamp::from_timestamp(10, 0).unwrap();
        let mut c = Connection {
            connection_id: "c1".into(),
            user_id: "bob".into(),
            producer: "a".into(),
            message: "m".into(),
            chain: Vec::new(),
            consumer: "b".into(),
            status: Recommended,
            origin: Origin::Recommended,
            created_at: t0,
            updated_at: t0,
        };
        c.transition(Confirmed, t1).unwrap();
        assert_eq!(c.updated_at, t1);
        let err = c.transition(Confirmed, t1).unwrap_err();
        assert_eq!(err.to_string(), "illegal transition confirmed -> confirmed");
        c.transition(Revoked, t1).unwrap();
        assert!(c.transition(Recommended, t1).is_err());
    }
}
