//! Credentials of the delegation protocol.
//!
//! A grant is issued to an app when a user installs it and is exchanged once
//! for an access token bound to that (user, app) pair. Communication ids are
//! minted per connection query and bind deliveries to one connection.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::ids::{AppId, ConnectionId, UserId};
use crate::Timestamp;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizationGrant {
    pub code: String,
    pub user_id: UserId,
    pub app_id: AppId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub consumed: bool,
}

impl AuthorizationGrant {
    pub fn is_expired(&self, now: Timestamp) -> bool {
        now >= self.expires_at
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub token: String,
    pub user_id: UserId,
    pub app_id: AppId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl AccessToken {
    pub fn is_expired(&self, now: Timestamp) -> bool {
        now >= self.expires_at
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunicationId {
    pub comm_id: String,
    pub connection_id: ConnectionId,
    pub user_id: UserId,
    pub producer: AppId,
    pub consumer: AppId,
    /// Message the consumer receives, after the chain has been applied.
    pub message: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl CommunicationId {
    pub fn is_expired(&self, now: Timestamp) -> bool {
        now >= self.expires_at
    }

    pub fn matches(&self, producer: &str, consumer: &str, message: &str) -> bool {
        self.producer == producer && self.consumer == consumer && self.message == message
    }
}
