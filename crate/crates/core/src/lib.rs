//! Core of the AppNet cooperation broker.
//!
//! This crate holds everything that can be decided without IO: the domain
//! types exchanged between applications, users and the intermediary, their
//! validation rules, the adapter algebra (apply, compose, chain search) and
//! the connection recommendation engine. It is `no_std` and only needs an
//! allocator; the services, storage and transports live in the `appnet`
//! crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod adapter;
pub mod app;
pub mod connection;
pub mod credential;
pub mod ids;
pub mod recommend;
pub mod registry;
pub mod schema;
pub mod trace;
mod violation;

pub use adapter::{apply_rules, validate_adapter, AdapterDefinition, MappingRule};
pub use app::{validate_application, ApplicationDefinition, Constraint, Intent};
pub use connection::{Connection, ConnectionStatus, IllegalTransition, Origin, Userspace};
pub use credential::{AccessToken, AuthorizationGrant, CommunicationId};
pub use ids::{AppId, ConnectionId, UserId};
pub use recommend::{recommend, Candidate, Reason, Recommendation};
pub use registry::{
    run_chain, Chain, ChainError, MessageRegistry, RegisterOutcome, RegistryError,
    DEFAULT_MAX_CHAIN_LEN,
};
pub use schema::{
    conforms, validate_message_name, validate_schema, Field, MessageInstance, MessageSchema,
    NamedMessage, Payload, PrimitiveType,
};
pub use trace::{count_participant_actions, ActionKind, ActionTrace, Participant, TraceEntry};
pub use violation::Violation;

/// Timestamps are UTC instants, serialized as RFC 3339 strings.
pub type Timestamp = chrono::DateTime<chrono::Utc>;
