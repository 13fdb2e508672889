//! Broker services, client SDK, scenario harness and storage for AppNet.
//!
//! [`market::Market`] is the configuration stage (apps, users, installs,
//! recommendations, confirmations) and [`runtime::Runtime`] the execution
//! stage (token resolution, connection queries, verification, audit). Both
//! sit on one [`broker::Broker`] over a [`store::Store`]. [`http`] serves them,
//! [`sdk`] is what an application links against.

pub mod broker;
pub mod cli;
pub mod clock;
pub mod error;
pub mod http;
pub mod market;
pub mod runtime;
pub mod scenario;
pub mod sdk;
pub mod store;

pub use broker::{AuditKind, AuditRecord, Broker, BrokerConfig};
pub use error::{Error, ErrorBody, Result};
pub use market::{ApplicationSubmission, ManualConnection, Market, SubmittedApp};
pub use runtime::{
    ConnectionDescriptor, DeliveryOutcome, InvalidReason, Runtime, UserspaceView, Verification,
};
