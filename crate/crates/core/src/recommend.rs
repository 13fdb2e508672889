//! Connection recommendations for a userspace.
//!
//! For every ordered pair of distinct installed apps `(producer, consumer)`,
//! every message the producer fires and every message the consumer handles
//! that is reachable through an adapter chain, the shortest such chain is a
//! candidate. Candidates are ranked intent-match first, then direct, then
//! adapter-chain; ties break on chain length and then on the
//! `(producer, message, consumer, chain)` tuple.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::app::ApplicationDefinition;
use crate::connection::{Connection, ConnectionStatus};
use crate::ids::AppId;
use crate::registry::{Chain, MessageRegistry, RegistryError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    IntentMatch,
    Direct,
    AdapterChain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub producer: AppId,
    pub message: String,
    pub consumer: AppId,
    pub chain: Chain,
    /// Handled message of the consumer the chain ends at.
    pub target: String,
    pub reason: Reason,
}

impl Candidate {
    fn sort_key(&self) -> (Reason, usize, &AppId, &String, &AppId, &Chain) {
        (
            self.reason,
            self.chain.len(),
            &self.producer,
            &self.message,
            &self.consumer,
            &self.chain,
        )
    }
}

/// A stored recommended connection together with its rank in the current
/// recommendation list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    #[serde(flatten)]
    pub connection: Connection,
    pub rank: u32,
    pub reason: Reason,
}

/// Ranked candidates for the apps in `installed`.
///
/// A tuple already present in `existing` as confirmed or rejected is
/// suppressed. Recommended entries in `existing` do not suppress; they are
/// what this function recomputes.
pub fn recommend(
    registry: &MessageRegistry,
    installed: &BTreeMap<AppId, ApplicationDefinition>,
    existing: &[Connection],
    max_len: usize,
) -> Result<Vec<Candidate>, RegistryError> {
    let suppressed = |p: &AppId, m: &str, c: &AppId, chain: &[String]| {
        existing.iter().any(|x| {
            matches!(
                x.status,
                ConnectionStatus::Confirmed | ConnectionStatus::Rejected
            ) && x.same_tuple(p, m, c, chain)
        })
    };

    let mut out = Vec::new();
    for producer in installed.values() {
        for consumer in installed.values() {
            if producer.app_id == consumer.app_id {
                continue;
            }
            for message in &producer.fired {
                let targets = registry.compatible_targets(message, &consumer.handled, max_len)?;
                for (target, chain) in targets {
                    if suppressed(&producer.app_id, message, &consumer.app_id, &chain) {
                        continue;
                    }
                    let reason = if consumer.has_intent_on(&target) {
                        Reason::IntentMatch
                    } else if chain.is_empty() {
                        Reason::Direct
                    } else {
                        Reason::AdapterChain
                    };
                    out.push(Candidate {
                        producer: producer.app_id.clone(),
                        message: message.clone(),
                        consumer: consumer.app_id.clone(),
                        chain,
                        target,
                        reason,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(out)
}
