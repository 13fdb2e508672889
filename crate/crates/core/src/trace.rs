//! Participant action traces and the preparation-effort count.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ids::AppId;
use crate::Timestamp;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Participant {
    User,
    Provider(AppId),
    Intermediary,
}

impl fmt::Display for Participant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Participant::User => f.write_str("user"),
            Participant::Provider(app) => write!(f, "provider:{app}"),
            Participant::Intermediary => f.write_str("intermediary"),
        }
    }
}

impl FromStr for Participant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" => Ok(Participant::User),
            "intermediary" => Ok(Participant::Intermediary),
            _ => match s.strip_prefix("provider:") {
                Some(app) if !app.is_empty() => Ok(Participant::Provider(app.into())),
                _ => Err(alloc::format!("unknown participant {s:?}")),
            },
        }
    }
}

impl Serialize for Participant {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Participant {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    RegisterMessage,
    RegisterAdapter,
    SubmitApp,
    UpdateApp,
    CreateAccount,
    Install,
    Uninstall,
    Confirm,
    Reject,
    ManualConnect,
    ExchangeGrant,
    QueryConnections,
    Deliver,
    VerifyCommunication,
    ReportDelivery,
}

impl ActionKind {
    /// Whether the action is configuration-stage preparation work that the
    /// effort metric counts for `participant`.
    pub fn is_preparation_for(self, participant: &Participant) -> bool {
        use ActionKind::*;
        match participant {
            Participant::User => matches!(self, Install | Confirm | Reject | ManualConnect),
            Participant::Provider(_) => {
                matches!(
                    self,
                    RegisterMessage | RegisterAdapter | SubmitApp | UpdateApp
                )
            }
            Participant::Intermediary => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub participant: Participant,
    pub action: ActionKind,
    pub at: Timestamp,
}

/// Append-only record of who did what during a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionTrace {
    entries: Vec<TraceEntry>,
}

impl ActionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, participant: Participant, action: ActionKind, at: Timestamp) {
        self.entries.push(TraceEntry {
            participant,
            action,
            at,
        });
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_of(&self, action: ActionKind) -> usize {
        self.entries.iter().filter(|e| e.action == action).count()
    }
}

/// Preparation actions per participant.
///
/// Users are charged installs, confirmations, rejections and manual
/// connections; providers are charged message, adapter and app submissions.
/// The `user` key is always present and every provider seen in the trace gets
/// a key. Intermediary actions are not participant effort and are omitted.
pub fn count_participant_actions(trace: &ActionTrace) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    counts.insert(Participant::User.to_string(), 0);
    for e in trace.entries() {
        if e.participant == Participant::Intermediary {
            continue;
        }
        let slot = counts.entry(e.participant.to_string()).or_insert(0);
        if e.action.is_preparation_for(&e.participant) {
            *slot += 1;
        }
    }
    counts
}
