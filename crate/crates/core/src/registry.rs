//! Named-message and adapter registry, and the adapter algebra over it.
//!
//! Messages are nodes and adapters are directed edges of the adapter graph.
//! Parallel edges are kept distinct. Chain search enumerates node-simple
//! paths (no message visited twice) up to a length bound and orders them by
//! `(length, adapter-id sequence)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{apply_rules, validate_adapter, AdapterDefinition};
use crate::schema::{conforms, validate_message_name, validate_schema, NamedMessage, Payload};
use crate::violation::Violation;

pub const DEFAULT_MAX_CHAIN_LEN: usize = 3;

/// Ordered adapter ids, applied left to right.
pub type Chain = Vec<String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegisterOutcome {
    Registered,
    AlreadyRegistered,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ChainError {
    #[error("unknown adapter {0}")]
    UnknownAdapter(String),
    #[error("broken chain at step {step}: expected input {expected}, adapter reads {found}")]
    Broken {
        step: usize,
        expected: String,
        found: String,
    },
    #[error("nonconforming input: {}", join(.0))]
    NonconformingInput(Vec<Violation>),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RegistryError {
    #[error("invalid message name: {0}")]
    InvalidName(Violation),
    #[error("invalid schema: {}", join(.0))]
    InvalidSchema(Vec<Violation>),
    #[error("message {0} already registered with a different schema")]
    NameConflict(String),
    #[error("unknown message {0}")]
    UnknownMessage(String),
    #[error("invalid adapter {id}: {}", join(.violations))]
    InvalidAdapter {
        id: String,
        violations: Vec<Violation>,
    },
    #[error("adapter {0} already registered with a different definition")]
    DuplicateAdapter(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

fn join(v: &[Violation]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        s.push_str(&alloc::format!("{x}"));
    }
    s
}

fn valid_adapter_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

#[derive(Clone, Debug, Default)]
pub struct MessageRegistry {
    messages: BTreeMap<String, NamedMessage>,
    adapters: BTreeMap<String, AdapterDefinition>,
    /// from-message -> adapter ids leaving it, ascending
    outgoing: BTreeMap<String, BTreeSet<String>>,
}

impl MessageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn message(&self, name: &str) -> Option<&NamedMessage> {
        self.messages.get(name)
    }

    pub fn adapter(&self, id: &str) -> Option<&AdapterDefinition> {
        self.adapters.get(id)
    }

    pub fn messages(&self) -> impl Iterator<Item = &NamedMessage> {
        self.messages.values()
    }

    pub fn adapters(&self) -> impl Iterator<Item = &AdapterDefinition> {
        self.adapters.values()
    }

    /// Checks a message without registering it.
    pub fn check_message(&self, m: &NamedMessage) -> Result<RegisterOutcome, RegistryError> {
        if let Some(v) = validate_message_name(&m.name) {
            return Err(RegistryError::InvalidName(v));
        }
        let violations = validate_schema(&m.schema);
        if !violations.is_empty() {
            return Err(RegistryError::InvalidSchema(violations));
        }
        match self.messages.get(&m.name) {
            Some(existing) if existing.schema == m.schema => Ok(RegisterOutcome::AlreadyRegistered),
            Some(_) => Err(RegistryError::NameConflict(m.name.clone())),
            None => Ok(RegisterOutcome::Registered),
        }
    }

    /// Binds a name to a schema. The binding is immutable; registering the
    /// same schema again is an idempotent success.
    pub fn register_message(&mut self, m: NamedMessage) -> Result<RegisterOutcome, RegistryError> {
        let outcome = self.check_message(&m)?;
        if outcome == RegisterOutcome::Registered {
            self.messages.insert(m.name.clone(), m);
        }
        Ok(outcome)
    }

    pub fn check_adapter(&self, a: &AdapterDefinition) -> Result<RegisterOutcome, RegistryError> {
        if !valid_adapter_id(&a.adapter_id) {
            return Err(RegistryError::InvalidAdapter {
                id: a.adapter_id.clone(),
                violations: alloc::vec![Violation::AdapterIdPattern {
                    id: a.adapter_id.clone()
                }],
            });
        }
        if let Some(existing) = self.adapters.get(&a.adapter_id) {
            return if existing == a {
                Ok(RegisterOutcome::AlreadyRegistered)
            } else {
                Err(RegistryError::DuplicateAdapter(a.adapter_id.clone()))
            };
        }
        let from = self
            .messages
            .get(&a.from_message)
            .ok_or_else(|| RegistryError::UnknownMessage(a.from_message.clone()))?;
        let to = self
            .messages
            .get(&a.to_message)
            .ok_or_else(|| RegistryError::UnknownMessage(a.to_message.clone()))?;
        let violations = validate_adapter(a, &from.schema, &to.schema);
        if !violations.is_empty() {
            return Err(RegistryError::InvalidAdapter {
                id: a.adapter_id.clone(),
                violations,
            });
        }
        Ok(RegisterOutcome::Registered)
    }

    pub fn register_adapter(
        &mut self,
        a: AdapterDefinition,
    ) -> Result<RegisterOutcome, RegistryError> {
        let outcome = self.check_adapter(&a)?;
        if outcome == RegisterOutcome::Registered {
            self.outgoing
                .entry(a.from_message.clone())
                .or_default()
                .insert(a.adapter_id.clone());
            self.adapters.insert(a.adapter_id.clone(), a);
        }
        Ok(outcome)
    }

    /// Applies one adapter to a payload conforming to its input message.
    pub fn apply_adapter(
        &self,
        payload: &Payload,
        a: &AdapterDefinition,
    ) -> Result<Payload, RegistryError> {
        let from = self
            .messages
            .get(&a.from_message)
            .ok_or_else(|| RegistryError::UnknownMessage(a.from_message.clone()))?;
        let violations = conforms(payload, &from.schema);
        if !violations.is_empty() {
            return Err(ChainError::NonconformingInput(violations).into());
        }
        apply_rules(a, payload).map_err(|v| ChainError::NonconformingInput(alloc::vec![v]).into())
    }

    /// Resolves adapter ids to their definitions.
    pub fn resolve_chain(&self, chain: &[String]) -> Result<Vec<&AdapterDefinition>, ChainError> {
        chain
            .iter()
            .map(|id| {
                self.adapters
                    .get(id)
                    .ok_or_else(|| ChainError::UnknownAdapter(id.clone()))
            })
            .collect()
    }

    /// The message a chain produces when fed `from`, after checking that
    /// each step reads what the previous step wrote.
    pub fn chain_target(&self, from: &str, chain: &[String]) -> Result<String, ChainError> {
        let mut current = String::from(from);
        for (step, a) in self.resolve_chain(chain)?.into_iter().enumerate() {
            if a.from_message != current {
                return Err(ChainError::Broken {
                    step,
                    expected: current,
                    found: a.from_message.clone(),
                });
            }
            current = a.to_message.clone();
        }
        Ok(current)
    }

    /// Left-to-right fold of [`apply_adapter`](Self::apply_adapter). The
    /// empty chain is the identity.
    pub fn apply_chain(
        &self,
        payload: &Payload,
        chain: &[String],
    ) -> Result<Payload, RegistryError> {
        let adapters = self.resolve_chain(chain)?;
        for (step, pair) in adapters.windows(2).enumerate() {
            if pair[0].to_message != pair[1].from_message {
                return Err(ChainError::Broken {
                    step: step + 1,
                    expected: pair[0].to_message.clone(),
                    found: pair[1].from_message.clone(),
                }
                .into());
            }
        }
        let Some(first) = adapters.first() else {
            return Ok(payload.clone());
        };
        let from = self
            .messages
            .get(&first.from_message)
            .ok_or_else(|| RegistryError::UnknownMessage(first.from_message.clone()))?;
        let violations = conforms(payload, &from.schema);
        if !violations.is_empty() {
            return Err(ChainError::NonconformingInput(violations).into());
        }
        let owned: Vec<AdapterDefinition> = adapters.into_iter().cloned().collect();
        Ok(run_chain(payload, &owned)?)
    }

    fn require(&self, name: &str) -> Result<(), RegistryError> {
        if self.messages.contains_key(name) {
            Ok(())
        } else {
            Err(RegistryError::UnknownMessage(name.into()))
        }
    }

    /// Every node-simple chain from `from` of length at most `max_len`,
    /// paired with the message it ends at.
    fn chains_from(&self, from: &str, max_len: usize) -> Vec<(String, Chain)> {
        let mut out = Vec::new();
        let mut visited = alloc::vec![String::from(from)];
        let mut chain = Vec::new();
        self.walk(from, max_len, &mut visited, &mut chain, &mut out);
        out
    }

    fn walk(
        &self,
        at: &str,
        budget: usize,
        visited: &mut Vec<String>,
        chain: &mut Chain,
        out: &mut Vec<(String, Chain)>,
    ) {
        out.push((String::from(at), chain.clone()));
        if budget == 0 {
            return;
        }
        let Some(ids) = self.outgoing.get(at) else {
            return;
        };
        for id in ids {
            let next = &self.adapters[id].to_message;
            if visited.iter().any(|v| v == next) {
                continue;
            }
            visited.push(next.clone());
            chain.push(id.clone());
            self.walk(next, budget - 1, visited, chain, out);
            chain.pop();
            visited.pop();
        }
    }

    /// All acyclic chains of length `<= max_len` transforming `from` into
    /// `to`, sorted by length then adapter ids.
    pub fn find_adapter_chains(
        &self,
        from: &str,
        to: &str,
        max_len: usize,
    ) -> Result<Vec<Chain>, RegistryError> {
        self.require(from)?;
        self.require(to)?;
        let mut chains: Vec<Chain> = self
            .chains_from(from, max_len)
            .into_iter()
            .filter(|(end, _)| end == to)
            .map(|(_, c)| c)
            .collect();
        chains.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(chains)
    }

    /// For each handled message reachable from `from`, the first chain in
    /// [`find_adapter_chains`](Self::find_adapter_chains) order.
    pub fn compatible_targets<'a, I>(
        &self,
        from: &str,
        handled: I,
        max_len: usize,
    ) -> Result<BTreeMap<String, Chain>, RegistryError>
    where
        I: IntoIterator<Item = &'a String>,
    {
        self.require(from)?;
        let handled: BTreeSet<&String> = handled.into_iter().collect();
        for h in &handled {
            self.require(h)?;
        }
        let mut best: BTreeMap<String, Chain> = BTreeMap::new();
        for (end, chain) in self.chains_from(from, max_len) {
            if !handled.contains(&end) {
                continue;
            }
            match best.get(&end) {
                Some(cur) if (cur.len(), cur) <= (chain.len(), &chain) => {}
                _ => {
                    best.insert(end, chain);
                }
            }
        }
        Ok(best)
    }
}

/// Applies adapter bodies in order without a registry, as a producer does
/// with the chain it receives from the runtime.
///
/// Checks that consecutive steps link up and that every copied field is
/// present.
pub fn run_chain(payload: &Payload, chain: &[AdapterDefinition]) -> Result<Payload, ChainError> {
    for (step, pair) in chain.windows(2).enumerate() {
        if pair[0].to_message != pair[1].from_message {
            return Err(ChainError::Broken {
                step: step + 1,
                expected: pair[0].to_message.clone(),
                found: pair[1].from_message.clone(),
            });
        }
    }
    let mut current = payload.clone();
    for a in chain {
        current =
            apply_rules(a, &current).map_err(|v| ChainError::NonconformingInput(alloc::vec![v]))?;
    }
    Ok(current)
}
