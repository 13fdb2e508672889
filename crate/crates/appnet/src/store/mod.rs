//! Document storage behind the market and the runtime.
//!
//! A store holds a fixed set of collections, each an ordered map from key to
//! a versioned JSON document. Writes happen only through [`Batch`]es, which
//! are applied all-or-nothing. Every document carries the sequence number of
//! the commit that last wrote it; operations can demand a particular version
//! (compare-and-set) and the whole batch fails with
//! [`StoreError::Conflict`] if any expectation does not hold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

mod file;
mod memory;

pub use file::{FileStore, FileStoreOptions};
pub use memory::MemoryStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    Apps,
    Messages,
    Adapters,
    Users,
    Userspaces,
    Grants,
    Tokens,
    Comms,
    Audit,
}

impl Collection {
    pub const ALL: [Collection; 9] = [
        Collection::Apps,
        Collection::Messages,
        Collection::Adapters,
        Collection::Users,
        Collection::Userspaces,
        Collection::Grants,
        Collection::Tokens,
        Collection::Comms,
        Collection::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Collection::Apps => "apps",
            Collection::Messages => "messages",
            Collection::Adapters => "adapters",
            Collection::Users => "users",
            Collection::Userspaces => "userspaces",
            Collection::Grants => "grants",
            Collection::Tokens => "tokens",
            Collection::Comms => "comms",
            Collection::Audit => "audit",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Collection {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        Collection::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| StoreError::UnknownCollection(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown collection {0}")]
    UnknownCollection(String),
    #[error("conflict on {collection}/{key}")]
    Conflict { collection: Collection, key: String },
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("document {collection}/{key} does not decode: {source}")]
    Decode {
        collection: Collection,
        key: String,
        source: serde_json::Error,
    },
    #[error("store is unusable after an injected crash")]
    Crashed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned {
    pub version: u64,
    pub value: Value,
}

impl Versioned {
    pub fn decode<T: serde::de::DeserializeOwned>(
        &self,
        collection: Collection,
        key: &str,
    ) -> Result<T, StoreError> {
        serde_json::from_value(self.value.clone()).map_err(|source| StoreError::Decode {
            collection,
            key: key.to_string(),
            source,
        })
    }
}

/// Precondition on the current state of one document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Any,
    Absent,
    Version(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Put {
        collection: Collection,
        key: String,
        value: Value,
        expect: Expect,
    },
    Delete {
        collection: Collection,
        key: String,
        expect: Expect,
    },
}

impl Op {
    fn target(&self) -> (Collection, &str, Expect) {
        match self {
            Op::Put {
                collection,
                key,
                expect,
                ..
            }
            | Op::Delete {
                collection,
                key,
                expect,
            } => (*collection, key, *expect),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    ops: Vec<Op>,
}

impl Batch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(
        &mut self,
        collection: Collection,
        key: impl Into<String>,
        value: Value,
        expect: Expect,
    ) -> &mut Self {
        self.ops.push(Op::Put {
            collection,
            key: key.into(),
            value,
            expect,
        });
        self
    }

    /// Serializes `doc` and adds a put.
    pub fn put_doc<T: Serialize>(
        &mut self,
        collection: Collection,
        key: impl Into<String>,
        doc: &T,
        expect: Expect,
    ) -> &mut Self {
        let value = serde_json::to_value(doc).expect("documents serialize to JSON");
        self.put(collection, key, value, expect)
    }

    pub fn delete(
        &mut self,
        collection: Collection,
        key: impl Into<String>,
        expect: Expect,
    ) -> &mut Self {
        self.ops.push(Op::Delete {
            collection,
            key: key.into(),
            expect,
        });
        self
    }

    pub fn extend(&mut self, other: Batch) -> &mut Self {
        self.ops.extend(other.ops);
        self
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }
}

pub trait Store: Send + Sync {
    fn get(&self, collection: Collection, key: &str) -> Result<Option<Versioned>, StoreError>;

    /// All documents of a collection in ascending key order.
    fn list(&self, collection: Collection) -> Result<Vec<(String, Versioned)>, StoreError>;

    /// Applies a batch atomically and returns the commit sequence number,
    /// which is also the new version of every document it wrote.
    fn commit(&self, batch: Batch) -> Result<u64, StoreError>;

    fn put(&self, collection: Collection, key: &str, value: Value) -> Result<u64, StoreError> {
        let mut b = Batch::new();
        b.put(collection, key, value, Expect::Any);
        self.commit(b)
    }

    fn delete(&self, collection: Collection, key: &str) -> Result<u64, StoreError> {
        let mut b = Batch::new();
        b.delete(collection, key, Expect::Any);
        self.commit(b)
    }
}

/// The visible contents of a store: collection -> key -> document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub seq: u64,
    pub collections: BTreeMap<Collection, BTreeMap<String, Versioned>>,
}

impl State {
    pub fn get(&self, collection: Collection, key: &str) -> Option<&Versioned> {
        self.collections.get(&collection).and_then(|c| c.get(key))
    }

    pub fn list(&self, collection: Collection) -> Vec<(String, Versioned)> {
        self.collections
            .get(&collection)
            .map(|c| c.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default()
    }

    /// Checks every expectation of `batch` against the current state.
    pub(crate) fn check(&self, batch: &Batch) -> Result<(), StoreError> {
        // Expectations are evaluated against the state before the batch, so
        // two ops on one key in one batch see the same "before".
        for op in &batch.ops {
            let (collection, key, expect) = op.target();
            let current = self.get(collection, key).map(|d| d.version);
            let ok = match expect {
                Expect::Any => true,
                Expect::Absent => current.is_none(),
                Expect::Version(v) => current == Some(v),
            };
            if !ok {
                return Err(StoreError::Conflict {
                    collection,
                    key: key.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Applies an already checked batch as commit `seq`.
    pub(crate) fn apply(&mut self, seq: u64, ops: &[Op]) {
        for op in ops {
            match op {
                Op::Put {
                    collection,
                    key,
                    value,
                    ..
                } => {
                    self.collections.entry(*collection).or_default().insert(
                        key.clone(),
                        Versioned {
                            version: seq,
                            value: value.clone(),
                        },
                    );
                }
                Op::Delete {
                    collection, key, ..
                } => {
                    if let Some(c) = self.collections.get_mut(collection) {
                        c.remove(key);
                        if c.is_empty() {
                            self.collections.remove(collection);
                        }
                    }
                }
            }
        }
        self.seq = seq;
    }
}

/// Where a store lives, as given on the command line: `memory` or
/// `file:<path>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoreSpec {
    Memory,
    File(std::path::PathBuf),
}

impl FromStr for StoreSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "memory" {
            return Ok(StoreSpec::Memory);
        }
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(StoreSpec::File(p.into())),
            _ => Err(format!(
                "store must be `memory` or `file:<path>`, got {s:?}"
            )),
        }
    }
}

impl StoreSpec {
    pub fn open(&self) -> Result<std::sync::Arc<dyn Store>, StoreError> {
        Ok(match self {
            StoreSpec::Memory => std::sync::Arc::new(MemoryStore::new()),
            StoreSpec::File(path) => {
                std::sync::Arc::new(FileStore::open(path, FileStoreOptions::default())?)
            }
        })
    }
}
