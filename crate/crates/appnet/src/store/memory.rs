use parking_lot::RwLock;

use super::{Batch, Collection, State, Store, StoreError, Versioned};

/// Volatile store; state is lost when dropped.
#[derive(Debug, Default)]
pub struct MemoryStore {
    state: RwLock<State>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> State {
        self.state.read().clone()
    }
}

impl Store for MemoryStore {
    fn get(&self, collection: Collection, key: &str) -> Result<Option<Versioned>, StoreError> {
        Ok(self.state.read().get(collection, key).cloned())
    }

    fn list(&self, collection: Collection) -> Result<Vec<(String, Versioned)>, StoreError> {
        Ok(self.state.read().list(collection))
    }

    fn commit(&self, batch: Batch) -> Result<u64, StoreError> {
        let mut state = self.state.write();
        state.check(&batch)?;
        let seq = state.seq + 1;
        state.apply(seq, batch.ops());
        Ok(seq)
    }
}
