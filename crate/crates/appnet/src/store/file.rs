//! Crash-safe file backend.
//!
//! Layout under the store directory:
//!
//! * `log.jsonl`: one JSON line per committed batch, `{"seq": n, "ops": [..]}`.
//!   A batch is committed once its line, newline included, is on disk.
//! * `snapshot.json`: the full state as of some sequence number, replaced via
//!   `snapshot.json.tmp` + rename.
//!
//! Recovery loads the snapshot, replays log lines with a higher sequence
//! number and cuts the log at the first incomplete line. After a crash the
//! state is therefore the state after some prefix of the committed batches.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{Batch, Collection, Op, State, Store, StoreError, Versioned};

const LOG: &str = "log.jsonl";
const SNAPSHOT: &str = "snapshot.json";
const SNAPSHOT_TMP: &str = "snapshot.json.tmp";

#[derive(Clone, Debug)]
pub struct FileStoreOptions {
    /// fsync the log after every commit and the snapshot before renaming it.
    pub fsync: bool,
    /// Take a snapshot and truncate the log after this many commits.
    pub snapshot_every: Option<u64>,
    /// Fault injection: after this many bytes have been written (log and
    /// snapshot together) the store writes a torn prefix, stops and refuses
    /// all further work, as if the process had been killed.
    #[doc(hidden)]
    pub crash_after_bytes: Option<u64>,
}

impl Default for FileStoreOptions {
    fn default() -> Self {
        Self {
            fsync: true,
            snapshot_every: Some(512),
            crash_after_bytes: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LogRecord {
    seq: u64,
    ops: Vec<Op>,
}

struct Writer {
    log: File,
    since_snapshot: u64,
    budget: Option<u64>,
    crashed: bool,
}

impl Writer {
    fn write(&mut self, file: &mut File, bytes: &[u8]) -> Result<(), StoreError> {
        if let Some(budget) = self.budget.as_mut() {
            if (bytes.len() as u64) > *budget {
                let cut = *budget as usize;
                file.write_all(&bytes[..cut])?;
                file.flush()?;
                *budget = 0;
                self.crashed = true;
                return Err(StoreError::Crashed);
            }
            *budget -= bytes.len() as u64;
        }
        file.write_all(bytes)?;
        Ok(())
    }

    /// A crash point between two non-write steps.
    fn checkpoint(&mut self) -> Result<(), StoreError> {
        if self.budget == Some(0) {
            self.crashed = true;
            return Err(StoreError::Crashed);
        }
        Ok(())
    }
}

pub struct FileStore {
    dir: PathBuf,
    options: FileStoreOptions,
    writer: Mutex<Writer>,
    state: RwLock<State>,
}

impl std::fmt::Debug for FileStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileStore")
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

impl FileStore {
    pub fn open(dir: impl AsRef<Path>, options: FileStoreOptions) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        match fs::remove_file(dir.join(SNAPSHOT_TMP)) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }

        let mut state = match fs::read(dir.join(SNAPSHOT)) {
            Ok(bytes) => serde_json::from_slice::<State>(&bytes)
                .map_err(|e| StoreError::Corrupt(format!("snapshot: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(e.into()),
        };

        let log_path = dir.join(LOG);
        let mut bytes = Vec::new();
        match File::open(&log_path) {
            Ok(mut f) => {
                f.read_to_end(&mut bytes)?;
            }
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e.into()),
            Err(_) => {}
        }
        let mut good = 0usize;
        let mut replayed = 0u64;
        while let Some(nl) = bytes[good..].iter().position(|b| *b == b'\n') {
            let line = &bytes[good..good + nl];
            let Ok(record) = serde_json::from_slice::<LogRecord>(line) else {
                break;
            };
            if record.seq > state.seq {
                if record.seq != state.seq + 1 {
                    return Err(StoreError::Corrupt(format!(
                        "log jumps from {} to {}",
                        state.seq, record.seq
                    )));
                }
                state.apply(record.seq, &record.ops);
                replayed += 1;
            }
            good += nl + 1;
        }

        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        if (log.metadata()?.len() as usize) > good {
            log.set_len(good as u64)?;
            log.sync_all()?;
        }

        Ok(Self {
            dir,
            writer: Mutex::new(Writer {
                log,
                since_snapshot: replayed,
                budget: options.crash_after_bytes,
                crashed: false,
            }),
            options,
            state: RwLock::new(state),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn snapshot_state(&self) -> State {
        self.state.read().clone()
    }

    /// Writes a snapshot of the current state and empties the log.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut w = self.writer.lock();
        if w.crashed {
            return Err(StoreError::Crashed);
        }
        self.write_snapshot(&mut w)
    }

    fn write_snapshot(&self, w: &mut Writer) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(&*self.state.read()).expect("state serializes");
        let tmp_path = self.dir.join(SNAPSHOT_TMP);
        let mut tmp = File::create(&tmp_path)?;
        w.write(&mut tmp, &bytes)?;
        if self.options.fsync {
            tmp.sync_all()?;
        }
        drop(tmp);
        w.checkpoint()?;
        fs::rename(&tmp_path, self.dir.join(SNAPSHOT))?;
        if self.options.fsync {
            File::open(&self.dir)?.sync_all()?;
        }
        w.checkpoint()?;
        // Log lines at or below the snapshot's sequence number are skipped on
        // replay, so a crash before this truncation is harmless.
        w.log.set_len(0)?;
        if self.options.fsync {
            w.log.sync_all()?;
        }
        w.since_snapshot = 0;
        Ok(())
    }
}

impl Store for FileStore {
    fn get(&self, collection: Collection, key: &str) -> Result<Option<Versioned>, StoreError> {
        if self.writer.lock().crashed {
            return Err(StoreError::Crashed);
        }
        Ok(self.state.read().get(collection, key).cloned())
    }

    fn list(&self, collection: Collection) -> Result<Vec<(String, Versioned)>, StoreError> {
        if self.writer.lock().crashed {
            return Err(StoreError::Crashed);
        }
        Ok(self.state.read().list(collection))
    }

    fn commit(&self, batch: Batch) -> Result<u64, StoreError> {
        let mut w = self.writer.lock();
        if w.crashed {
            return Err(StoreError::Crashed);
        }
        let seq = {
            let state = self.state.read();
            state.check(&batch)?;
            state.seq + 1
        };
        let record = LogRecord {
            seq,
            ops: batch.ops().to_vec(),
        };
        let mut line = serde_json::to_vec(&record).expect("log record serializes");
        line.push(b'\n');
        let mut log = w.log.try_clone()?;
        w.write(&mut log, &line)?;
        if self.options.fsync {
            log.sync_data()?;
        }
        self.state.write().apply(seq, batch.ops());

        w.since_snapshot += 1;
        if self
            .options
            .snapshot_every
            .is_some_and(|n| w.since_snapshot >= n)
        {
            self.write_snapshot(&mut w)?;
        }
        Ok(seq)
    }
}
