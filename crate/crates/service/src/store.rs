//! Durable records: an append-only `journal.jsonl` of engine events plus a
//! `snapshot.json` of the current state, replaced atomically on each save.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use arbiter_core::engine::JournalEntry;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt record in {path}: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

const SNAPSHOT: &str = "snapshot.json";
const JOURNAL: &str = "journal.jsonl";

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// The last saved snapshot, if any.
    pub fn load<T: DeserializeOwned>(&self) -> Result<Option<T>, StoreError> {
        let path = self.path(SNAPSHOT);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|source| StoreError::Corrupt { path, source })
    }

    /// Appends `new_entries` to the journal, then replaces the snapshot.
    pub fn save<T: Serialize>(&self, snapshot: &T, new_entries: &[JournalEntry]) -> Result<(), StoreError> {
        let journal = self.path(JOURNAL);
        if !new_entries.is_empty() {
            let io_err = |source| StoreError::Io {
                path: journal.clone(),
                source,
            };
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&journal)
                .map_err(io_err)?;
            let mut buf = String::new();
            for entry in new_entries {
                buf.push_str(&serde_json::to_string(entry).expect("journal entries serialize"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes()).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }

        let target = self.path(SNAPSHOT);
        let tmp = self.path("snapshot.json.tmp");
        let io_err = |source| StoreError::Io {
            path: tmp.clone(),
            source,
        };
        let text = serde_json::to_string(snapshot).expect("snapshot serializes");
        let mut file = File::create(&tmp).map_err(io_err)?;
        file.write_all(text.as_bytes()).map_err(io_err)?;
        file.sync_data().map_err(io_err)?;
        fs::rename(&tmp, &target).map_err(|source| StoreError::Io { path: target, source })
    }

    pub fn journal(&self) -> Result<Vec<JournalEntry>, StoreError> {
        let path = self.path(JOURNAL);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                    path: path.clone(),
                    source,
                })?,
            );
        }
        Ok(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use arbiter_core::engine::{Journal, JournalEvent};
    use arbiter_core::Resources;

    #[test]
    fn empty_store_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.load::<u32>().unwrap(), None);
        assert!(store.journal().unwrap().is_empty());
    }

    #[test]
    fn journal_appends_and_snapshot_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("nested")).unwrap();
        let mut journal = Journal::default();
        journal.push(JournalEvent::VerticalRegistered {
            vertical_id: "v".into(),
            total: Resources::new(1.0, 2.0, 3.0, 4.0),
        });
        store.save(&1u32, journal.since(0)).unwrap();
        journal.push(JournalEvent::NsiCreated { nsi_id: "nsi-0".into() });
        store.save(&2u32, journal.since(1)).unwrap();
        assert_eq!(store.load::<u32>().unwrap(), Some(2));
        assert_eq!(store.journal().unwrap(), journal.entries());
        assert!(!dir.path().join("nested/snapshot.json.tmp").exists());
    }
}
