//! Append-only store of closed sessions: one JSON document per session in
//! `sessions/`, plus `index.json` listing them in the order they closed.
//! Every write goes to a temporary file that is then renamed into place, so
//! a crash leaves either the old file or the new one.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use robbins_core::namur::SessionRecord;
use robbins_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Who made the decisions in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    #[default]
    Human,
    Machine,
}

/// The document stored for each closed session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub player: Player,
    #[serde(flatten)]
    pub record: SessionRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub file: String,
}

/// What the startup scan had to repair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    /// Index entries whose file was missing.
    pub dropped: Vec<String>,
    /// Session files the index did not know about.
    pub adopted: Vec<String>,
    /// Files that did not parse as a closed session.
    pub rejected: Vec<String>,
    pub removed_temp: usize,
}

impl ScanReport {
    pub fn is_clean(&self) -> bool {
        *self == ScanReport::default()
    }
}

#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    index: Vec<IndexEntry>,
    by_id: HashMap<String, usize>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    /// Opens the store under `root`, reconciling the index with the files
    /// actually present.
    pub fn open(root: &Path) -> Result<(Self, ScanReport), ServiceError> {
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions)?;
        let index_path = root.join("index.json");
        let listed: Vec<IndexEntry> = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut report = ScanReport::default();
        let mut on_disk = Vec::new();
        for entry in fs::read_dir(&sessions)? {
            let path = entry?.path();
            match path.extension().and_then(|e| e.to_str()) {
                Some("tmp") => {
                    fs::remove_file(&path)?;
                    report.removed_temp += 1;
                }
                Some("json") => on_disk.push(path.file_name().unwrap().to_string_lossy().into_owned()),
                _ => {}
            }
        }
        on_disk.sort();
        let good = |file: &str| -> bool {
            let Ok(bytes) = fs::read(sessions.join(file)) else { return false };
            match serde_json::from_slice::<StoredSession>(&bytes) {
                Ok(s) => format!("{}.json", s.record.id) == file && s.record.outcome.is_some(),
                Err(_) => false,
            }
        };
        let mut index = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for e in listed {
            if on_disk.contains(&e.file) && good(&e.file) && seen.insert(e.file.clone()) {
                index.push(e);
            } else {
                report.dropped.push(e.id);
            }
        }
        for file in on_disk {
            if seen.contains(&file) {
                continue;
            }
            if good(&file) {
                let id = file.trim_end_matches(".json").to_string();
                report.adopted.push(id.clone());
                index.push(IndexEntry { id, file });
            } else {
                report.rejected.push(file);
            }
        }
        let by_id = index.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        let store = SessionStore { root: root.to_path_buf(), index, by_id };
        if !report.dropped.is_empty() || !report.adopted.is_empty() || !index_path.exists() {
            store.write_index()?;
        }
        Ok((store, report))
    }

    fn write_index(&self) -> std::io::Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.index).expect("index serializes");
        write_atomic(&self.root.join("index.json"), &bytes)
    }

    fn path_of(&self, file: &str) -> PathBuf {
        self.root.join("sessions").join(file)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn index(&self) -> &[IndexEntry] {
        &self.index
    }

    /// Stores a closed session. Records are immutable, so a second write
    /// under the same id is refused.
    pub fn put(&mut self, stored: &StoredSession) -> Result<Vec<u8>, ServiceError> {
        let id = &stored.record.id;
        if !valid_id(id) {
            return Err(CoreError::InvalidArgument(format!("unusable session id {id:?}")).into());
        }
        if stored.record.outcome.is_none() {
            return Err(CoreError::Conflict(format!("session {id} is still open")).into());
        }
        if self.contains(id) {
            return Err(CoreError::Conflict(format!("session {id} is already stored")).into());
        }
        let file = format!("{id}.json");
        let bytes = serde_json::to_vec_pretty(stored)?;
        write_atomic(&self.path_of(&file), &bytes)?;
        self.by_id.insert(id.clone(), self.index.len());
        self.index.push(IndexEntry { id: id.clone(), file });
        self.write_index()?;
        Ok(bytes)
    }

    /// The stored document exactly as written.
    pub fn get_bytes(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        let i = *self.by_id.get(id).ok_or_else(|| ServiceError::NotFound(format!("session {id}")))?;
        Ok(fs::read(self.path_of(&self.index[i].file))?)
    }

    pub fn get(&self, id: &str) -> Result<StoredSession, ServiceError> {
        Ok(serde_json::from_slice(&self.get_bytes(id)?)?)
    }

    /// All sessions in the order they were stored.
    pub fn all(&self) -> Result<Vec<StoredSession>, ServiceError> {
        self.index.iter().map(|e| self.get(&e.id)).collect()
    }
}
