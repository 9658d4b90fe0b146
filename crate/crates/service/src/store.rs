//! Append-only session persistence.
//!
//! Each session lives in `<data_dir>/<session id>/` as the uploaded
//! `dataset.csv`, a `session.json` header holding the session config, and
//! `log.jsonl` with one audit entry per line. Loading replays the log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use dragrank_core::session::AuditEntry;
use dragrank_core::{ingest_str, Session, SessionConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("session {id}: {message}")]
    Corrupt { id: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    id: String,
    config: SessionConfig,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn create(&self, session: &Session, csv: &str) -> Result<(), StoreError> {
        let dir = self.dir(session.id());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("dataset.csv");
        fs::write(&path, csv).map_err(io_err(&path))?;
        let header = Header {
            id: session.id().to_string(),
            config: *session.config(),
        };
        let path = dir.join("session.json");
        fs::write(&path, serde_json::to_string_pretty(&header).expect("header serializes")).map_err(io_err(&path))?;
        let path = dir.join("log.jsonl");
        fs::write(&path, "").map_err(io_err(&path))?;
        Ok(())
    }

    pub fn append(&self, id: &str, entry: &AuditEntry) -> Result<(), StoreError> {
        let path = self.dir(id).join("log.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        let mut line = serde_json::to_string(entry).expect("audit entry serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err(&path))
    }

    pub fn load(&self, id: &str) -> Result<Session, StoreError> {
        let dir = self.dir(id);
        let corrupt = |message: String| StoreError::Corrupt {
            id: id.to_string(),
            message,
        };
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(io_err(&path))
        };
        let header: Header = serde_json::from_str(&read("session.json")?).map_err(|e| corrupt(e.to_string()))?;
        let dataset = ingest_str(&read("dataset.csv")?).map_err(|e| corrupt(e.to_string()))?;
        let log = read("log.jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<AuditEntry>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| corrupt(e.to_string()))?;
        Session::replay(header.id, dataset, header.config, &log).map_err(|e| corrupt(e.to_string()))
    }

    /// Loads every stored session; unreadable ones are returned as errors.
    pub fn load_all(&self) -> Result<Vec<Result<Session, StoreError>>, StoreError> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)
            .map_err(io_err(&self.root))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("session.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids.iter().map(|id| self.load(id)).collect())
    }
}
