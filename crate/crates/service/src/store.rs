//! File-backed scenario store.
//!
//! Layout: `index.json` lists live ids with their current revision, and
//! `scenarios/<id>/<revision>.json` holds every revision ever written.
//! Readers take a snapshot of the index; writers go through one mutex.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use shadowcost::scenario::ScenarioFile;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("scenario `{0}` not found")]
    NotFound(String),
    #[error("revision {requested} of `{id}` is not current (current is {current})")]
    Conflict { id: String, requested: u64, current: u64 },
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file {path}: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredScenario {
    pub id: String,
    pub revision: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub scenario: ScenarioFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    revision: u64,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexFile {
    scenarios: BTreeMap<String, IndexEntry>,
}

/// Latest revision of every live scenario.
pub type Snapshot = Arc<BTreeMap<String, Arc<StoredScenario>>>;

pub struct Store {
    root: PathBuf,
    current: RwLock<Snapshot>,
    writer: tokio::sync::Mutex<()>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> StoreResult<T> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    serde_json::from_slice(&bytes).map_err(|source| StoreError::Corrupt {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary file and a rename so readers never see a
/// partial file.
fn write_json<T: Serialize>(path: &Path, value: &T) -> StoreResult<()> {
    let bytes = serde_json::to_vec_pretty(value).expect("store types serialize");
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

impl Store {
    /// Opens or creates a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let root = root.into();
        let scenarios = root.join("scenarios");
        std::fs::create_dir_all(&scenarios).map_err(io(&scenarios))?;
        let index_path = root.join("index.json");
        let index: IndexFile = if index_path.exists() {
            read_json(&index_path)?
        } else {
            let empty = IndexFile::default();
            write_json(&index_path, &empty)?;
            empty
        };
        let store = Self {
            root,
            current: RwLock::new(Arc::new(BTreeMap::new())),
            writer: tokio::sync::Mutex::new(()),
        };
        let mut latest = BTreeMap::new();
        for (id, entry) in &index.scenarios {
            let stored: StoredScenario = read_json(&store.revision_path(id, entry.revision))?;
            latest.insert(id.clone(), Arc::new(stored));
        }
        *store.current.write().unwrap() = Arc::new(latest);
        Ok(store)
    }

    fn revision_path(&self, id: &str, revision: u64) -> PathBuf {
        self.root.join("scenarios").join(id).join(format!("{revision}.json"))
    }

    pub fn snapshot(&self) -> Snapshot {
        self.current.read().unwrap().clone()
    }

    pub fn get(&self, id: &str) -> StoreResult<Arc<StoredScenario>> {
        self.snapshot()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Any revision of a live scenario.
    pub fn get_revision(&self, id: &str, revision: u64) -> StoreResult<Arc<StoredScenario>> {
        let latest = self.get(id)?;
        if latest.revision == revision {
            return Ok(latest);
        }
        if revision == 0 || revision > latest.revision {
            return Err(StoreError::Conflict {
                id: id.to_string(),
                requested: revision,
                current: latest.revision,
            });
        }
        read_json(&self.revision_path(id, revision)).map(Arc::new)
    }

    fn persist_index(&self, snapshot: &BTreeMap<String, Arc<StoredScenario>>) -> StoreResult<()> {
        let index = IndexFile {
            scenarios: snapshot
                .iter()
                .map(|(id, s)| {
                    let entry = IndexEntry {
                        revision: s.revision,
                        created_at: s.created_at,
                        updated_at: s.updated_at,
                    };
                    (id.clone(), entry)
                })
                .collect(),
        };
        write_json(&self.root.join("index.json"), &index)
    }

    fn commit(&self, stored: StoredScenario) -> StoreResult<Arc<StoredScenario>> {
        let dir = self.root.join("scenarios").join(&stored.id);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        write_json(&self.revision_path(&stored.id, stored.revision), &stored)?;
        let stored = Arc::new(stored);
        let mut next = (*self.snapshot()).clone();
        next.insert(stored.id.clone(), stored.clone());
        self.persist_index(&next)?;
        *self.current.write().unwrap() = Arc::new(next);
        Ok(stored)
    }

    pub async fn create(&self, scenario: ScenarioFile) -> StoreResult<Arc<StoredScenario>> {
        let _guard = self.writer.lock().await;
        let now = Utc::now();
        self.commit(StoredScenario {
            id: uuid::Uuid::new_v4().simple().to_string(),
            revision: 1,
            created_at: now,
            updated_at: now,
            scenario,
        })
    }

    /// Appends a revision if `expected` is still current.
    pub async fn update(&self, id: &str, expected: u64, scenario: ScenarioFile) -> StoreResult<Arc<StoredScenario>> {
        let _guard = self.writer.lock().await;
        let current = self.get(id)?;
        if current.revision != expected {
            return Err(StoreError::Conflict {
                id: id.to_string(),
                requested: expected,
                current: current.revision,
            });
        }
        self.commit(StoredScenario {
            id: id.to_string(),
            revision: current.revision + 1,
            created_at: current.created_at,
            updated_at: Utc::now(),
            scenario,
        })
    }

    /// Drops the id from the index. Revision files stay on disk.
    pub async fn delete(&self, id: &str, expected: Option<u64>) -> StoreResult<()> {
        let _guard = self.writer.lock().await;
        let current = self.get(id)?;
        if let Some(expected) = expected {
            if current.revision != expected {
                return Err(StoreError::Conflict {
                    id: id.to_string(),
                    requested: expected,
                    current: current.revision,
                });
            }
        }
        let mut next = (*self.snapshot()).clone();
        next.remove(id);
        self.persist_index(&next)?;
        *self.current.write().unwrap() = Arc::new(next);
        Ok(())
    }
}
