//! Offline-first OpenML dataset fetcher.
//!
//! `fetch` resolves a dataset id to a local ARFF file: a file already in the
//! cache directory short-circuits the network entirely, so experiments run
//! air-gapped once the cache is seeded (by an earlier fetch or by copying
//! files in by hand). Downloads go through the REST description endpoint to
//! find the data-file URL, land atomically under `<cache>/<id>.arff`, and
//! leave a `<id>.meta.json` sidecar recording where and when the bytes came
//! from. Per-id lock files make concurrent fetches of the same id safe: one
//! process downloads, the rest wait for the file to appear.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use noisytree_core::dataset::Dataset;

pub const DEFAULT_BASE_URL: &str = "https://www.openml.org/api/v1/json";

/// How long a fetch waits on another process's lock before giving up.
const LOCK_WAIT: Duration = Duration::from_secs(30);
const LOCK_POLL: Duration = Duration::from_millis(50);

#[derive(Debug, thiserror::Error)]
pub enum OpenmlError {
    #[error("GET {url} failed{}: {message}", status.map(|s| format!(" with status {s}")).unwrap_or_default())]
    Transport {
        url: String,
        status: Option<u16>,
        message: String,
    },
    #[error("malformed description: {0}")]
    Protocol(String),
    #[error("gave up waiting for the lock at {0}; remove it if no fetch is running")]
    LockTimeout(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The one network operation the client needs. Tests inject recorders and
/// canned responses; production uses [`HttpTransport`].
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, OpenmlError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(10))
                .timeout(Duration::from_secs(120))
                .build(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, OpenmlError> {
        let response = self.agent.get(url).call().map_err(|e| match e {
            ureq::Error::Status(status, _) => OpenmlError::Transport {
                url: url.to_string(),
                status: Some(status),
                message: format!("HTTP {status}"),
            },
            other => OpenmlError::Transport {
                url: url.to_string(),
                status: None,
                message: other.to_string(),
            },
        })?;
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut response.into_reader(), &mut bytes).map_err(|e| {
            OpenmlError::Transport {
                url: url.to_string(),
                status: None,
                message: format!("body read failed: {e}"),
            }
        })?;
        Ok(bytes)
    }
}

/// What a fetch produced and how.
#[derive(Debug)]
pub struct FetchOutcome {
    pub path: PathBuf,
    pub from_cache: bool,
    /// Set when a forced re-fetch found the upstream bytes disagreeing with
    /// the cache; the cache keeps the new bytes.
    pub warning: Option<String>,
}

/// Sidecar recording provenance of a cached file.
#[derive(Debug, Serialize, Deserialize)]
pub struct CacheMeta {
    pub openml_id: u32,
    pub source_url: String,
    pub version: Option<String>,
    pub fetched_unix: u64,
    pub bytes: u64,
}

pub struct Client {
    base_url: String,
    transport: Box<dyn Transport>,
}

impl Client {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Client {
            base_url: DEFAULT_BASE_URL.to_string(),
            transport,
        }
    }

    pub fn with_base_url(transport: Box<dyn Transport>, base_url: impl Into<String>) -> Self {
        Client {
            base_url: base_url.into(),
            transport,
        }
    }

    pub fn http() -> Self {
        Self::new(Box::new(HttpTransport::new()))
    }

    /// Local path of the dataset's ARFF, downloading on a cache miss.
    pub fn fetch(&self, id: u32, cache_dir: &Path) -> Result<FetchOutcome, OpenmlError> {
        let arff = cache_dir.join(format!("{id}.arff"));
        if arff.exists() {
            return Ok(FetchOutcome {
                path: arff,
                from_cache: true,
                warning: None,
            });
        }
        fs::create_dir_all(cache_dir)?;
        let _lock = match Lock::acquire(cache_dir, id)? {
            LockState::Held(lock) => lock,
            // Another process downloaded while this one waited.
            LockState::CacheAppeared => {
                return Ok(FetchOutcome {
                    path: arff,
                    from_cache: true,
                    warning: None,
                })
            }
        };
        if arff.exists() {
            return Ok(FetchOutcome {
                path: arff,
                from_cache: true,
                warning: None,
            });
        }
        self.download(id, cache_dir, &arff)?;
        Ok(FetchOutcome {
            path: arff,
            from_cache: false,
            warning: None,
        })
    }

    /// Re-downloads even when cached, warning if the bytes changed size
    /// upstream. The cache ends up holding the fresh copy either way.
    pub fn refresh(&self, id: u32, cache_dir: &Path) -> Result<FetchOutcome, OpenmlError> {
        fs::create_dir_all(cache_dir)?;
        let arff = cache_dir.join(format!("{id}.arff"));
        let previous = arff.metadata().ok().map(|m| m.len());
        let _lock = match Lock::acquire(cache_dir, id)? {
            LockState::Held(lock) => lock,
            LockState::CacheAppeared => {
                return Ok(FetchOutcome {
                    path: arff,
                    from_cache: true,
                    warning: None,
                })
            }
        };
        let written = self.download(id, cache_dir, &arff)?;
        let warning = previous.and_then(|old| {
            (old != written).then(|| {
                format!("cache conflict for id {id}: cached {old} bytes, upstream now {written}")
            })
        });
        Ok(FetchOutcome {
            path: arff,
            from_cache: false,
            warning,
        })
    }

    /// Description lookup, data download, atomic rename, meta sidecar.
    /// Returns the byte count written.
    fn download(&self, id: u32, cache_dir: &Path, arff: &Path) -> Result<u64, OpenmlError> {
        let desc_url = format!("{}/data/{id}", self.base_url);
        let body = self.transport.get(&desc_url)?;
        let desc: DescriptionEnvelope = serde_json::from_slice(&body)
            .map_err(|e| OpenmlError::Protocol(format!("description for id {id}: {e}")))?;
        let data_url = desc.data_set_description.url.ok_or_else(|| {
            OpenmlError::Protocol(format!("description for id {id} carries no data url"))
        })?;

        let bytes = self.transport.get(&data_url)?;
        let tmp = cache_dir.join(format!("{id}.arff.tmp"));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, arff)?;

        let meta = CacheMeta {
            openml_id: id,
            source_url: data_url,
            version: desc.data_set_description.version,
            fetched_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            bytes: bytes.len() as u64,
        };
        let meta_path = cache_dir.join(format!("{id}.meta.json"));
        let mut file = fs::File::create(meta_path)?;
        file.write_all(
            serde_json::to_string_pretty(&meta)
                .expect("meta struct serializes")
                .as_bytes(),
        )?;
        Ok(bytes.len() as u64)
    }
}

#[derive(Deserialize)]
struct DescriptionEnvelope {
    data_set_description: Description,
}

#[derive(Deserialize)]
struct Description {
    url: Option<String>,
    version: Option<String>,
}

enum LockState {
    Held(Lock),
    /// The awaited file arrived while blocked on another fetch's lock.
    CacheAppeared,
}

/// Exclusive create of `<id>.lock`; the holder deletes it on drop. Waiters
/// poll until the ARFF appears or the lock vanishes, bounded by [`LOCK_WAIT`].
struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(cache_dir: &Path, id: u32) -> Result<LockState, OpenmlError> {
        let path = cache_dir.join(format!("{id}.lock"));
        let arff = cache_dir.join(format!("{id}.arff"));
        let deadline = Instant::now() + LOCK_WAIT;
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockState::Held(Lock { path })),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if arff.exists() {
                        return Ok(LockState::CacheAppeared);
                    }
                    if Instant::now() >= deadline {
                        return Err(OpenmlError::LockTimeout(path));
                    }
                    std::thread::sleep(LOCK_POLL);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Expected shape of a benchmark dataset, checked after parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub openml_id: u32,
    pub name: String,
    pub expected_n: usize,
    pub expected_m: usize,
    pub expected_c: usize,
}

/// The six datasets of the benchmark study.
pub fn benchmark_descriptors() -> Vec<DatasetDescriptor> {
    let rows: [(u32, &str, usize, usize, usize); 6] = [
        (61, "iris", 150, 4, 3),
        (28, "optdigits", 5620, 64, 10),
        (32, "pendigits", 10992, 16, 10),
        (54, "vehicle", 846, 18, 4),
        (187, "wine", 178, 13, 3),
        (1510, "wdbc", 569, 30, 2),
    ];
    rows.iter()
        .map(|&(id, name, n, m, c)| DatasetDescriptor {
            openml_id: id,
            name: name.to_string(),
            expected_n: n,
            expected_m: m,
            expected_c: c,
        })
        .collect()
}

/// Outcome of checking a parsed dataset against its descriptor; empty
/// mismatch list means the shapes agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorReport {
    pub mismatches: Vec<String>,
}

impl DescriptorReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn verify_descriptor(data: &Dataset, d: &DatasetDescriptor) -> DescriptorReport {
    let mut mismatches = Vec::new();
    let mut check = |what: &str, got: usize, expected: usize| {
        if got != expected {
            mismatches.push(format!(
                "{}: {what} is {got}, descriptor expects {expected}",
                d.name
            ));
        }
    };
    check("samples", data.n(), d.expected_n);
    check("features", data.m(), d.expected_m);
    check("classes", data.c(), d.expected_c);
    DescriptorReport { mismatches }
}
