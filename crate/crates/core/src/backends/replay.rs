//! Content-addressed request/response store for offline runs.
//!
//! A store is a directory holding one `{digest}.json` file per request
//! (`{"route","request","response"}`) plus an index mapping digests to
//! routes and routes to the backend that originally served them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::request_digest;
use super::{BackendError, Route, Transport};

pub const REPLAY_INDEX_FILE: &str = "index.json";
const REPLAY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    route: Route,
    request: Value,
    response: Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Index {
    format_version: u32,
    #[serde(default)]
    backends: BTreeMap<Route, String>,
    #[serde(default)]
    entries: BTreeMap<String, Route>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::Io(format!("{}: {e}", path.display()))
}

fn canonical_bytes(route: Route, body: &[u8]) -> Vec<u8> {
    let mut out = format!("POST {}\n", route.path()).into_bytes();
    out.extend_from_slice(body);
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BackendError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Directory-backed replay store. Reads go straight to the entry files;
/// writes are serialized and atomic (write then rename).
pub struct ReplayStore {
    dir: PathBuf,
    index: Mutex<Index>,
}

impl ReplayStore {
    /// Opens the store at `dir`, creating an empty one if the directory or
    /// its index does not exist yet.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(REPLAY_INDEX_FILE);
        let index = if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let index: Index = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            if index.format_version != REPLAY_FORMAT_VERSION {
                return Err(io_err(&path, format!("unsupported format_version {}", index.format_version)));
            }
            index
        } else {
            Index { format_version: REPLAY_FORMAT_VERSION, ..Index::default() }
        };
        Ok(Self { dir, index: Mutex::new(index) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Digests in sorted order.
    pub fn digests(&self) -> Vec<String> {
        self.index.lock().unwrap().entries.keys().cloned().collect()
    }

    /// Backend recorded for `route`, if any request on it was recorded.
    pub fn backend_for(&self, route: Route) -> Option<String> {
        self.index.lock().unwrap().backends.get(&route).cloned()
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    /// Response body stored for a digest, re-serialized compactly.
    pub fn get(&self, digest: &str) -> Result<Option<Vec<u8>>, BackendError> {
        if !is_digest(digest) {
            return Ok(None);
        }
        let path = self.entry_path(digest);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let entry: Entry = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        Ok(Some(serde_json::to_vec(&entry.response).expect("json values serialize")))
    }

    /// Stores one exchange and returns its digest. Request and response
    /// must both be JSON.
    pub fn insert(&self, route: Route, body: &[u8], response: &[u8], backend: &str) -> Result<String, BackendError> {
        let request: Value = serde_json::from_slice(body).map_err(|e| BackendError::MalformedRequest(e.to_string()))?;
        let response: Value =
            serde_json::from_slice(response).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let digest = request_digest(&canonical_bytes(route, body));
        let entry = Entry { route, request, response };
        let mut index = self.index.lock().unwrap();
        let mut bytes = serde_json::to_vec_pretty(&entry).expect("json values serialize");
        bytes.push(b'\n');
        write_atomic(&self.entry_path(&digest), &bytes)?;
        index.entries.insert(digest.clone(), route);
        index.backends.entry(route).or_insert_with(|| backend.to_string());
        let mut bytes = serde_json::to_vec_pretty(&*index).expect("index serializes");
        bytes.push(b'\n');
        write_atomic(&self.dir.join(REPLAY_INDEX_FILE), &bytes)?;
        Ok(digest)
    }
}

/// Serves requests from a [`ReplayStore`] only; an unknown request is a
/// [`BackendError::ReplayMiss`].
pub struct ReplayTransport {
    store: Arc<ReplayStore>,
}

impl ReplayTransport {
    pub fn new(store: Arc<ReplayStore>) -> Self {
        Self { store }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        Ok(Self::new(Arc::new(ReplayStore::open(dir)?)))
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }
}

impl Transport for ReplayTransport {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let digest = request_digest(&canonical_bytes(route, body));
        self.store.get(&digest)?.ok_or(BackendError::ReplayMiss { digest })
    }

    /// The recorded backend, so replayed manifests match recorded ones.
    fn backend_id(&self, route: Route) -> String {
        self.store.backend_for(route).unwrap_or_else(|| "replay".into())
    }
}

/// Forwards to an inner transport and records every successful exchange.
/// Several recorders may share one store.
pub struct RecordingTransport<T> {
    inner: T,
    store: Arc<ReplayStore>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, store: Arc<ReplayStore>) -> Self {
        Self { inner, store }
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let response = self.inner.post(route, body)?;
        self.store.insert(route, body, &response, &self.inner.backend_id(route))?;
        Ok(response)
    }

    fn backend_id(&self, route: Route) -> String {
        self.inner.backend_id(route)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{caption_sample, CountingTransport};

    struct Echo;
    impl Transport for Echo {
        fn post(&self, _: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
            let v: Value = serde_json::from_slice(body).unwrap();
            Ok(serde_json::to_vec(&serde_json::json!({ "caption": format!("seen {}", v["image_ref"].as_str().unwrap()) }))
                .unwrap())
        }
        fn backend_id(&self, _: Route) -> String {
            "echo".into()
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingTransport::new(Echo, Arc::new(ReplayStore::open(dir.path()).unwrap()));
        assert_eq!(caption_sample(&rec, "a/0.jpg").unwrap(), "seen a/0.jpg");
        caption_sample(&rec, "a/0.jpg").unwrap();
        assert_eq!(rec.store().len(), 1);
        drop(rec);

        let replay = CountingTransport::new(ReplayTransport::open(dir.path()).unwrap());
        assert_eq!(caption_sample(&replay, "a/0.jpg").unwrap(), "seen a/0.jpg");
        assert_eq!(replay.backend_id(Route::Caption), "echo");
        assert_eq!(replay.backend_id(Route::Generate), "replay");
        let miss = caption_sample(&replay, "b/0.jpg");
        assert!(matches!(miss, Err(BackendError::ReplayMiss { .. })));
    }

    #[test]
    fn replay_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        let d = store.insert(Route::Caption, br#"{"image_ref":"x"}"#, br#"{"caption":"a b"}"#, "t").unwrap();
        let t = ReplayTransport::new(Arc::new(store));
        let a = t.post(Route::Caption, br#"{"image_ref":"x"}"#).unwrap();
        let b = t.post(Route::Caption, br#"{"image_ref":"x"}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.store().get(&d).unwrap().unwrap(), a);
        assert!(t.store().get("../index").unwrap().is_none());
    }

    #[test]
    fn non_json_is_not_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        assert!(store.insert(Route::Caption, b"nope", b"{}", "t").is_err());
        assert!(store.insert(Route::Caption, b"{}", b"nope", "t").is_err());
        assert!(store.is_empty());
    }
}
