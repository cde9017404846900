use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{image_sha256, BackendError, ModelRequest, ModelResponse, Part};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub writes: u64,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    digest: String,
    request: serde_json::Value,
    response: ModelResponse,
}

/// Responses stored as `<dir>/<first two hex chars>/<digest>.json`.
pub struct ResponseCache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
    writes: AtomicU64,
}

static TEMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Human-readable request record; images appear by hash and size only.
fn summarize(req: &ModelRequest) -> serde_json::Value {
    let messages: Vec<_> = req
        .messages
        .iter()
        .map(|m| {
            let parts: Vec<_> = m
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image { png, media_type } => json!({
                        "type": "image",
                        "media_type": media_type,
                        "sha256": image_sha256(png),
                        "bytes": png.len(),
                    }),
                })
                .collect();
            json!({"role": m.role.as_str(), "parts": parts})
        })
        .collect();
    json!({
        "model_id": req.model_id,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "messages": messages,
    })
}

impl ResponseCache {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            writes: AtomicU64::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            writes: self.writes.load(Ordering::Relaxed),
        }
    }

    pub fn get(&self, digest: &str) -> Result<Option<ModelResponse>, BackendError> {
        let path = self.path_for(digest);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                return Ok(None);
            }
            Err(e) => return Err(BackendError::Cache(format!("{}: {e}", path.display()))),
        };
        let entry: Entry = serde_json::from_str(&text)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        if entry.digest != digest {
            return Err(BackendError::Cache(format!(
                "{} holds digest {}",
                path.display(),
                entry.digest
            )));
        }
        self.hits.fetch_add(1, Ordering::Relaxed);
        Ok(Some(entry.response))
    }

    /// Writes atomically: a uniquely named temp file in the target directory,
    /// then a rename. Concurrent writers of one digest store identical bytes.
    pub fn put(
        &self,
        digest: &str,
        req: &ModelRequest,
        resp: &ModelResponse,
    ) -> Result<(), BackendError> {
        let path = self.path_for(digest);
        let parent = path.parent().expect("cache path has a parent");
        let io = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
        fs::create_dir_all(parent).map_err(io)?;
        let entry = Entry {
            digest: digest.to_string(),
            request: summarize(req),
            response: resp.clone(),
        };
        let mut text = serde_json::to_string_pretty(&entry).expect("entry serializes");
        text.push('\n');
        let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = parent.join(format!(".{digest}.{}.{n}.tmp", std::process::id()));
        fs::write(&tmp, text).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        self.writes.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }
}
