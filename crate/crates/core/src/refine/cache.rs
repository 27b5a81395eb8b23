use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::LlmClient;
use super::prompt::{build_prompt, parse_sections};
use super::{RefineError, RefineResult};

/// Hex SHA-256 of the rendered prompt and model identifier.
pub fn cache_key(prompt: &str, model: &str) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(model.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt_hash: String,
    pub model: String,
    pub raw: String,
    pub positive: Option<String>,
    pub negative: Option<String>,
    pub timestamp: u64,
    pub checksum: String,
}

impl CacheEntry {
    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            self.prompt_hash.as_str(),
            self.model.as_str(),
            self.raw.as_str(),
            self.positive.as_deref().unwrap_or(""),
            self.negative.as_deref().unwrap_or(""),
        ] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// One JSON file per (prompt, model) key. Lookups for the same key are
/// serialized so concurrent workers never fetch a response twice.
pub struct ResponseCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, RefineError> {
        std::fs::create_dir_all(dir).map_err(|e| RefineError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), locks: Mutex::new(HashMap::new()) })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(key.to_string()).or_default().clone()
    }

    fn read(&self, key: &str) -> Result<Option<CacheEntry>, RefineError> {
        let path = self.path(key);
        let Ok(text) = std::fs::read_to_string(&path) else {
            return Ok(None);
        };
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(e) if e.checksum == e.digest() && e.prompt_hash == key => Ok(Some(e)),
            _ => Err(RefineError::CacheCorrupt(path.display().to_string())),
        }
    }

    fn write(&self, key: &str, entry: &CacheEntry) -> Result<(), RefineError> {
        let path = self.path(key);
        let tmp = path.with_extension("json.tmp");
        let io = |e: std::io::Error| RefineError::Io(format!("{}: {e}", path.display()));
        std::fs::write(&tmp, serde_json::to_string_pretty(entry).expect("entry serializes")).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }
}

/// Refines one record, answering from the cache when possible. A corrupt
/// entry is logged and refetched.
pub fn cached_refine(
    cache: &ResponseCache,
    client: &LlmClient,
    id: &str,
    human_text: &str,
) -> Result<RefineResult, RefineError> {
    let prompt = build_prompt(human_text)?;
    let model = client.config().model.clone();
    let key = cache_key(&prompt, &model);
    let guard = cache.lock(&key);
    let _held = guard.lock().unwrap();

    let (entry, from_cache) = match cache.read(&key) {
        Ok(Some(e)) => (e, true),
        other => {
            if let Err(e) = other {
                log::warn!("{e}; refetching");
            }
            let resp = client.call(&prompt)?;
            let parsed = parse_sections(&resp.content).ok();
            let mut e = CacheEntry {
                prompt_hash: key.clone(),
                model: model.clone(),
                raw: resp.content,
                positive: parsed.as_ref().map(|s| s.positive.clone()),
                negative: parsed.map(|s| s.negative),
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                checksum: String::new(),
            };
            e.checksum = e.digest();
            cache.write(&key, &e)?;
            (e, false)
        }
    };
    match (entry.positive, entry.negative) {
        (Some(positive), Some(negative)) => Ok(RefineResult {
            id: id.to_string(),
            raw: entry.raw,
            positive,
            negative,
            model,
            retrieved_from_cache: from_cache,
        }),
        _ => Err(RefineError::FormatMismatch { raw: entry.raw }),
    }
}

/// Refines many records with at most `max_in_flight` concurrent requests;
/// results come back in input order.
pub fn refine_batch(
    cache: &ResponseCache,
    client: &LlmClient,
    items: &[(String, String)],
) -> Vec<Result<RefineResult, RefineError>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RefineResult, RefineError>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..client.config().max_in_flight.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, text)) = items.get(i) else { break };
                *slots[i].lock().unwrap() = Some(cached_refine(cache, client, id, text));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot filled")).collect()
}
