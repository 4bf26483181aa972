//! Verification result cache and re-verification priorities.

use std::fs;
use std::io;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::Mutex;

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::fingerprint::Checksum;
use crate::lang::{EntityId, EntityKind};
use crate::prover::anchor::Anchor;
use crate::prover::{VerificationError, Verdict};

pub const DEFAULT_CAPACITY: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub entity_id: EntityId,
    pub entity_checksum: Checksum,
    pub dependency_checksum: Checksum,
    /// Locations are anchored so the verdict can be re-displayed after the
    /// entity moves in the buffer.
    pub verdict: Verdict<Anchor>,
    pub verified_at_snapshot: u64,
    pub duration_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Priority {
    Low = 0,
    Medium = 1,
    High = 2,
    Highest = 3,
}

impl Priority {
    pub fn level(self) -> u8 {
        self as u8
    }
}

/// Thread-safe LRU map from entity to its latest verdict.
pub struct ResultCache {
    inner: Mutex<LruCache<EntityId, CacheEntry>>,
}

impl std::fmt::Debug for ResultCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResultCache").field("len", &self.len()).finish()
    }
}

impl Default for ResultCache {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ResultCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("nonzero");
        ResultCache {
            inner: Mutex::new(LruCache::new(cap)),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LruCache<EntityId, CacheEntry>> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.lock().clear();
    }

    /// The cached verdict if the dependency checksum matches. Timeouts are
    /// never hits: the unit is retried on every new snapshot.
    pub fn lookup(&self, id: &EntityId, dependency_checksum: Checksum) -> Option<Verdict<Anchor>> {
        let mut g = self.lock();
        let e = g.get(id)?;
        (e.dependency_checksum == dependency_checksum && e.verdict != Verdict::Timeout)
            .then(|| e.verdict.clone())
    }

    /// Reads an entry without affecting recency.
    pub fn peek(&self, id: &EntityId) -> Option<CacheEntry> {
        self.lock().peek(id).cloned()
    }

    pub fn store(&self, entry: CacheEntry) {
        self.lock().put(entry.entity_id.clone(), entry);
    }

    /// Highest: dependency checksum unchanged (a cached timeout does not
    /// count, since it will be retried). High: no entry. Medium: the entity
    /// itself changed. Low: only a dependency changed.
    pub fn priority_of(&self, id: &EntityId, entity_checksum: Checksum, dependency_checksum: Checksum) -> Priority {
        let g = self.lock();
        match g.peek(id) {
            Some(e) if e.dependency_checksum == dependency_checksum && e.verdict != Verdict::Timeout => {
                Priority::Highest
            }
            None => Priority::High,
            Some(e) if e.entity_checksum != entity_checksum => Priority::Medium,
            Some(_) => Priority::Low,
        }
    }

    /// Entries from least to most recently used.
    pub fn entries(&self) -> Vec<CacheEntry> {
        self.lock().iter().rev().map(|(_, e)| e.clone()).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.entries())
    }

    /// Loads entries, replacing any with the same entity.
    pub fn extend_from_bytes(&self, bytes: &[u8]) -> Result<usize, CacheFileError> {
        let entries = decode(bytes)?;
        let n = entries.len();
        for e in entries {
            self.store(e);
        }
        Ok(n)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(tmp, path)
    }

    /// Loads a cache file. A missing file is an empty cache.
    pub fn load(path: &Path, capacity: usize) -> Result<Self, CacheFileError> {
        let cache = ResultCache::new(capacity);
        match fs::read(path) {
            Ok(bytes) => {
                cache.extend_from_bytes(&bytes)?;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(CacheFileError::Io(e)),
        }
        Ok(cache)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheFileError {
    #[error("cache file I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a cache file (bad magic)")]
    BadMagic,
    #[error("unsupported cache format version {0}")]
    Version(u16),
    #[error("truncated or corrupt cache file")]
    Corrupt,
}

const MAGIC: &[u8; 4] = b"MSPC";
const VERSION: u16 = 1;

const TAG_VERIFIED: u8 = 0;
const TAG_FAILED: u8 = 1;
const TAG_TIMEOUT: u8 = 2;

fn encode(entries: &[CacheEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.entity_id.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.push(e.entity_id.kind.tag());
        out.extend_from_slice(&e.entity_checksum.0.to_le_bytes());
        out.extend_from_slice(&e.dependency_checksum.0.to_le_bytes());
        match &e.verdict {
            Verdict::Verified => out.push(TAG_VERIFIED),
            Verdict::Timeout => out.push(TAG_TIMEOUT),
            Verdict::Failed { errors } => {
                out.push(TAG_FAILED);
                let json = serde_json::to_vec(errors).expect("errors serialize");
                out.extend_from_slice(&(json.len() as u32).to_le_bytes());
                out.extend_from_slice(&json);
            }
        }
        let ms = u32::try_from(e.duration_ms).unwrap_or(u32::MAX);
        out.extend_from_slice(&ms.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheFileError> {
        if self.buf.len() < n {
            return Err(CacheFileError::Corrupt);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, CacheFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CacheFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CacheFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CacheFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode(bytes: &[u8]) -> Result<Vec<CacheEntry>, CacheFileError> {
    let mut r = Reader { buf: bytes };
    if r.take(4).map_err(|_| CacheFileError::BadMagic)? != MAGIC {
        return Err(CacheFileError::BadMagic);
    }
    let v = r.u16()?;
    if v != VERSION {
        return Err(CacheFileError::Version(v));
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| CacheFileError::Corrupt)?
            .to_string();
        let kind = EntityKind::from_tag(r.u8()?).ok_or(CacheFileError::Corrupt)?;
        let ec = Checksum(r.u64()?);
        let dc = Checksum(r.u64()?);
        let verdict = match r.u8()? {
            TAG_VERIFIED => Verdict::Verified,
            TAG_TIMEOUT => Verdict::Timeout,
            TAG_FAILED => {
                let n = r.u32()? as usize;
                let errors: Vec<VerificationError<Anchor>> =
                    serde_json::from_slice(r.take(n)?).map_err(|_| CacheFileError::Corrupt)?;
                Verdict::Failed { errors }
            }
            _ => return Err(CacheFileError::Corrupt),
        };
        let duration_ms = r.u32()? as u64;
        out.push(CacheEntry {
            entity_id: EntityId::new(name, kind),
            entity_checksum: ec,
            dependency_checksum: dc,
            verdict,
            verified_at_snapshot: 0,
            duration_ms,
        });
    }
    if !r.buf.is_empty() {
        return Err(CacheFileError::Corrupt);
    }
    Ok(out)
}
