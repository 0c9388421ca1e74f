//! Per-node storage backends. Paths are relative, `/`-separated, and follow
//! the node layout:
//!
//! ```text
//! blobs/<digest[0:2]>/<digest>
//! sidecars/<tenant>/<namespace>/<hash64(uri) hex>/<version>.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

pub trait Disk: Send + Sync {
    fn write(&self, rel: &str, data: &[u8]) -> io::Result<()>;
    /// Stream `src` into `rel`, returning the byte count.
    fn write_from(&self, rel: &str, src: &mut dyn Read) -> io::Result<u64>;
    fn read(&self, rel: &str) -> io::Result<Vec<u8>>;
    fn open(&self, rel: &str) -> io::Result<Box<dyn Read + Send>>;
    fn exists(&self, rel: &str) -> bool;
    fn remove(&self, rel: &str) -> io::Result<()>;
    /// Every file below `prefix`, sorted.
    fn list(&self, prefix: &str) -> io::Result<Vec<String>>;
    fn bytes_used(&self) -> u64;
    /// Destroy all content (permanent node loss).
    fn wipe(&self) -> io::Result<()>;
}

pub fn blob_path(digest: &str) -> String {
    format!("blobs/{}/{}", &digest[..2], digest)
}

pub fn sidecar_dir(tenant: &str, namespace: &str, uri_hash: u64) -> String {
    format!("sidecars/{tenant}/{namespace}/{uri_hash:016x}")
}

pub fn sidecar_path(tenant: &str, namespace: &str, uri_hash: u64, version: u64) -> String {
    format!("{}/{version}.json", sidecar_dir(tenant, namespace, uri_hash))
}

fn not_found(rel: &str) -> io::Error {
    io::Error::new(io::ErrorKind::NotFound, rel.to_string())
}

/// In-memory disk used by the simulator and tests.
#[derive(Default)]
pub struct MemDisk {
    files: Mutex<BTreeMap<String, Arc<Vec<u8>>>>,
}

impl MemDisk {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Disk for MemDisk {
    fn write(&self, rel: &str, data: &[u8]) -> io::Result<()> {
        self.files.lock().insert(rel.to_string(), Arc::new(data.to_vec()));
        Ok(())
    }

    fn write_from(&self, rel: &str, src: &mut dyn Read) -> io::Result<u64> {
        let mut buf = Vec::new();
        src.read_to_end(&mut buf)?;
        let n = buf.len() as u64;
        self.files.lock().insert(rel.to_string(), Arc::new(buf));
        Ok(n)
    }

    fn read(&self, rel: &str) -> io::Result<Vec<u8>> {
        self.files.lock().get(rel).map(|b| b.as_ref().clone()).ok_or_else(|| not_found(rel))
    }

    fn open(&self, rel: &str) -> io::Result<Box<dyn Read + Send>> {
        let data = self.files.lock().get(rel).cloned().ok_or_else(|| not_found(rel))?;
        Ok(Box::new(io::Cursor::new(ArcBytes(data))))
    }

    fn exists(&self, rel: &str) -> bool {
        self.files.lock().contains_key(rel)
    }

    fn remove(&self, rel: &str) -> io::Result<()> {
        self.files.lock().remove(rel);
        Ok(())
    }

    fn list(&self, prefix: &str) -> io::Result<Vec<String>> {
        let files = self.files.lock();
        Ok(files.range(prefix.to_string()..).take_while(|(k, _)| k.starts_with(prefix)).map(|(k, _)| k.clone()).collect())
    }

    fn bytes_used(&self) -> u64 {
        self.files.lock().values().map(|v| v.len() as u64).sum()
    }

    fn wipe(&self) -> io::Result<()> {
        self.files.lock().clear();
        Ok(())
    }
}

struct ArcBytes(Arc<Vec<u8>>);

impl AsRef<[u8]> for ArcBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Directory-backed disk. Writes go to a temporary file that is synced and
/// renamed into place, so a file is either complete or absent.
pub struct FsDisk {
    root: PathBuf,
    used: AtomicU64,
    tmp_counter: AtomicU64,
}

impl FsDisk {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let disk = Self { root, used: AtomicU64::new(0), tmp_counter: AtomicU64::new(0) };
        let tmp = disk.root.join("tmp");
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        let mut used = 0;
        for rel in disk.list("")? {
            used += fs::metadata(disk.root.join(&rel)).map(|m| m.len()).unwrap_or(0);
        }
        disk.used.store(used, Ordering::Relaxed);
        Ok(disk)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn full(&self, rel: &str) -> io::Result<PathBuf> {
        if rel.split('/').any(|s| s == ".." || s.is_empty()) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("bad relative path {rel:?}")));
        }
        Ok(self.root.join(rel))
    }

    fn tmp_file(&self) -> io::Result<(PathBuf, fs::File)> {
        let dir = self.root.join("tmp");
        fs::create_dir_all(&dir)?;
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!("{}-{n}", std::process::id()));
        let f = fs::File::create(&path)?;
        Ok((path, f))
    }

    fn commit(&self, tmp: PathBuf, file: fs::File, rel: &str, len: u64) -> io::Result<()> {
        file.sync_all()?;
        drop(file);
        let dest = self.full(rel)?;
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        let old = fs::metadata(&dest).map(|m| m.len()).unwrap_or(0);
        fs::rename(&tmp, &dest)?;
        self.used.fetch_add(len, Ordering::Relaxed);
        self.used.fetch_sub(old.min(self.used.load(Ordering::Relaxed)), Ordering::Relaxed);
        Ok(())
    }

    fn walk(&self, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
        let entries = match fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e),
        };
        for entry in entries {
            let entry = entry?;
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                self.walk(&path, out)?;
            } else if let Ok(rel) = path.strip_prefix(&self.root) {
                let rel = rel.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "/");
                if !rel.starts_with("tmp/") {
                    out.push(rel);
                }
            }
        }
        Ok(())
    }
}

impl Disk for FsDisk {
    fn write(&self, rel: &str, data: &[u8]) -> io::Result<()> {
        let (tmp, mut f) = self.tmp_file()?;
        f.write_all(data)?;
        self.commit(tmp, f, rel, data.len() as u64)
    }

    fn write_from(&self, rel: &str, src: &mut dyn Read) -> io::Result<u64> {
        let (tmp, mut f) = self.tmp_file()?;
        let n = io::copy(src, &mut f)?;
        self.commit(tmp, f, rel, n)?;
        Ok(n)
    }

    fn read(&self, rel: &str) -> io::Result<Vec<u8>> {
        fs::read(self.full(rel)?)
    }

    fn open(&self, rel: &str) -> io::Result<Box<dyn Read + Send>> {
        Ok(Box::new(io::BufReader::with_capacity(1 << 20, fs::File::open(self.full(rel)?)?)))
    }

    fn exists(&self, rel: &str) -> bool {
        self.full(rel).map(|p| p.is_file()).unwrap_or(false)
    }

    fn remove(&self, rel: &str) -> io::Result<()> {
        let p = self.full(rel)?;
        let len = fs::metadata(&p).map(|m| m.len()).unwrap_or(0);
        match fs::remove_file(&p) {
            Ok(()) => {
                self.used.fetch_sub(len.min(self.used.load(Ordering::Relaxed)), Ordering::Relaxed);
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn list(&self, prefix: &str) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        // descend from the deepest directory fully named by the prefix
        let dir_part = match prefix.rfind('/') {
            Some(i) => &prefix[..i],
            None => "",
        };
        let start = if dir_part.is_empty() { self.root.clone() } else { self.full(dir_part)? };
        self.walk(&start, &mut out)?;
        out.retain(|p| p.starts_with(prefix));
        out.sort();
        Ok(out)
    }

    fn bytes_used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    fn wipe(&self) -> io::Result<()> {
        for entry in fs::read_dir(&self.root)? {
            let p = entry?.path();
            if p.is_dir() {
                fs::remove_dir_all(p)?;
            } else {
                fs::remove_file(p)?;
            }
        }
        self.used.store(0, Ordering::Relaxed);
        Ok(())
    }
}
