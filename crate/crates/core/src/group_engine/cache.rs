//! On-disk cache of a chamber ball. Layout (little endian):
//! magic, format version, presentation hash (64 ascii hex bytes), radius,
//! chamber count, then per chamber its parent id (u32) and last syllable
//! (two bytes).

use super::{ChamberStore, Syllable};
use crate::presentation::Presentation;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"RABMODCS";
const VERSION: u32 = 1;

/// Environment variable naming the cache root directory.
pub const CACHE_ENV: &str = "RABMOD_CACHE";

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache file {0} is malformed")]
    Malformed(PathBuf),
}

pub fn cache_root(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".rabmod-cache"))
}

fn file_name(pres: &Presentation) -> String {
    format!("ball-{}.bin", &pres.hash_hex()[..32])
}

/// Writes to a temporary file in the same directory, then renames.
pub fn save_store(dir: &Path, store: &ChamberStore) -> Result<PathBuf, CacheError> {
    std::fs::create_dir_all(dir)?;
    let pres = store.presentation();
    let path = dir.join(file_name(pres));
    let (parent, syl) = store.raw();
    let mut buf = Vec::with_capacity(96 + parent.len() * 6);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(pres.hash_hex().as_bytes());
    buf.extend_from_slice(&(store.depth() as u32).to_le_bytes());
    buf.extend_from_slice(&(parent.len() as u32).to_le_bytes());
    for (p, s) in parent.iter().zip(syl) {
        buf.extend_from_slice(&p.to_le_bytes());
        buf.push(s.gen);
        buf.push(s.exp);
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&buf)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| CacheError::Io(e.error))?;
    Ok(path)
}

/// Loads a cached ball for this presentation. Returns `Ok(None)` when no
/// cache exists or it belongs to a different presentation.
pub fn load_store(dir: &Path, pres: &Presentation) -> Result<Option<ChamberStore>, CacheError> {
    let path = dir.join(file_name(pres));
    let mut f = match std::fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    let bad = || CacheError::Malformed(path.clone());
    let header = 8 + 4 + 64 + 4 + 4;
    if buf.len() < header || &buf[..8] != MAGIC {
        return Err(bad());
    }
    let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
    if u32_at(8) != VERSION {
        return Ok(None);
    }
    if &buf[12..76] != pres.hash_hex().as_bytes() {
        return Ok(None);
    }
    let depth = u32_at(76) as usize;
    let n = u32_at(80) as usize;
    if buf.len() != header + 6 * n {
        return Err(bad());
    }
    let mut parent = Vec::with_capacity(n);
    let mut syl = Vec::with_capacity(n);
    for i in 0..n {
        let o = header + 6 * i;
        parent.push(u32_at(o));
        syl.push(Syllable { gen: buf[o + 4], exp: buf[o + 5] });
    }
    let store = ChamberStore::from_parts(pres.clone(), parent, syl).ok_or_else(bad)?;
    if store.depth() != depth {
        return Err(bad());
    }
    Ok(Some(store))
}
