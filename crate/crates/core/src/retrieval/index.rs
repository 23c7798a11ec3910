//! Versioned binary container for embedding indices.
//!
//! Layout (little endian): 4-byte magic, u32 version, u32 dimension,
//! u32 record count, then per record a u32 byte length and a JSON body.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::RetrievalError;

pub const VERSION: u32 = 1;

pub fn encode<T: Serialize>(magic: &[u8; 4], dim: usize, records: &[T]) -> Result<Vec<u8>, RetrievalError> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(dim).map_err(|_| RetrievalError::Index("dimension too large".into()))?.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(records.len()).map_err(|_| RetrievalError::Index("too many records".into()))?.to_le_bytes(),
    );
    for r in records {
        let body = serde_json::to_vec(r).map_err(|e| RetrievalError::Index(e.to_string()))?;
        let len = u32::try_from(body.len()).map_err(|_| RetrievalError::Index("record too large".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&body);
    }
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(magic: &[u8; 4], bytes: &[u8]) -> Result<(usize, Vec<T>), RetrievalError> {
    let bad = |m: &str| RetrievalError::Index(m.to_string());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], RetrievalError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated index"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != magic {
        return Err(bad("wrong magic"));
    }
    let word = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
    let version = word(take(4)?);
    if version != VERSION {
        return Err(RetrievalError::Index(format!("unsupported index version {version}")));
    }
    let dim = word(take(4)?) as usize;
    let count = word(take(4)?) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = word(take(4)?) as usize;
        let body = take(len)?;
        records.push(serde_json::from_slice(body).map_err(|e| RetrievalError::Index(e.to_string()))?);
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after last record"));
    }
    Ok((dim, records))
}

pub fn write_file<T: Serialize>(path: &Path, magic: &[u8; 4], dim: usize, records: &[T]) -> Result<(), RetrievalError> {
    let bytes = encode(magic, dim, records)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file<T: DeserializeOwned>(path: &Path, magic: &[u8; 4]) -> Result<(usize, Vec<T>), RetrievalError> {
    decode(magic, &std::fs::read(path)?)
}
