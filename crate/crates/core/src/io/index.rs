//! Binary descriptor index container.
//!
//! Layout (little endian): 8-byte magic, u32 version, 32-byte config hash,
//! u64 metadata length and the JSON metadata, then per sub-index a u64
//! dimension, u64 row count, the class ordinals and reference ids as u32
//! and the descriptor rows as f64.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::config_hash;
use crate::encode::EncodeConfig;
use crate::error::{Error, Result};
use crate::finspace::FinSpaceConfig;
use crate::lnbnn::{IdentityIndex, ReferenceDescriptor, ReferenceFin, SubIndex};

pub const INDEX_MAGIC: &[u8; 8] = b"FINIDX\0\x01";
pub const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    encode: EncodeConfig,
    finspace: FinSpaceConfig,
    exact_mode: bool,
    classes: Vec<u32>,
    fins: Vec<ReferenceFin>,
    refs: Vec<ReferenceDescriptor>,
}

pub fn write_index(index: &IdentityIndex, out: &mut impl Write) -> Result<()> {
    let meta = Meta {
        encode: index.encode.clone(),
        finspace: index.finspace.clone(),
        exact_mode: index.exact_mode,
        classes: index.classes.clone(),
        fins: index.fins.clone(),
        refs: index.refs.clone(),
    };
    let json = serde_json::to_vec(&meta).expect("index metadata serializes");
    out.write_all(INDEX_MAGIC)?;
    out.write_all(&INDEX_VERSION.to_le_bytes())?;
    out.write_all(&config_hash(&index.encode, &index.finspace))?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for s in &index.subs {
        out.write_all(&(s.dim as u64).to_le_bytes())?;
        out.write_all(&(s.ref_ids.len() as u64).to_le_bytes())?;
        for v in &s.class_ord {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &s.ref_ids {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &s.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: "truncated index file".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.buf.len())
            .ok_or(Error::Parse {
                offset: at,
                message: format!("implausible length {v}"),
            })
    }
}

/// Decodes an index. When `expected_hash` is given, a container built with
/// different encoding settings is rejected.
pub fn read_index(bytes: &[u8], expected_hash: Option<&[u8; 32]>) -> Result<IdentityIndex> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != INDEX_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "not a finid index (bad magic)".into(),
        });
    }
    let version = c.u32()?;
    if version != INDEX_VERSION {
        return Err(Error::Version {
            found: version,
            supported: INDEX_VERSION,
        });
    }
    let hash: [u8; 32] = c.take(32)?.try_into().unwrap();
    let meta_len = c.len()?;
    let meta_at = c.pos;
    let meta: Meta = serde_json::from_slice(c.take(meta_len)?).map_err(|e| Error::Parse {
        offset: meta_at,
        message: format!("index metadata: {e}"),
    })?;
    if config_hash(&meta.encode, &meta.finspace) != hash {
        return Err(Error::Parse {
            offset: 12,
            message: "config hash does not match the stored configuration".into(),
        });
    }
    if let Some(expected) = expected_hash {
        if expected != &hash {
            return Err(Error::ConfigMismatch(
                "index was built with different encoding or fin-space settings".into(),
            ));
        }
    }
    let n_subs = 2 * meta.encode.scales.len();
    let mut subs = Vec::with_capacity(n_subs);
    for _ in 0..n_subs {
        let dim = c.len()?;
        let rows = c.len()?;
        let mut s = SubIndex {
            dim,
            data: Vec::with_capacity(rows * dim),
            data32: Vec::new(),
            class_ord: Vec::with_capacity(rows),
            ref_ids: Vec::with_capacity(rows),
        };
        for _ in 0..rows {
            s.class_ord.push(c.u32()?);
        }
        for _ in 0..rows {
            s.ref_ids.push(c.u32()?);
        }
        let raw = c.take(rows * dim * 8)?;
        s.data.extend(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap())),
        );
        subs.push(s);
    }
    if c.pos != bytes.len() {
        return Err(Error::Parse {
            offset: c.pos,
            message: "trailing bytes after index".into(),
        });
    }
    let mut index = IdentityIndex {
        encode: meta.encode,
        finspace: meta.finspace,
        exact_mode: meta.exact_mode,
        classes: meta.classes,
        fins: meta.fins,
        refs: meta.refs,
        subs,
    };
    index.refresh_screening();
    Ok(index)
}

pub fn store_index(index: &IdentityIndex, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_index(index, &mut buf)?;
    super::atomic_write(path, &buf)
}

pub fn load_index(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<IdentityIndex> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    read_index(&buf, expected_hash)
}
