//! Binary container for keyed embedding matrices.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes   "AGRIEMB\0"
//! version u32       1
//! dim     u32       columns shared by every entry
//! count   u32       number of entries
//! index   count x { id_len u16, id (UTF-8, id_len bytes), rows u32 }
//! payload entries in index order, row-major IEEE-754 binary32
//! crc     u32       CRC-32 (IEEE) of the payload bytes
//! ```

use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;

use super::{EmbeddingEntry, EmbeddingSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AGRIEMB\0";
pub const VERSION: u32 = 1;

pub fn encode(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let dim = u32::try_from(set.dim)
        .map_err(|_| Error::Input(format!("dim {} does not fit in u32", set.dim)))?;
    let count = u32::try_from(set.entries.len())
        .map_err(|_| Error::Input("too many entries".into()))?;
    let payload_len: usize = set.entries.values().map(|e| e.values.len() * 4).sum();
    let mut out = Vec::with_capacity(20 + set.entries.len() * 32 + payload_len + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (id, entry) in &set.entries {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Input(format!("entity id longer than 65535 bytes: {id:.40}...")))?;
        let rows = u32::try_from(entry.rows())
            .map_err(|_| Error::Input(format!("entry {id} has too many rows")))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&rows.to_le_bytes());
    }
    let payload_start = out.len();
    for entry in set.entries.values() {
        for v in entry.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!("truncated while reading {what} ({n} bytes needed, {} left)", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes a container, validating every structural field and the checksum.
pub fn decode(bytes: &[u8], source_tag: &str) -> Result<EmbeddingSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, not an embedding file"));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported version {version}")));
    }
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::format(12, "dim must be positive"));
    }
    let count = cur.u32("count")? as usize;

    // Every index record takes at least 6 bytes; reject absurd counts before allocating.
    if count > (bytes.len() - cur.pos) / 6 {
        return Err(Error::format(16, format!("count {count} exceeds what the file can hold")));
    }
    let mut index = Vec::with_capacity(count);
    let mut payload_len = 0usize;
    for _ in 0..count {
        let at = cur.pos;
        let id_len = cur.u16("id length")? as usize;
        let id_bytes = cur.take(id_len, "entity id")?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::format(at + 2, "entity id is not UTF-8"))?
            .to_string();
        let rows_at = cur.pos;
        let rows = cur.u32("rows")? as usize;
        if rows == 0 {
            return Err(Error::format(rows_at, format!("entry {id:?} has zero rows")));
        }
        payload_len = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(payload_len))
            .ok_or_else(|| Error::format(rows_at, "payload size overflows"))?;
        index.push((id, rows, at));
    }

    let payload_start = cur.pos;
    let remaining = bytes.len() - payload_start;
    if remaining < payload_len.saturating_add(4) {
        return Err(Error::format(
            payload_start,
            format!("truncated payload: index declares {payload_len} bytes plus checksum, {remaining} present"),
        ));
    }
    if remaining > payload_len + 4 {
        return Err(Error::format(payload_start + payload_len + 4, "trailing bytes after checksum"));
    }
    let payload = cur.take(payload_len, "payload")?;
    let stored = cur.u32("checksum")?;
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::format(
            payload_start + payload_len,
            format!("checksum mismatch: stored {stored:08x}, payload hashes to {actual:08x}"),
        ));
    }

    let mut entries = IndexMap::with_capacity(count);
    let mut offset = 0usize;
    for (id, rows, at) in index {
        let n = rows * dim;
        let values: Vec<f32> = payload[offset..offset + n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                payload_start + offset + bad * 4,
                format!("non-finite value in entry {id:?}"),
            ));
        }
        offset += n * 4;
        let values = Array2::from_shape_vec((rows, dim), values).expect("sized above");
        if entries.contains_key(&id) {
            return Err(Error::format(at, format!("duplicate entity id {id:?}")));
        }
        entries.insert(id, EmbeddingEntry { values });
    }
    Ok(EmbeddingSet {
        source_tag: source_tag.to_string(),
        dim,
        entries,
    })
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let bytes = encode(set)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a container; the source tag is taken from the file stem.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode(&bytes, &tag).map_err(|e| match e {
        Error::Format { offset, reason } => Error::Format {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_entry() -> EmbeddingSet {
        let mut s = EmbeddingSet::new("t", 3);
        s.insert("v", Array2::from_shape_vec((2, 3), vec![1., 2., 3., 4., 5., 6.]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn single_entry_layout() {
        let bytes = encode(&one_entry()).unwrap();
        // header 20, index 2 + 1 + 4, payload 24, crc 4
        assert_eq!(bytes.len(), 20 + 7 + 24 + 4);
        assert_eq!(&bytes[..8], b"AGRIEMB\0");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(&bytes[20..22], &1u16.to_le_bytes());
        assert_eq!(bytes[22], b'v');
        assert_eq!(&bytes[23..27], &2u32.to_le_bytes());
        assert_eq!(&bytes[27..31], &1.0f32.to_le_bytes());
        assert_eq!(decode(&bytes, "t").unwrap(), one_entry());
    }

    #[test]
    fn empty_set_is_valid() {
        let s = EmbeddingSet::new("empty", 4);
        let bytes = encode(&s).unwrap();
        assert_eq!(bytes.len(), 24);
        let back = decode(&bytes, "empty").unwrap();
        assert!(back.entries.is_empty());
        assert_eq!(back.dim, 4);
    }

    #[test]
    fn corruption_is_detected_with_offsets() {
        let good = encode(&one_entry()).unwrap();

        let mut bad = good.clone();
        bad[30] ^= 0x01;
        let err = decode(&bad, "t").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 51, .. }), "{err}");

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, "t"), Err(Error::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad[8] = 2;
        assert!(matches!(decode(&bad, "t"), Err(Error::Format { offset: 8, .. })));

        assert!(matches!(decode(&good[..40], "t"), Err(Error::Format { .. })));
        assert!(matches!(decode(&good[..10], "t"), Err(Error::Format { offset: 8, .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(decode(&long, "t").is_err());
    }

    #[test]
    fn huge_declared_count_does_not_allocate() {
        let mut bytes = encode(&EmbeddingSet::new("x", 2)).unwrap();
        bytes[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&bytes, "x").is_err());
    }

    #[test]
    fn file_round_trip_uses_stem_as_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.emb");
        write_embeddings(&path, &one_entry()).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), one_entry());
        let missing = read_embeddings(&dir.path().join("nope.emb")).unwrap_err();
        assert!(missing.to_string().contains("nope.emb"));
    }

    prop_compose! {
        fn arb_set()(dim in 1usize..6, shapes in prop::collection::vec(("[a-z0-9#-]{1,12}", 1usize..5), 0..6), seed in any::<u32>()) -> EmbeddingSet {
            let mut s = EmbeddingSet::new("p", dim);
            let mut x = seed as f32;
            for (id, rows) in shapes {
                let vals: Vec<f32> = (0..rows * dim).map(|_| { x = (x * 1.618 + 0.37) % 97.0; x - 48.0 }).collect();
                let _ = s.insert(&id, Array2::from_shape_vec((rows, dim), vals).unwrap());
            }
            s
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(s in arb_set()) {
            let bytes = encode(&s).unwrap();
            let back = decode(&bytes, "p").unwrap();
            prop_assert_eq!(encode(&back).unwrap(), bytes);
            prop_assert_eq!(back, s);
        }
    }
}
