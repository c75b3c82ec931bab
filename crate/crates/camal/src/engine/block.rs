//! Fixed-size block codec.
//!
//! Layout (little-endian framing): a `u32` record count, then each record as
//! `u32` key length, `u32` value length, key bytes, value bytes. The value
//! length `0xFFFF_FFFF` marks a tombstone and carries no value bytes. The
//! remainder of the block is zero padding. Keys are opaque byte strings
//! compared lexicographically.

use crate::error::{Error, Result};

pub const TOMBSTONE_LEN: u32 = u32::MAX;

/// A key with its value, or a tombstone when the value is `None`.
pub type Record = (Vec<u8>, Option<Vec<u8>>);

/// Bytes a record occupies inside a block.
pub fn record_size(rec: &Record) -> usize {
    8 + rec.0.len() + rec.1.as_ref().map_or(0, |v| v.len())
}

/// Encodes records into one block of exactly `block_bytes`. Fails if they do
/// not fit; the caller sizes chunks so they always do.
pub fn encode_block(records: &[Record], block_bytes: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(block_bytes);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (key, value) in records {
        out.extend_from_slice(&(key.len() as u32).to_le_bytes());
        match value {
            Some(v) => {
                out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                out.extend_from_slice(key);
                out.extend_from_slice(v);
            }
            None => {
                out.extend_from_slice(&TOMBSTONE_LEN.to_le_bytes());
                out.extend_from_slice(key);
            }
        }
        if out.len() > block_bytes {
            return Err(Error::engine(format!(
                "records overflow a {block_bytes}-byte block"
            )));
        }
    }
    out.resize(block_bytes, 0);
    Ok(out)
}

/// Decodes a block. Rejects malformed input; never panics.
pub fn decode_block(block: &[u8]) -> Result<Vec<Record>> {
    let bad = |msg: &'static str| Error::Decode {
        what: "block",
        msg: msg.to_string(),
    };
    let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
        let end = pos.checked_add(len).ok_or_else(|| bad("length overflow"))?;
        if end > block.len() {
            return Err(bad("record extends past block end"));
        }
        let slice = &block[*pos..end];
        *pos = end;
        Ok(slice)
    };
    let mut pos = 0usize;
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    // Records occupy at least 8 bytes; an impossible count is rejected early
    // so hostile headers cannot trigger huge allocations.
    if count as usize > block.len() / 8 {
        return Err(bad("record count impossible for block size"));
    }
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let klen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let vlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let key = take(&mut pos, klen as usize)?.to_vec();
        let value = if vlen == TOMBSTONE_LEN {
            None
        } else {
            Some(take(&mut pos, vlen as usize)?.to_vec())
        };
        records.push((key, value));
    }
    Ok(records)
}
