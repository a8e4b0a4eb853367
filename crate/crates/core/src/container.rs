//! Binary container shared by model files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic |
//! | 4     | format version (u32) |
//! | 4     | header length `n` (u32) |
//! | n     | UTF-8 JSON header |
//! | 8     | payload length `m` (u64) |
//! | m     | payload (IEEE-754 arrays) |
//! | 32    | SHA-256 of every preceding byte |

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 32;

pub fn encode(magic: &[u8; 8], version: u32, header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + header.len() + payload.len() + DIGEST_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Checks magic, version and digest; returns `(header, payload)`.
pub fn decode<'a>(bytes: &'a [u8], magic: &[u8; 8], version: u32) -> Result<(&'a [u8], &'a [u8])> {
    let truncated = || Error::Format("file is truncated".into());
    if bytes.len() < 24 + DIGEST_LEN {
        return Err(truncated());
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic bytes {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(Error::Format(format!(
            "unsupported format version {found}, expected {version}"
        )));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16usize.checked_add(hlen).ok_or_else(truncated)?;
    let plen_end = header_end.checked_add(8).ok_or_else(truncated)?;
    if bytes.len() < plen_end {
        return Err(truncated());
    }
    let plen = u64::from_le_bytes(bytes[header_end..plen_end].try_into().expect("8 bytes"));
    let payload_end = usize::try_from(plen)
        .ok()
        .and_then(|p| plen_end.checked_add(p))
        .ok_or_else(truncated)?;
    if bytes.len() != payload_end + DIGEST_LEN {
        return Err(if bytes.len() < payload_end + DIGEST_LEN {
            truncated()
        } else {
            Error::Format("trailing bytes after digest".into())
        });
    }
    let digest = Sha256::digest(&bytes[..payload_end]);
    if digest.as_slice() != &bytes[payload_end..] {
        return Err(Error::Format("checksum mismatch".into()));
    }
    Ok((&bytes[16..header_end], &bytes[plen_end..payload_end]))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
