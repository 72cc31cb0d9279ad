//! Flat binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "YNET"                      magic
//! u32    version (= 1)
//! u32    config length, then that many bytes of TOML config text
//! then per parameter:
//!   u32  name length, then the UTF-8 name
//!   u32  rank, then rank × u32 dims
//!   dims product × f32 payload
//! u32    CRC32 of everything prior
//! ```
//!
//! Round-trips are bitwise lossless for all parameters (including the fixed
//! bank), the batch-norm running statistics and the config.

use super::graph::NetworkGraph;
use super::YedroudjConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"YNET";
const VERSION: u32 = 1;

pub fn save_checkpoint(graph: &NetworkGraph<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = graph.config().to_toml();
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    for (name, dims, data) in graph.state_entries() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CheckpointTruncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<NetworkGraph<f32>> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::CheckpointTruncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::CheckpointMagic);
    }
    if bytes.len() < 4 + 4 + 4 {
        return Err(Error::CheckpointTruncated);
    }
    // payload is everything up to the trailing CRC
    let body = &bytes[..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());

    let mut cur = Cursor {
        bytes: body,
        pos: 4,
    };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let config_len = cur.u32()? as usize;
    let config_text = std::str::from_utf8(cur.take(config_len)?)
        .map_err(|_| Error::Config("checkpoint config is not UTF-8".into()))?;
    let config = YedroudjConfig::from_toml(config_text)?;
    let mut graph = NetworkGraph::<f32>::build(config)?;

    let mut restored: Vec<String> = Vec::new();
    while cur.remaining() > 0 {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Config("checkpoint parameter name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()?);
        }
        let numel: usize = dims.iter().map(|&d| d as usize).product();
        let raw = cur.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        graph.restore_entry(&name, &dims, data)?;
        restored.push(name);
    }

    if crc32fast::hash(body) != stored_crc {
        return Err(Error::CheckpointCrc);
    }

    for (name, _, _) in graph.state_entries() {
        if !restored.contains(&name) {
            return Err(Error::CheckpointMissingParam(name));
        }
    }
    Ok(graph)
}
