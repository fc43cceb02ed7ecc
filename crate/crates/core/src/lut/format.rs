//! APLU binary format.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "APLU" (0x41504C55 read big-endian)
//! 4       4      version, u32 = 1
//! 8       2      L (nodes per axis), u16
//! 10      2      reserved, zero
//! 12      32     bounds u1_min, u1_max, u2_min, u2_max as f64
//! 44      20     reserved, zero (pads the header to 64 bytes)
//! 64      2+m    method tag: u16 length + UTF-8
//! ..      2+c    camera tag: u16 length + UTF-8
//! ..      72·L²  node matrices, node row-major, matrix row-major, f64
//! ..      4      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use super::{LutBounds, LutError, LutGrid};
use crate::projective::ProjectiveTransform;

pub const MAGIC: [u8; 4] = *b"APLU";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

pub fn serialize(grid: &LutGrid) -> Vec<u8> {
    let payload = grid.nodes.len() * 9 * 8;
    let mut out =
        Vec::with_capacity(HEADER_LEN + 4 + grid.method.len() + grid.camera.len() + payload + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.size as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    let b = grid.bounds;
    for v in [b.u1_min, b.u1_max, b.u2_min, b.u2_max] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.resize(HEADER_LEN, 0);
    for tag in [&grid.method, &grid.camera] {
        let bytes = tag.as_bytes();
        let len = bytes.len().min(u16::MAX as usize);
        out.extend_from_slice(&(len as u16).to_le_bytes());
        out.extend_from_slice(&bytes[..len]);
    }
    for node in &grid.nodes {
        for v in node.to_row_major() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LutError> {
        let end = self.pos.checked_add(n).ok_or(LutError::TruncatedStream)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(LutError::TruncatedStream)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, LutError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, LutError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, LutError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tag(&mut self) -> Result<String, LutError> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| LutError::BadUtf8)
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<LutGrid, LutError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(LutError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LutError::BadVersion(version));
    }
    let size = r.u16()? as usize;
    let _reserved = r.u16()?;
    let bounds = LutBounds {
        u1_min: r.f64()?,
        u1_max: r.f64()?,
        u2_min: r.f64()?,
        u2_max: r.f64()?,
    };
    r.take(HEADER_LEN - r.pos)?;
    let method = r.tag()?;
    let camera = r.tag()?;
    // Check the declared size against the buffer before allocating for it.
    if bytes.len() - r.pos < size * size * 72 + 4 {
        return Err(LutError::TruncatedStream);
    }
    let mut nodes = Vec::with_capacity(size * size);
    let mut raw = Vec::with_capacity(size * size);
    for _ in 0..size * size {
        let mut m = [0.0; 9];
        for v in &mut m {
            *v = r.f64()?;
        }
        raw.push(m);
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(LutError::ChecksumMismatch { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(LutError::TrailingBytes(bytes.len() - r.pos));
    }
    for m in raw {
        nodes.push(
            ProjectiveTransform::from_row_major(m)
                .map_err(|e| LutError::InvalidGrid(e.to_string()))?,
        );
    }
    LutGrid::from_nodes(size, bounds, nodes, method, camera)
}
