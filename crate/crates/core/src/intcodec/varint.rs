//! LEB128 varints: 7 payload bits per byte, high bit set on all but the last.

use crate::error::{Error, Result};

#[inline]
pub fn write(out: &mut Vec<u8>, mut value: u64) {
    while value >= 0x80 {
        out.push((value as u8) | 0x80);
        value >>= 7;
    }
    out.push(value as u8);
}

/// Encoded length of `value` in bytes.
#[inline]
pub fn len(value: u64) -> usize {
    let bits = 64 - (value | 1).leading_zeros() as usize;
    bits.div_ceil(7)
}

/// Reads a varint at `*pos`, advancing it past the encoding.
#[inline]
pub fn read(buf: &[u8], pos: &mut usize) -> Result<u64> {
    let mut value = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = *buf.get(*pos).ok_or(Error::Truncated)?;
        *pos += 1;
        let payload = (byte & 0x7f) as u64;
        if shift == 63 && payload > 1 {
            return Err(Error::VarintOverflow);
        }
        value |= payload << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
        if shift > 63 {
            return Err(Error::VarintOverflow);
        }
    }
}

#[inline]
pub fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    u32::try_from(read(buf, pos)?).map_err(|_| Error::VarintOverflow)
}

#[inline]
pub fn read_usize(buf: &[u8], pos: &mut usize) -> Result<usize> {
    usize::try_from(read(buf, pos)?).map_err(|_| Error::VarintOverflow)
}
