//! Integer value-stream transforms: delta coding, ZigZag mapping and
//! patched frame-of-reference bitpacking.
//!
//! The streaming helpers (`delta_zigzag_encode` and friends) work modulo
//! 2^32 so every `u32` sequence is representable; they agree with the exact
//! [`delta_encode`] whenever consecutive values differ by less than 2^31.

pub mod pfor;
pub mod varint;

pub use pfor::{pfor_decode, pfor_encode, pfor_encode_into, PackedBlock, BLOCK_LEN};

use crate::error::{Error, Result};

/// First element is kept as-is (a delta from an implicit zero), the rest are
/// differences from the left neighbour.
pub fn delta_encode(values: &[u32]) -> Vec<i64> {
    let mut prev = 0i64;
    values
        .iter()
        .map(|&v| {
            let v = v as i64;
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

pub fn delta_decode(deltas: &[i64]) -> Result<Vec<u32>> {
    let mut acc = 0i64;
    deltas
        .iter()
        .enumerate()
        .map(|(index, &d)| {
            acc = acc.checked_add(d).ok_or(Error::DeltaOverflow { index })?;
            u32::try_from(acc).map_err(|_| Error::DeltaOverflow { index })
        })
        .collect()
}

/// `2|x| + [x < 0]`.
///
/// Code 1 never arises from that formula, so it is assigned to `i32::MIN`
/// (whose magnitude does not fit); this makes the mapping a bijection
/// between `i32` and `u32`.
#[inline]
pub fn zigzag_encode(x: i32) -> u32 {
    (x.unsigned_abs() << 1) | ((x as u32) >> 31)
}

#[inline]
pub fn zigzag_decode(code: u32) -> i32 {
    let magnitude = (code >> 1) as i32;
    let sign = -((code & 1) as i32);
    ((magnitude ^ sign).wrapping_sub(sign)) | (((code == 1) as i32) << 31)
}

/// Spatial delta followed by ZigZag, appended to `out`.
pub fn delta_zigzag_encode(values: &[u32], out: &mut Vec<u32>) {
    out.reserve(values.len());
    let mut prev = 0u32;
    for &v in values {
        out.push(zigzag_encode(v.wrapping_sub(prev) as i32));
        prev = v;
    }
}

pub fn delta_zigzag_decode(codes: &[u32], out: &mut Vec<u32>) {
    out.reserve(codes.len());
    let mut acc = 0u32;
    for &c in codes {
        acc = acc.wrapping_add(zigzag_decode(c) as u32);
        out.push(acc);
    }
}

/// Spatial delta with the signed result reinterpreted as unsigned (two's
/// complement), no ZigZag. Only used to measure what ZigZag buys.
pub fn delta_cast_encode(values: &[u32], out: &mut Vec<u32>) {
    out.reserve(values.len());
    let mut prev = 0u32;
    for &v in values {
        out.push(v.wrapping_sub(prev));
        prev = v;
    }
}

pub fn delta_cast_decode(codes: &[u32], out: &mut Vec<u32>) {
    out.reserve(codes.len());
    let mut acc = 0u32;
    for &c in codes {
        acc = acc.wrapping_add(c);
        out.push(acc);
    }
}

/// ZigZag of values already holding wrapped signed differences.
pub fn zigzag_encode_slice(values: &[u32], out: &mut Vec<u32>) {
    out.extend(values.iter().map(|&v| zigzag_encode(v as i32)));
}

pub fn zigzag_decode_slice(codes: &[u32], out: &mut Vec<u32>) {
    out.extend(codes.iter().map(|&c| zigzag_decode(c) as u32));
}
