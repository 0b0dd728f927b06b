//! Patched frame-of-reference (PFOR) bitpacking of `u32` sequences.
//!
//! A value section is `[count: varint]` followed by `ceil(count / 128)`
//! blocks. Every block but the last holds 128 values; the last holds the
//! remainder. Block layout:
//!
//! ```text
//! [reference: varint]        minimum of the block
//! [bit_width: u8]            0..=32
//! [exception_count: varint]
//! [packed: ceil(len·bit_width/8) bytes]
//! [exception positions: 1 byte each, strictly increasing]
//! [exception remainders: varint each, (value − reference) >> bit_width]
//! ```
//!
//! Full blocks pack offsets in four interleaved 32-bit lanes: value `i`
//! belongs to lane `i % 4`, each lane is an LSB-first bit stream of 32
//! values, and word `w` of lane `l` is stored (little-endian) at word index
//! `4·w + l`. Short final blocks use one plain LSB-first bit stream.
//!
//! The bit width of each block is the one minimising the block's encoded
//! size, exceptions included; ties go to the narrower width.

use super::varint;
use crate::error::{Error, Result};

pub const BLOCK_LEN: usize = 128;
const LANES: usize = 4;
const ROWS: usize = BLOCK_LEN / LANES;
/// Smallest possible encoded block: reference, width and count bytes.
const MIN_BLOCK_BYTES: usize = 3;

#[inline]
fn low_mask(bit_width: u32) -> u32 {
    if bit_width >= 32 {
        u32::MAX
    } else {
        (1u32 << bit_width) - 1
    }
}

#[inline]
fn bit_len(v: u32) -> usize {
    32 - v.leading_zeros() as usize
}

#[inline]
fn packed_len(len: usize, bit_width: u32) -> usize {
    (len * bit_width as usize).div_ceil(8)
}

pub fn pfor_encode(values: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() + 8);
    pfor_encode_into(values, &mut out);
    out
}

/// Appends the encoded value section to `out`.
pub fn pfor_encode_into(values: &[u32], out: &mut Vec<u8>) {
    varint::write(out, values.len() as u64);
    for block in values.chunks(BLOCK_LEN) {
        encode_block(block, out);
    }
}

/// Picks the cheapest bit width from a histogram of offset bit lengths.
/// Returns `(bit_width, encoded block bytes)`.
fn choose_bit_width(len: usize, reference: u32, histogram: &[usize; 33]) -> (u32, usize) {
    let fixed = varint::len(reference as u64) + 1;
    let mut best = (32, usize::MAX);
    for b in 0..=32usize {
        let mut exceptions = 0usize;
        let mut remainder_bytes = 0usize;
        for (bits, &count) in histogram.iter().enumerate().skip(b + 1) {
            exceptions += count;
            remainder_bytes += count * (bits - b).div_ceil(7);
        }
        let cost = fixed
            + varint::len(exceptions as u64)
            + packed_len(len, b as u32)
            + exceptions
            + remainder_bytes;
        if cost < best.1 {
            best = (b as u32, cost);
        }
    }
    best
}

fn encode_block(block: &[u32], out: &mut Vec<u8>) {
    let len = block.len();
    let reference = block.iter().copied().min().unwrap_or(0);
    let mut offsets = [0u32; BLOCK_LEN];
    let mut histogram = [0usize; 33];
    for (slot, &v) in offsets.iter_mut().zip(block) {
        let o = v - reference;
        *slot = o;
        histogram[bit_len(o)] += 1;
    }
    let (bit_width, _) = choose_bit_width(len, reference, &histogram);

    varint::write(out, reference as u64);
    out.push(bit_width as u8);
    let exception_count = histogram[bit_width as usize + 1..].iter().sum::<usize>();
    varint::write(out, exception_count as u64);

    if len == BLOCK_LEN {
        pack_lanes(&offsets, bit_width, out);
    } else {
        pack_stream(&offsets[..len], bit_width, out);
    }

    if exception_count > 0 {
        for (i, &o) in offsets[..len].iter().enumerate() {
            if o >> bit_width != 0 {
                out.push(i as u8);
            }
        }
        for &o in &offsets[..len] {
            let high = o >> bit_width;
            if high != 0 {
                varint::write(out, high as u64);
            }
        }
    }
}

/// Four-lane interleaved packing of a full block. The word-boundary test
/// is uniform across lanes, so the per-lane loops vectorize.
fn pack_lanes(offsets: &[u32; BLOCK_LEN], bit_width: u32, out: &mut Vec<u8>) {
    if bit_width == 0 {
        return;
    }
    let mask = low_mask(bit_width);
    let mut words = [0u32; LANES * 32];
    let mut acc = [0u64; LANES];
    let mut filled = 0u32;
    let mut w = 0usize;
    for row in 0..ROWS {
        let chunk = &offsets[row * LANES..row * LANES + LANES];
        for lane in 0..LANES {
            acc[lane] |= ((chunk[lane] & mask) as u64) << filled;
        }
        filled += bit_width;
        if filled >= 32 {
            for lane in 0..LANES {
                words[w * LANES + lane] = acc[lane] as u32;
                acc[lane] >>= 32;
            }
            w += 1;
            filled -= 32;
        }
    }
    debug_assert_eq!(filled, 0);
    debug_assert_eq!(w, bit_width as usize);
    for word in &words[..LANES * w] {
        out.extend_from_slice(&word.to_le_bytes());
    }
}

fn unpack_lanes(packed: &[u8], bit_width: u32, out: &mut [u32; BLOCK_LEN]) {
    if bit_width == 0 {
        out.fill(0);
        return;
    }
    let mut words = [0u32; LANES * 32];
    for (word, bytes) in words.iter_mut().zip(packed.chunks_exact(4)) {
        *word = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    }
    let mask = low_mask(bit_width);
    let mut acc = [0u64; LANES];
    let mut filled = 0u32;
    let mut w = 0usize;
    for row in 0..ROWS {
        if filled < bit_width {
            for lane in 0..LANES {
                acc[lane] |= (words[w * LANES + lane] as u64) << filled;
            }
            w += 1;
            filled += 32;
        }
        let chunk = &mut out[row * LANES..row * LANES + LANES];
        for lane in 0..LANES {
            chunk[lane] = acc[lane] as u32 & mask;
            acc[lane] >>= bit_width;
        }
        filled -= bit_width;
    }
}

fn pack_stream(offsets: &[u32], bit_width: u32, out: &mut Vec<u8>) {
    if bit_width == 0 {
        return;
    }
    let mask = low_mask(bit_width);
    let mut acc = 0u64;
    let mut filled = 0u32;
    for &o in offsets {
        acc |= ((o & mask) as u64) << filled;
        filled += bit_width;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

fn unpack_stream(packed: &[u8], bit_width: u32, out: &mut [u32]) {
    if bit_width == 0 {
        out.fill(0);
        return;
    }
    let mask = low_mask(bit_width);
    let mut bytes = packed.iter();
    let mut acc = 0u64;
    let mut filled = 0u32;
    for slot in out.iter_mut() {
        while filled < bit_width {
            acc |= (*bytes.next().unwrap_or(&0) as u64) << filled;
            filled += 8;
        }
        *slot = acc as u32 & mask;
        acc >>= bit_width;
        filled -= bit_width;
    }
}

/// A parsed block, borrowing its packed payload from the value section.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedBlock<'a> {
    pub reference: u32,
    pub bit_width: u8,
    pub len: usize,
    pub payload: &'a [u8],
    /// `(position in block, offset >> bit_width)` pairs.
    pub exceptions: Vec<(u8, u32)>,
}

impl PackedBlock<'_> {
    /// Encoded size of this block in bytes.
    pub fn encoded_len(&self) -> usize {
        varint::len(self.reference as u64)
            + 1
            + varint::len(self.exceptions.len() as u64)
            + self.payload.len()
            + self.exceptions.len()
            + self
                .exceptions
                .iter()
                .map(|&(_, r)| varint::len(r as u64))
                .sum::<usize>()
    }
}

struct BlockHeader<'a> {
    reference: u32,
    bit_width: u32,
    payload: &'a [u8],
    positions: &'a [u8],
}

fn read_block_header<'a>(buf: &'a [u8], pos: &mut usize, len: usize) -> Result<BlockHeader<'a>> {
    let reference = varint::read_u32(buf, pos)?;
    let bit_width = *buf.get(*pos).ok_or(Error::Truncated)?;
    *pos += 1;
    if bit_width > 32 {
        return Err(Error::BitWidth(bit_width));
    }
    let count = varint::read_usize(buf, pos)?;
    if count > len {
        return Err(Error::ExceptionCount { count, len });
    }
    let payload_len = packed_len(len, bit_width as u32);
    let payload = take(buf, pos, payload_len)?;
    let positions = take(buf, pos, count)?;
    let mut previous: Option<u8> = None;
    for &p in positions {
        if p as usize >= len || previous.is_some_and(|q| p <= q) {
            return Err(Error::ExceptionPosition { position: p, len });
        }
        previous = Some(p);
    }
    Ok(BlockHeader {
        reference,
        bit_width: bit_width as u32,
        payload,
        positions,
    })
}

#[inline]
fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).ok_or(Error::Truncated)?;
    let slice = buf.get(*pos..end).ok_or(Error::Truncated)?;
    *pos = end;
    Ok(slice)
}

fn read_count(buf: &[u8], pos: &mut usize) -> Result<usize> {
    let count = varint::read_usize(buf, pos)?;
    let blocks = count.div_ceil(BLOCK_LEN);
    // Reject counts the remaining bytes cannot possibly hold before
    // allocating anything for them.
    if blocks.saturating_mul(MIN_BLOCK_BYTES) > buf.len() - *pos {
        return Err(Error::Truncated);
    }
    Ok(count)
}

/// Parses a value section into its blocks without reconstructing values.
pub fn blocks(buf: &[u8]) -> Result<Vec<PackedBlock<'_>>> {
    let mut pos = 0;
    let count = read_count(buf, &mut pos)?;
    let mut remaining = count;
    let mut blocks = Vec::with_capacity(count.div_ceil(BLOCK_LEN));
    while remaining > 0 {
        let len = remaining.min(BLOCK_LEN);
        let header = read_block_header(buf, &mut pos, len)?;
        let mut exceptions = Vec::with_capacity(header.positions.len());
        for &p in header.positions {
            exceptions.push((p, varint::read_u32(buf, &mut pos)?));
        }
        blocks.push(PackedBlock {
            reference: header.reference,
            bit_width: header.bit_width as u8,
            len,
            payload: header.payload,
            exceptions,
        });
        remaining -= len;
    }
    if pos != buf.len() {
        return Err(Error::TrailingBytes(buf.len() - pos));
    }
    Ok(blocks)
}

pub fn pfor_decode(buf: &[u8]) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    pfor_decode_into(buf, &mut out)?;
    Ok(out)
}

/// Decodes a complete value section, appending to `out`. The section must
/// span all of `buf`.
pub fn pfor_decode_into(buf: &[u8], out: &mut Vec<u32>) -> Result<()> {
    let mut pos = 0;
    let count = read_count(buf, &mut pos)?;
    out.reserve(count);
    let mut remaining = count;
    let mut offsets = [0u32; BLOCK_LEN];
    while remaining > 0 {
        let len = remaining.min(BLOCK_LEN);
        let header = read_block_header(buf, &mut pos, len)?;
        let b = header.bit_width;
        if len == BLOCK_LEN {
            unpack_lanes(header.payload, b, &mut offsets);
        } else {
            unpack_stream(header.payload, b, &mut offsets[..len]);
        }
        for &p in header.positions {
            let high = varint::read_u32(buf, &mut pos)?;
            let patched = if b == 32 {
                if high != 0 {
                    return Err(Error::ValueOverflow);
                }
                0
            } else {
                if b > 0 && high >> (32 - b) != 0 {
                    return Err(Error::ValueOverflow);
                }
                high << b
            };
            offsets[p as usize] |= patched;
        }
        let reference = header.reference;
        let mut overflow = false;
        for &o in &offsets[..len] {
            let (v, carry) = reference.overflowing_add(o);
            overflow |= carry;
            out.push(v);
        }
        if overflow {
            return Err(Error::ValueOverflow);
        }
        remaining -= len;
    }
    if pos != buf.len() {
        return Err(Error::TrailingBytes(buf.len() - pos));
    }
    Ok(())
}
