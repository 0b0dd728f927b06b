//! Zero-sample bitmasks and the general-purpose byte compressors that shrink
//! them.
//!
//! Bit `i` of a mask is 1 when sample `i` is zero. Bits are stored packed,
//! row-major, least-significant bit first within each byte; padding bits in
//! the final byte are always 0.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intcodec::varint;
use crate::scan::Scan;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmask {
    rows: usize,
    cols: usize,
    bytes: Vec<u8>,
}

impl Bitmask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Bitmask {
            rows,
            cols,
            bytes: vec![0; (rows * cols).div_ceil(8)],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut mask = Bitmask {
            rows,
            cols,
            bytes: vec![0xff; (rows * cols).div_ceil(8)],
        };
        mask.clear_padding();
        mask
    }

    /// Marks every zero sample of `scan`.
    pub fn from_scan(scan: &Scan) -> Self {
        Self::from_samples(scan.rows(), scan.cols(), scan.samples())
    }

    pub fn from_samples(rows: usize, cols: usize, samples: &[u32]) -> Self {
        debug_assert_eq!(samples.len(), rows * cols);
        let mut bytes = Vec::with_capacity(samples.len().div_ceil(8));
        let mut chunks = samples.chunks_exact(8);
        for chunk in &mut chunks {
            let mut byte = 0u8;
            for (bit, &v) in chunk.iter().enumerate() {
                byte |= ((v == 0) as u8) << bit;
            }
            bytes.push(byte);
        }
        let tail = chunks.remainder();
        if !tail.is_empty() {
            let mut byte = 0u8;
            for (bit, &v) in tail.iter().enumerate() {
                byte |= ((v == 0) as u8) << bit;
            }
            bytes.push(byte);
        }
        Bitmask { rows, cols, bytes }
    }

    /// Rebuilds a mask from its packed bytes.
    pub fn unpack(bytes: &[u8], rows: usize, cols: usize) -> Result<Self> {
        let len = rows * cols;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::LengthMismatch {
                expected: len.div_ceil(8),
                found: bytes.len(),
            });
        }
        let mask = Bitmask {
            rows,
            cols,
            bytes: bytes.to_vec(),
        };
        if mask.padding_bits() != 0 {
            return Err(Error::MaskPadding);
        }
        Ok(mask)
    }

    /// Packed representation: `ceil(rows·cols / 8)` bytes.
    pub fn pack(&self) -> &[u8] {
        &self.bytes
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bytes[index / 8] >> (index % 8) & 1 == 1
    }

    /// Number of set bits (zero samples).
    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Number of clear bits (nonzero samples).
    pub fn count_zeros(&self) -> usize {
        self.len() - self.count_ones()
    }

    pub fn xor(&self, other: &Bitmask) -> Result<Bitmask> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::GeometryMismatch);
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(Bitmask {
            rows: self.rows,
            cols: self.cols,
            bytes,
        })
    }

    fn padding_bits(&self) -> u8 {
        let used = self.len() % 8;
        match (used, self.bytes.last()) {
            (0, _) | (_, None) => 0,
            (used, Some(&last)) => last & !((1u8 << used) - 1),
        }
    }

    fn clear_padding(&mut self) {
        let used = self.len() % 8;
        if used != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= (1u8 << used) - 1;
            }
        }
    }
}

/// Convenience wrapper matching [`Bitmask::from_scan`].
pub fn extract_mask(scan: &Scan) -> Bitmask {
    Bitmask::from_scan(scan)
}

/// Convenience wrapper matching [`Bitmask::xor`].
pub fn xor_mask(current: &Bitmask, previous: &Bitmask) -> Result<Bitmask> {
    current.xor(previous)
}

/// Samples at clear mask bits, in row-major order.
pub fn compact(samples: &[u32], mask: &Bitmask) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(mask.count_zeros());
    compact_range_into(samples, mask, 0..samples.len(), &mut out)?;
    Ok(out)
}

/// Appends the samples in `range` whose mask bit is clear.
pub fn compact_range_into(
    samples: &[u32],
    mask: &Bitmask,
    range: std::ops::Range<usize>,
    out: &mut Vec<u32>,
) -> Result<()> {
    if samples.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            expected: mask.len(),
            found: samples.len(),
        });
    }
    let mut i = range.start;
    while i < range.end {
        // Whole-byte fast paths when aligned.
        if i.is_multiple_of(8) && i + 8 <= range.end {
            let byte = mask.bytes[i / 8];
            if byte == 0 {
                out.extend_from_slice(&samples[i..i + 8]);
                i += 8;
                continue;
            }
            if byte == 0xff {
                i += 8;
                continue;
            }
        }
        if !mask.get(i) {
            out.push(samples[i]);
        }
        i += 1;
    }
    Ok(())
}

/// Inverse of [`compact`]: zeros at set bits, `values` in order elsewhere.
pub fn expand(values: &[u32], mask: &Bitmask) -> Result<Vec<u32>> {
    let expected = mask.count_zeros();
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: values.len(),
        });
    }
    let mut out = vec![0u32; mask.len()];
    let mut next = values.iter();
    for (i, slot) in out.iter_mut().enumerate() {
        if !mask.get(i) {
            // Length checked above.
            *slot = *next.next().unwrap_or(&0);
        }
    }
    Ok(out)
}

/// General-purpose byte compressors available for mask blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ByteCompressorId {
    Stored = 0,
    #[default]
    Zstd = 1,
    Deflate = 2,
}

impl ByteCompressorId {
    pub const REGISTERED: [ByteCompressorId; 3] =
        [ByteCompressorId::Stored, ByteCompressorId::Zstd, ByteCompressorId::Deflate];

    pub fn from_id(id: u8) -> Result<Self> {
        Self::REGISTERED
            .get(id as usize)
            .copied()
            .ok_or(Error::UnknownCodec(id))
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ByteCompressorId::Stored => "stored",
            ByteCompressorId::Zstd => "zstd",
            ByteCompressorId::Deflate => "deflate",
        }
    }
}

impl FromStr for ByteCompressorId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::REGISTERED
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown byte compressor `{s}`"))
    }
}

// Masks are small next to value payloads, so favour speed.
const ZSTD_LEVEL: i32 = 1;

pub fn compress_block(bytes: &[u8], codec: ByteCompressorId) -> Vec<u8> {
    match codec {
        ByteCompressorId::Stored => bytes.to_vec(),
        ByteCompressorId::Zstd => {
            zstd::bulk::compress(bytes, ZSTD_LEVEL).expect("in-memory zstd compression cannot fail")
        }
        ByteCompressorId::Deflate => {
            let mut encoder =
                flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::fast());
            encoder
                .write_all(bytes)
                .and_then(|_| encoder.finish())
                .expect("in-memory deflate cannot fail")
        }
    }
}

pub fn decompress_block(bytes: &[u8], codec: ByteCompressorId, expected_len: usize) -> Result<Vec<u8>> {
    let out = match codec {
        ByteCompressorId::Stored => bytes.to_vec(),
        ByteCompressorId::Zstd => {
            // Frames that declare a size larger than expected are rejected
            // before any allocation.
            let mut out = Vec::with_capacity(expected_len);
            let mut decoder = zstd::stream::read::Decoder::new(bytes)
                .map_err(|e| Error::CompressedBlock(e.to_string()))?;
            (&mut decoder)
                .take(expected_len as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| Error::CompressedBlock(e.to_string()))?;
            out
        }
        ByteCompressorId::Deflate => {
            let mut out = Vec::with_capacity(expected_len);
            flate2::read::DeflateDecoder::new(bytes)
                .take(expected_len as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| Error::CompressedBlock(e.to_string()))?;
            out
        }
    };
    if out.len() != expected_len {
        return Err(Error::LengthMismatch {
            expected: expected_len,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Writes a mask block:
/// `[uncompressed_len: varint] [codec_id: u8] [compressed_len: varint] [bytes]`.
///
/// Falls back to the stored codec when compression does not help.
pub fn write_mask_block(mask: &Bitmask, codec: ByteCompressorId, out: &mut Vec<u8>) {
    let raw = mask.pack();
    let compressed = compress_block(raw, codec);
    let (codec, payload): (ByteCompressorId, &[u8]) = if compressed.len() < raw.len() {
        (codec, &compressed)
    } else {
        (ByteCompressorId::Stored, raw)
    };
    varint::write(out, raw.len() as u64);
    out.push(codec.id());
    varint::write(out, payload.len() as u64);
    out.extend_from_slice(payload);
}

/// Reads a mask block at `*pos` for a `rows × cols` mask.
pub fn read_mask_block(buf: &[u8], pos: &mut usize, rows: usize, cols: usize) -> Result<Bitmask> {
    let raw_len = varint::read_usize(buf, pos)?;
    let expected = (rows * cols).div_ceil(8);
    if raw_len != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: raw_len,
        });
    }
    let codec = ByteCompressorId::from_id(*buf.get(*pos).ok_or(Error::Truncated)?)?;
    *pos += 1;
    let len = varint::read_usize(buf, pos)?;
    let end = pos.checked_add(len).ok_or(Error::Truncated)?;
    let payload = buf.get(*pos..end).ok_or(Error::Truncated)?;
    *pos = end;
    let bytes = decompress_block(payload, codec, raw_len)?;
    Bitmask::unpack(&bytes, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::{Geometry, SampleWidth, ScanType};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn scan(rows: usize, cols: usize, samples: Vec<u32>) -> Scan {
        Scan::new(
            Geometry::new(rows, cols, SampleWidth::U32, ScanType::Range).unwrap(),
            samples,
        )
        .unwrap()
    }

    fn mask_from_bits(rows: usize, cols: usize, bits: &[bool]) -> Bitmask {
        let samples: Vec<u32> = bits.iter().map(|&b| if b { 0 } else { 1 }).collect();
        Bitmask::from_samples(rows, cols, &samples)
    }

    #[test]
    fn extract_examples() {
        let all_zero = scan(2, 5, vec![0; 10]);
        assert_eq!(extract_mask(&all_zero), Bitmask::ones(2, 5));
        let none_zero = scan(2, 5, vec![3; 10]);
        assert_eq!(extract_mask(&none_zero), Bitmask::zeros(2, 5));
        assert_eq!(extract_mask(&none_zero).count_ones(), 0);
    }

    #[test]
    fn popcount_matches_zero_count() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<u32> = (0..999).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen() }).collect();
        let expected = samples.iter().filter(|&&v| v == 0).count();
        let mask = Bitmask::from_samples(27, 37, &samples);
        assert_eq!(mask.count_ones(), expected);
        assert_eq!(mask.count_zeros(), 999 - expected);
    }

    #[test]
    fn compact_examples() {
        let s = scan(1, 4, vec![0, 5, 0, 7]);
        let mask = extract_mask(&s);
        assert_eq!(compact(s.samples(), &mask).unwrap(), vec![5, 7]);
        assert_eq!(expand(&[5, 7], &mask).unwrap(), vec![0, 5, 0, 7]);
        let zeros = scan(2, 3, vec![0; 6]);
        assert!(compact(zeros.samples(), &extract_mask(&zeros)).unwrap().is_empty());
        assert!(matches!(expand(&[1], &mask), Err(Error::LengthMismatch { expected: 2, found: 1 })));
        assert!(compact(&[1, 2, 3], &mask).is_err());
    }

    #[test]
    fn pack_examples() {
        let mut bits = [false; 8];
        bits[0] = true;
        assert_eq!(mask_from_bits(1, 8, &bits).pack(), &[0x01]);
        assert_eq!(Bitmask::ones(1, 9).pack(), &[0xff, 0x01]);
        assert!(matches!(Bitmask::unpack(&[0xff, 0x03], 1, 9), Err(Error::MaskPadding)));
        assert!(matches!(Bitmask::unpack(&[0xff], 1, 9), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn xor_examples() {
        let m = mask_from_bits(1, 5, &[true, false, true, true, false]);
        assert_eq!(m.xor(&m).unwrap(), Bitmask::zeros(1, 5));
        assert_eq!(m.xor(&Bitmask::zeros(1, 5)).unwrap(), m);
        assert!(m.xor(&Bitmask::zeros(5, 1)).is_err());
    }

    #[test]
    fn stored_codec_is_identity() {
        let data = b"hello mask".to_vec();
        assert_eq!(compress_block(&data, ByteCompressorId::Stored), data);
        assert_eq!(decompress_block(&data, ByteCompressorId::Stored, data.len()).unwrap(), data);
    }

    #[test]
    fn redundant_masks_compress_well() {
        let zeros = vec![0u8; 16 * 1024];
        let compressed = compress_block(&zeros, ByteCompressorId::default());
        assert!(compressed.len() < 256, "{} bytes", compressed.len());
        assert_eq!(
            decompress_block(&compressed, ByteCompressorId::default(), zeros.len()).unwrap(),
            zeros
        );
    }

    #[test]
    fn decompress_validates_length_and_data() {
        let data = vec![9u8; 300];
        for codec in ByteCompressorId::REGISTERED {
            let c = compress_block(&data, codec);
            assert!(matches!(
                decompress_block(&c, codec, 299),
                Err(Error::LengthMismatch { .. })
            ));
            assert!(matches!(
                decompress_block(&c, codec, 301),
                Err(Error::LengthMismatch { .. })
            ));
        }
        assert!(decompress_block(&[1, 2, 3, 4, 5], ByteCompressorId::Zstd, 10).is_err());
        assert!(decompress_block(&[0xff, 0xff], ByteCompressorId::Deflate, 10).is_err());
        assert!(matches!(ByteCompressorId::from_id(9), Err(Error::UnknownCodec(9))));
    }

    #[test]
    fn mask_block_roundtrip_and_fallback() {
        for (rows, cols) in [(1, 1), (3, 7), (64, 1024)] {
            let mask = Bitmask::ones(rows, cols);
            for codec in ByteCompressorId::REGISTERED {
                let mut out = Vec::new();
                write_mask_block(&mask, codec, &mut out);
                let mut pos = 0;
                assert_eq!(read_mask_block(&out, &mut pos, rows, cols).unwrap(), mask);
                assert_eq!(pos, out.len());
            }
        }
        // A one-byte mask never compresses; it is stored.
        let mut out = Vec::new();
        write_mask_block(&Bitmask::ones(1, 3), ByteCompressorId::Zstd, &mut out);
        assert_eq!(out, vec![1, 0, 1, 0x07]);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(rows in 1usize..20, cols in 1usize..20, seed: u64) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bits: Vec<bool> = (0..rows * cols).map(|_| rng.gen()).collect();
            let mask = mask_from_bits(rows, cols, &bits);
            prop_assert_eq!(mask.pack().len(), (rows * cols).div_ceil(8));
            prop_assert_eq!(&Bitmask::unpack(mask.pack(), rows, cols).unwrap(), &mask);
            for (i, &b) in bits.iter().enumerate() {
                prop_assert_eq!(mask.get(i), b);
            }
        }

        #[test]
        fn xor_is_an_involution(len in 1usize..300, a: u64, b: u64) {
            let mut ra = rand_chacha::ChaCha8Rng::seed_from_u64(a);
            let mut rb = rand_chacha::ChaCha8Rng::seed_from_u64(b);
            let ma = mask_from_bits(1, len, &(0..len).map(|_| ra.gen()).collect::<Vec<bool>>());
            let mb = mask_from_bits(1, len, &(0..len).map(|_| rb.gen()).collect::<Vec<bool>>());
            prop_assert_eq!(ma.xor(&mb).unwrap().xor(&mb).unwrap(), ma);
        }

        #[test]
        fn compact_expand_bijection(samples in prop::collection::vec(prop_oneof![Just(0u32), any::<u32>()], 1..400)) {
            let mask = Bitmask::from_samples(1, samples.len(), &samples);
            let values = compact(&samples, &mask).unwrap();
            prop_assert_eq!(values.len() + mask.count_ones(), samples.len());
            prop_assert_eq!(expand(&values, &mask).unwrap(), samples);
        }

        #[test]
        fn block_roundtrip_random_bytes(data in prop::collection::vec(any::<u8>(), 0..2000)) {
            for codec in ByteCompressorId::REGISTERED {
                let c = compress_block(&data, codec);
                prop_assert_eq!(decompress_block(&c, codec, data.len()).unwrap(), data.clone());
            }
        }
    }
}
