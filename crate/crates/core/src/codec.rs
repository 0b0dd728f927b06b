//! Per-scan encoding: intra (I) scans from spatial redundancy alone,
//! predicted (P) scans as residuals against the previous scan, and the
//! trial-compression heuristic choosing between them.
//!
//! Encoded scan wire layout:
//!
//! ```text
//! [mode: u8]            bit 0 = P, bit 1 = residuals coded without spatial delta
//! [value_count: varint] number of nonzero samples
//! [mask block]          see `mask::write_mask_block`; P scans carry current ⊕ previous
//! [value_len: varint]
//! [value block]         PFOR value section
//! ```

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intcodec::{self, pfor, varint};
use crate::mask::{self, Bitmask, ByteCompressorId};
use crate::scan::{Geometry, Scan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    I,
    P,
}

impl Mode {
    pub fn as_char(self) -> char {
        match self {
            Mode::I => 'I',
            Mode::P => 'P',
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModePolicy {
    #[default]
    Auto,
    ForceI,
    ForceP,
}

impl FromStr for ModePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(ModePolicy::Auto),
            "i" => Ok(ModePolicy::ForceI),
            "p" => Ok(ModePolicy::ForceP),
            _ => Err(format!("unknown mode `{s}` (expected auto, i or p)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub policy: ModePolicy,
    /// Scanlines compressed by the Auto heuristic.
    pub test_lines: usize,
}

impl ModeConfig {
    pub const DEFAULT_TEST_LINES: usize = 4;

    pub fn new(policy: ModePolicy) -> Self {
        ModeConfig {
            policy,
            test_lines: Self::DEFAULT_TEST_LINES,
        }
    }

    /// Trial line count actually used for a scan of `rows` rows.
    fn lines_for(&self, rows: usize) -> usize {
        self.test_lines.clamp(1, rows)
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.test_lines == 0 || self.test_lines > rows {
            return Err(Error::InvalidTestLines {
                test_lines: self.test_lines,
                rows,
            });
        }
        Ok(())
    }
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig::new(ModePolicy::Auto)
    }
}

/// How P-scan residuals are turned into unsigned codes. `SpatialDelta` is
/// the shipping pipeline; `Direct` skips the spatial delta and exists for
/// pipeline ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualCoding {
    #[default]
    SpatialDelta,
    Direct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: ModeConfig,
    pub mask_codec: ByteCompressorId,
    pub residual: ResidualCoding,
}

impl EncoderConfig {
    pub fn with_policy(policy: ModePolicy) -> Self {
        EncoderConfig {
            mode: ModeConfig::new(policy),
            ..Default::default()
        }
    }

    fn residual_transform(&self) -> ValueTransform {
        match self.residual {
            ResidualCoding::SpatialDelta => ValueTransform::DeltaZigZag,
            ResidualCoding::Direct => ValueTransform::ZigZag,
        }
    }
}

/// Unsigned-code mapping applied before PFOR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueTransform {
    /// Values packed as they are.
    Raw,
    /// Spatial delta, signed result cast to unsigned.
    DeltaCast,
    /// Spatial delta then ZigZag (the shipping pipeline).
    DeltaZigZag,
    /// ZigZag of values that already hold wrapped signed differences.
    ZigZag,
}

/// Transforms `values` and appends the PFOR value section to `out`.
/// `scratch` is reused between calls to avoid reallocating.
pub fn encode_values(values: &[u32], transform: ValueTransform, scratch: &mut Vec<u32>, out: &mut Vec<u8>) {
    scratch.clear();
    let codes: &[u32] = match transform {
        ValueTransform::Raw => values,
        ValueTransform::DeltaCast => {
            intcodec::delta_cast_encode(values, scratch);
            scratch
        }
        ValueTransform::DeltaZigZag => {
            intcodec::delta_zigzag_encode(values, scratch);
            scratch
        }
        ValueTransform::ZigZag => {
            intcodec::zigzag_encode_slice(values, scratch);
            scratch
        }
    };
    pfor::pfor_encode_into(codes, out);
}

pub fn decode_values(bytes: &[u8], transform: ValueTransform) -> Result<Vec<u32>> {
    let codes = pfor::pfor_decode(bytes)?;
    let mut out = Vec::with_capacity(codes.len());
    match transform {
        ValueTransform::Raw => return Ok(codes),
        ValueTransform::DeltaCast => intcodec::delta_cast_decode(&codes, &mut out),
        ValueTransform::DeltaZigZag => intcodec::delta_zigzag_decode(&codes, &mut out),
        ValueTransform::ZigZag => intcodec::zigzag_decode_slice(&codes, &mut out),
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedScan {
    pub mode: Mode,
    pub residual: ResidualCoding,
    pub value_count: usize,
    pub mask_block: Vec<u8>,
    pub value_block: Vec<u8>,
}

impl EncodedScan {
    pub fn write_to(&self, out: &mut Vec<u8>) {
        let mut mode = match self.mode {
            Mode::I => 0u8,
            Mode::P => 1,
        };
        if self.mode == Mode::P && self.residual == ResidualCoding::Direct {
            mode |= 2;
        }
        out.push(mode);
        varint::write(out, self.value_count as u64);
        out.extend_from_slice(&self.mask_block);
        varint::write(out, self.value_block.len() as u64);
        out.extend_from_slice(&self.value_block);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    pub fn encoded_len(&self) -> usize {
        1 + varint::len(self.value_count as u64)
            + self.mask_block.len()
            + varint::len(self.value_block.len() as u64)
            + self.value_block.len()
    }

    /// Splits a serialized scan into its blocks. The blocks themselves are
    /// validated when decoded.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mode_byte = *buf.first().ok_or(Error::Truncated)?;
        pos += 1;
        let (mode, residual) = match mode_byte {
            0 => (Mode::I, ResidualCoding::SpatialDelta),
            1 => (Mode::P, ResidualCoding::SpatialDelta),
            3 => (Mode::P, ResidualCoding::Direct),
            other => return Err(Error::InvalidMode(other)),
        };
        let value_count = varint::read_usize(buf, &mut pos)?;

        let mask_start = pos;
        varint::read(buf, &mut pos)?;
        ByteCompressorId::from_id(*buf.get(pos).ok_or(Error::Truncated)?)?;
        pos += 1;
        let compressed_len = varint::read_usize(buf, &mut pos)?;
        pos = pos.checked_add(compressed_len).ok_or(Error::Truncated)?;
        let mask_block = buf.get(mask_start..pos).ok_or(Error::Truncated)?.to_vec();

        let value_len = varint::read_usize(buf, &mut pos)?;
        let end = pos.checked_add(value_len).ok_or(Error::Truncated)?;
        let value_block = buf.get(pos..end).ok_or(Error::Truncated)?.to_vec();
        if end != buf.len() {
            return Err(Error::TrailingBytes(buf.len() - end));
        }
        Ok(EncodedScan {
            mode,
            residual,
            value_count,
            mask_block,
            value_block,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Reference {
    scan: Scan,
    mask: Bitmask,
}

/// The previously coded scan and its mask. Encoder and decoder keep
/// identical copies because the codec is lossless.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncoderState {
    previous: Option<Reference>,
}

pub type DecoderState = EncoderState;

impl EncoderState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State whose reference is `previous` (used to code any frame
    /// independently of how earlier frames were coded).
    pub fn with_previous(previous: Scan) -> Self {
        let mut state = Self::new();
        state.update(previous);
        state
    }

    pub fn previous_scan(&self) -> Option<&Scan> {
        self.previous.as_ref().map(|r| &r.scan)
    }

    pub fn previous_mask(&self) -> Option<&Bitmask> {
        self.previous.as_ref().map(|r| &r.mask)
    }

    pub fn update(&mut self, scan: Scan) {
        let mask = Bitmask::from_scan(&scan);
        self.previous = Some(Reference { scan, mask });
    }

    fn update_with_mask(&mut self, scan: Scan, mask: Bitmask) {
        self.previous = Some(Reference { scan, mask });
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    fn reference_for(&self, geometry: &Geometry) -> Result<&Reference> {
        let reference = self.previous.as_ref().ok_or(Error::MissingReference)?;
        if reference.scan.geometry() != geometry {
            return Err(Error::GeometryMismatch);
        }
        Ok(reference)
    }
}

fn nonzero_into(samples: &[u32], out: &mut Vec<u32>) {
    out.extend(samples.iter().copied().filter(|&v| v != 0));
}

/// Wrapped `current − previous` at every position where `current` is
/// nonzero. Zeros in `previous` are not masked out.
fn residuals_into(current: &[u32], previous: &[u32], out: &mut Vec<u32>) {
    out.extend(
        current
            .iter()
            .zip(previous)
            .filter(|(&c, _)| c != 0)
            .map(|(&c, &p)| c.wrapping_sub(p)),
    );
}

fn encode_i_with(scan: &Scan, mask: &Bitmask, codec: ByteCompressorId) -> EncodedScan {
    let mut mask_block = Vec::new();
    mask::write_mask_block(mask, codec, &mut mask_block);
    let mut values = Vec::with_capacity(mask.count_zeros());
    nonzero_into(scan.samples(), &mut values);
    let mut value_block = Vec::with_capacity(values.len() * 2);
    encode_values(&values, ValueTransform::DeltaZigZag, &mut Vec::new(), &mut value_block);
    EncodedScan {
        mode: Mode::I,
        residual: ResidualCoding::SpatialDelta,
        value_count: values.len(),
        mask_block,
        value_block,
    }
}

/// Intra-codes a scan: zero mask, then delta → ZigZag → PFOR over the
/// remaining samples.
pub fn encode_i(scan: &Scan, codec: ByteCompressorId) -> EncodedScan {
    encode_i_with(scan, &Bitmask::from_scan(scan), codec)
}

fn encode_p_with(
    scan: &Scan,
    mask: &Bitmask,
    state: &EncoderState,
    codec: ByteCompressorId,
    residual: ResidualCoding,
) -> Result<EncodedScan> {
    let reference = state.reference_for(scan.geometry())?;
    let mut mask_block = Vec::new();
    mask::write_mask_block(&mask.xor(&reference.mask)?, codec, &mut mask_block);
    let mut residuals = Vec::with_capacity(mask.count_zeros());
    residuals_into(scan.samples(), reference.scan.samples(), &mut residuals);
    let transform = EncoderConfig {
        residual,
        ..Default::default()
    }
    .residual_transform();
    let mut value_block = Vec::with_capacity(residuals.len() * 2);
    encode_values(&residuals, transform, &mut Vec::new(), &mut value_block);
    Ok(EncodedScan {
        mode: Mode::P,
        residual,
        value_count: residuals.len(),
        mask_block,
        value_block,
    })
}

/// Predictively codes a scan against the state's reference scan.
pub fn encode_p(
    scan: &Scan,
    state: &EncoderState,
    codec: ByteCompressorId,
    residual: ResidualCoding,
) -> Result<EncodedScan> {
    encode_p_with(scan, &Bitmask::from_scan(scan), state, codec, residual)
}

/// Row indices sampled by the heuristic: `floor(rows·k / lines)`.
pub fn trial_rows(rows: usize, lines: usize) -> impl Iterator<Item = usize> {
    (0..lines).map(move |k| rows * k / lines)
}

/// Trial value-block sizes `(I bytes, P bytes)` over the sampled rows. Mask
/// compression is not part of the trial.
pub fn trial_sizes(scan: &Scan, previous: &Scan, config: &EncoderConfig) -> (usize, usize) {
    let cols = scan.cols();
    let lines = config.mode.lines_for(scan.rows());
    let mut intra = Vec::with_capacity(lines * cols);
    let mut predicted = Vec::with_capacity(lines * cols);
    for row in trial_rows(scan.rows(), lines) {
        nonzero_into(scan.row(row), &mut intra);
        residuals_into(scan.row(row), previous.row(row), &mut predicted);
    }
    let mut scratch = Vec::with_capacity(intra.len());
    let mut out = Vec::with_capacity(intra.len() * 2);
    encode_values(&intra, ValueTransform::DeltaZigZag, &mut scratch, &mut out);
    let intra_bytes = out.len();
    out.clear();
    encode_values(&predicted, config.residual_transform(), &mut scratch, &mut out);
    (intra_bytes, out.len())
}

/// Chooses the coding mode for `scan`. The first scan of a stream is always
/// intra-coded; Auto picks P only when its trial is strictly smaller.
pub fn select_mode(scan: &Scan, state: &EncoderState, config: &EncoderConfig) -> Result<Mode> {
    let Some(reference) = state.previous.as_ref() else {
        return Ok(Mode::I);
    };
    if reference.scan.geometry() != scan.geometry() {
        return Err(Error::GeometryMismatch);
    }
    Ok(match config.mode.policy {
        ModePolicy::ForceI => Mode::I,
        ModePolicy::ForceP => Mode::P,
        ModePolicy::Auto => {
            let (intra, predicted) = trial_sizes(scan, &reference.scan, config);
            if predicted < intra {
                Mode::P
            } else {
                Mode::I
            }
        }
    })
}

/// Encodes one scan and makes it the reference for the next one.
pub fn encode(scan: &Scan, state: &mut EncoderState, config: &EncoderConfig) -> Result<EncodedScan> {
    let mode = select_mode(scan, state, config)?;
    let mask = Bitmask::from_scan(scan);
    let encoded = match mode {
        Mode::I => encode_i_with(scan, &mask, config.mask_codec),
        Mode::P => encode_p_with(scan, &mask, state, config.mask_codec, config.residual)?,
    };
    state.update_with_mask(scan.clone(), mask);
    Ok(encoded)
}

/// Reconstructs a scan and makes it the reference for the next one.
pub fn decode(encoded: &EncodedScan, state: &mut DecoderState, geometry: &Geometry) -> Result<Scan> {
    let mut pos = 0;
    let coded_mask = mask::read_mask_block(&encoded.mask_block, &mut pos, geometry.rows, geometry.cols)?;
    if pos != encoded.mask_block.len() {
        return Err(Error::TrailingBytes(encoded.mask_block.len() - pos));
    }
    let max = geometry.width.max_value();

    let (samples, mask) = match encoded.mode {
        Mode::I => {
            if encoded.residual != ResidualCoding::SpatialDelta {
                return Err(Error::InvalidMode(2));
            }
            let values = decode_values(&encoded.value_block, ValueTransform::DeltaZigZag)?;
            check_count(encoded, &coded_mask, values.len())?;
            if let Some(pos) = values.iter().position(|&v| v == 0 || v > max) {
                return Err(Error::ResidualOutOfRange { index: pos });
            }
            (mask::expand(&values, &coded_mask)?, coded_mask)
        }
        Mode::P => {
            let reference = state.reference_for(geometry)?;
            let mask = coded_mask.xor(&reference.mask)?;
            let transform = EncoderConfig {
                residual: encoded.residual,
                ..Default::default()
            }
            .residual_transform();
            let residuals = decode_values(&encoded.value_block, transform)?;
            check_count(encoded, &mask, residuals.len())?;
            let previous = reference.scan.samples();
            let mut samples = vec![0u32; geometry.len()];
            let mut next = residuals.iter();
            for (index, slot) in samples.iter_mut().enumerate() {
                if !mask.get(index) {
                    let r = *next.next().unwrap_or(&0);
                    let v = previous[index].wrapping_add(r);
                    if v == 0 {
                        return Err(Error::UnmaskedZero { index });
                    }
                    if v > max {
                        return Err(Error::ResidualOutOfRange { index });
                    }
                    *slot = v;
                }
            }
            (samples, mask)
        }
    };
    let scan = Scan::from_parts_unchecked(*geometry, samples);
    state.update_with_mask(scan.clone(), mask);
    Ok(scan)
}

fn check_count(encoded: &EncodedScan, mask: &Bitmask, decoded: usize) -> Result<()> {
    let expected = mask.count_zeros();
    if encoded.value_count != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: encoded.value_count,
        });
    }
    if decoded != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: decoded,
        });
    }
    Ok(())
}

/// Stateful encoder for one stream.
#[derive(Clone, Debug)]
pub struct Encoder {
    geometry: Geometry,
    config: EncoderConfig,
    state: EncoderState,
}

impl Encoder {
    /// A `test_lines` above the row count is lowered to the row count (every
    /// row becomes a trial line); zero is rejected.
    pub fn new(geometry: Geometry, mut config: EncoderConfig) -> Result<Self> {
        config.mode.test_lines = config.mode.test_lines.min(geometry.rows);
        config.mode.validate(geometry.rows)?;
        Ok(Encoder {
            geometry,
            config,
            state: EncoderState::new(),
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn state(&self) -> &EncoderState {
        &self.state
    }

    pub fn encode(&mut self, scan: &Scan) -> Result<EncodedScan> {
        if scan.geometry() != &self.geometry {
            return Err(Error::GeometryMismatch);
        }
        encode(scan, &mut self.state, &self.config)
    }
}

/// Stateful decoder for one stream.
#[derive(Clone, Debug)]
pub struct Decoder {
    geometry: Geometry,
    state: DecoderState,
}

impl Decoder {
    pub fn new(geometry: Geometry) -> Self {
        Decoder {
            geometry,
            state: DecoderState::new(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn decode(&mut self, encoded: &EncodedScan) -> Result<Scan> {
        decode(encoded, &mut self.state, &self.geometry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::{SampleWidth, ScanType};
    use rand::{Rng, SeedableRng};

    fn geometry(rows: usize, cols: usize) -> Geometry {
        Geometry::new(rows, cols, SampleWidth::U32, ScanType::Range).unwrap()
    }

    fn random_scan(rng: &mut impl Rng, g: Geometry, sparsity: f64) -> Scan {
        let samples = (0..g.len())
            .map(|_| if rng.gen_bool(sparsity) { 0 } else { rng.gen_range(1..=g.width.max_value()) })
            .collect();
        Scan::new(g, samples).unwrap()
    }

    fn roundtrip(encoded: &EncodedScan) -> EncodedScan {
        EncodedScan::from_bytes(&encoded.to_bytes()).unwrap()
    }

    #[test]
    fn all_zero_scan() {
        let g = geometry(4, 8);
        let scan = Scan::zeros(g);
        let enc = encode_i(&scan, ByteCompressorId::Zstd);
        assert_eq!(enc.value_count, 0);
        assert_eq!(pfor::pfor_decode(&enc.value_block).unwrap(), Vec::<u32>::new());
        let mut pos = 0;
        let mask = mask::read_mask_block(&enc.mask_block, &mut pos, 4, 8).unwrap();
        assert_eq!(mask, Bitmask::ones(4, 8));
        let mut state = DecoderState::new();
        assert_eq!(decode(&roundtrip(&enc), &mut state, &g).unwrap(), scan);
    }

    #[test]
    fn constant_scan_trace() {
        let g = geometry(4, 8);
        let scan = Scan::new(g, vec![1000; 32]).unwrap();
        let enc = encode_i(&scan, ByteCompressorId::Zstd);
        let codes = pfor::pfor_decode(&enc.value_block).unwrap();
        let mut expected = vec![0u32; 32];
        expected[0] = 2000;
        assert_eq!(codes, expected);
        let blocks = pfor::blocks(&enc.value_block).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].reference, 0);
        assert_eq!(blocks[0].bit_width, 0);
        assert_eq!(blocks[0].exceptions, vec![(0, 2000)]);
        let mut state = DecoderState::new();
        assert_eq!(decode(&enc, &mut state, &g).unwrap(), scan);
    }

    #[test]
    fn identical_scan_p_is_smaller() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = geometry(16, 64);
        let scan = Scan::new(g, (0..g.len()).map(|i| 5000 + (i as u32 * 37) % 900).collect()).unwrap();
        let state = EncoderState::with_previous(scan.clone());
        let p = encode_p(&scan, &state, ByteCompressorId::Zstd, ResidualCoding::SpatialDelta).unwrap();
        let codes = pfor::pfor_decode(&p.value_block).unwrap();
        assert!(codes.iter().all(|&c| c == 0));
        let i = encode_i(&scan, ByteCompressorId::Zstd);
        assert!(p.encoded_len() < i.encoded_len());
        let noisy = random_scan(&mut rng, g, 0.2);
        let state = EncoderState::with_previous(noisy.clone());
        let p = encode_p(&noisy, &state, ByteCompressorId::Zstd, ResidualCoding::SpatialDelta).unwrap();
        assert!(p.encoded_len() < encode_i(&noisy, ByteCompressorId::Zstd).encoded_len());
    }

    #[test]
    fn p_against_all_zero_previous() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let g = geometry(8, 32);
        let current = random_scan(&mut rng, g, 0.3);
        let state = EncoderState::with_previous(Scan::zeros(g));
        let enc = encode_p(&current, &state, ByteCompressorId::Stored, ResidualCoding::Direct).unwrap();
        let mut pos = 0;
        let xored = mask::read_mask_block(&enc.mask_block, &mut pos, 8, 32).unwrap();
        let expected = Bitmask::from_scan(&current).xor(&Bitmask::ones(8, 32)).unwrap();
        assert_eq!(xored, expected);
        let residuals = decode_values(&enc.value_block, ValueTransform::ZigZag).unwrap();
        assert_eq!(residuals, mask::compact(current.samples(), &Bitmask::from_scan(&current)).unwrap());
    }

    #[test]
    fn random_i_and_p_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for width in [SampleWidth::U8, SampleWidth::U16, SampleWidth::U32] {
            let g = Geometry::new(7, 33, width, ScanType::Signal).unwrap();
            let prev = random_scan(&mut rng, g, 0.4);
            let cur = random_scan(&mut rng, g, 0.1);
            let i = encode_i(&cur, ByteCompressorId::Deflate);
            assert_eq!(decode(&roundtrip(&i), &mut DecoderState::new(), &g).unwrap(), cur);
            for residual in [ResidualCoding::SpatialDelta, ResidualCoding::Direct] {
                let state = EncoderState::with_previous(prev.clone());
                let p = encode_p(&cur, &state, ByteCompressorId::Zstd, residual).unwrap();
                let mut dec = DecoderState::with_previous(prev.clone());
                assert_eq!(decode(&roundtrip(&p), &mut dec, &g).unwrap(), cur);
                assert_eq!(dec.previous_scan(), Some(&cur));
            }
        }
    }

    #[test]
    fn stream_of_mixed_modes_roundtrips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let g = geometry(12, 40);
        let mut frames = vec![random_scan(&mut rng, g, 0.3)];
        for _ in 0..8 {
            let prev = frames.last().unwrap().samples().to_vec();
            let next: Vec<u32> = prev
                .iter()
                .map(|&v| if v == 0 || rng.gen_bool(0.05) { 0 } else { v.saturating_add(rng.gen_range(0..3)) })
                .collect();
            frames.push(Scan::new(g, next).unwrap());
            frames.push(random_scan(&mut rng, g, 0.5));
        }
        for policy in [ModePolicy::Auto, ModePolicy::ForceI, ModePolicy::ForceP] {
            let mut enc = Encoder::new(g, EncoderConfig::with_policy(policy)).unwrap();
            let mut dec = Decoder::new(g);
            for (n, frame) in frames.iter().enumerate() {
                let e = enc.encode(frame).unwrap();
                if n == 0 {
                    assert_eq!(e.mode, Mode::I);
                }
                assert_eq!(&dec.decode(&roundtrip(&e)).unwrap(), frame);
            }
        }
    }

    #[test]
    fn select_mode_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let g = geometry(16, 128);
        let config = EncoderConfig::default();
        let base: Vec<u32> = (0..g.len()).map(|i| 20_000 + ((i % 128) as u32 * 97) % 5000).collect();
        let first = Scan::new(g, base.clone()).unwrap();
        assert_eq!(select_mode(&first, &EncoderState::new(), &config).unwrap(), Mode::I);
        let noisy = Scan::new(g, base.iter().map(|&v| v + rng.gen_range(0..3)).collect()).unwrap();
        let state = EncoderState::with_previous(first.clone());
        assert_eq!(select_mode(&noisy, &state, &config).unwrap(), Mode::P);
        let unrelated = random_scan(&mut rng, g, 0.0);
        let state = EncoderState::with_previous(random_scan(&mut rng, g, 0.0));
        assert_eq!(select_mode(&unrelated, &state, &config).unwrap(), Mode::I);
        let forced = EncoderConfig::with_policy(ModePolicy::ForceP);
        assert_eq!(select_mode(&unrelated, &state, &forced).unwrap(), Mode::P);
        assert_eq!(select_mode(&unrelated, &EncoderState::new(), &forced).unwrap(), Mode::I);
    }

    #[test]
    fn trial_rows_are_evenly_spaced() {
        assert_eq!(trial_rows(128, 4).collect::<Vec<_>>(), vec![0, 32, 64, 96]);
        assert_eq!(trial_rows(5, 4).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(trial_rows(1, 1).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = geometry(2, 4);
        let scan = Scan::zeros(g);
        assert!(matches!(
            encode_p(&scan, &EncoderState::new(), ByteCompressorId::Zstd, ResidualCoding::SpatialDelta),
            Err(Error::MissingReference)
        ));
        let other = Scan::zeros(geometry(4, 2));
        assert!(matches!(
            encode_p(&scan, &EncoderState::with_previous(other), ByteCompressorId::Zstd, ResidualCoding::SpatialDelta),
            Err(Error::GeometryMismatch)
        ));
        let p = encode_p(&scan, &EncoderState::with_previous(scan.clone()), ByteCompressorId::Zstd, ResidualCoding::SpatialDelta).unwrap();
        assert!(matches!(decode(&p, &mut DecoderState::new(), &g), Err(Error::MissingReference)));
        let lines = |test_lines| EncoderConfig {
            mode: ModeConfig { policy: ModePolicy::Auto, test_lines },
            ..Default::default()
        };
        assert!(Encoder::new(g, lines(0)).is_err());
        assert_eq!(Encoder::new(g, lines(3)).unwrap().config().mode.test_lines, 2);
        assert!(ModeConfig { policy: ModePolicy::Auto, test_lines: 3 }.validate(2).is_err());
        assert!(matches!(EncodedScan::from_bytes(&[4, 0]), Err(Error::InvalidMode(4))));
        assert!(matches!(EncodedScan::from_bytes(&[]), Err(Error::Truncated)));
        let mut bytes = encode_i(&scan, ByteCompressorId::Zstd).to_bytes();
        bytes.push(0);
        assert!(matches!(EncodedScan::from_bytes(&bytes), Err(Error::TrailingBytes(1))));
    }

    #[test]
    fn decoder_rejects_inconsistent_payloads() {
        let g = Geometry::new(1, 4, SampleWidth::U8, ScanType::Reflectivity).unwrap();
        let scan = Scan::new(g, vec![0, 10, 20, 0]).unwrap();
        let mut enc = encode_i(&scan, ByteCompressorId::Stored);
        enc.value_count = 3;
        assert!(matches!(decode(&enc, &mut DecoderState::new(), &g), Err(Error::LengthMismatch { .. })));

        // Value out of the 1-byte sample range.
        let mut enc = encode_i(&scan, ByteCompressorId::Stored);
        let mut block = Vec::new();
        encode_values(&[10, 300], ValueTransform::DeltaZigZag, &mut Vec::new(), &mut block);
        enc.value_block = block;
        assert!(matches!(decode(&enc, &mut DecoderState::new(), &g), Err(Error::ResidualOutOfRange { .. })));

        // A residual that reconstructs to zero under a clear mask bit.
        let state = EncoderState::with_previous(scan.clone());
        let mut p = encode_p(&scan, &state, ByteCompressorId::Stored, ResidualCoding::Direct).unwrap();
        let mut block = Vec::new();
        encode_values(&[(-10i32) as u32, 0], ValueTransform::ZigZag, &mut Vec::new(), &mut block);
        p.value_block = block;
        let mut dec = DecoderState::with_previous(scan.clone());
        assert!(matches!(decode(&p, &mut dec, &g), Err(Error::UnmaskedZero { index: 1 })));
    }
}
