//! Stream container: a fixed header followed by length-prefixed,
//! CRC-checked frames, one encoded scan per frame.
//!
//! ```text
//! header (24 bytes, little-endian)
//!   0  magic         "JFY1"
//!   4  version       u8 = 1
//!   5  scan_type     u8
//!   6  rows          u16
//!   8  cols          u16
//!  10  sample_width  u8 (1, 2 or 4)
//!  11  precision_um  u32
//!  15  mask_codec    u8
//!  16  frame_count   u32, 0xFFFFFFFF = unknown (read to end of stream)
//!  20  header_crc    u32, CRC-32 of bytes 0..20
//! frame
//!   0  payload_len   u32
//!   4  payload_crc   u32, CRC-32 (IEEE) of the payload
//!   8  payload       encoded scan
//! ```

use std::io::{self, Read, Write};

use crate::codec::{Decoder, EncodedScan};
use crate::error::{Error, Result};
use crate::mask::ByteCompressorId;
use crate::scan::{Geometry, QuantizationSpec, SampleWidth, Scan, ScanType};

pub const MAGIC: [u8; 4] = *b"JFY1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;
pub const FRAME_PREFIX_LEN: usize = 8;
/// `frame_count` value for streams of unknown length.
pub const STREAMING: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub scan_type: ScanType,
    pub rows: u16,
    pub cols: u16,
    pub width: SampleWidth,
    pub precision_um: u32,
    pub mask_codec: ByteCompressorId,
    /// `None` when the writer does not know the frame count up front.
    pub frame_count: Option<u32>,
}

impl StreamHeader {
    pub fn new(
        geometry: &Geometry,
        precision_um: u32,
        mask_codec: ByteCompressorId,
        frame_count: Option<u32>,
    ) -> Result<Self> {
        let rows = u16::try_from(geometry.rows).map_err(|_| Error::InvalidShape {
            rows: geometry.rows,
            cols: geometry.cols,
        })?;
        let cols = u16::try_from(geometry.cols).map_err(|_| Error::InvalidShape {
            rows: geometry.rows,
            cols: geometry.cols,
        })?;
        if precision_um == 0 {
            return Err(Error::InvalidPrecision);
        }
        if frame_count == Some(STREAMING) {
            return Err(Error::FrameCountMismatch {
                declared: STREAMING,
                written: 0,
            });
        }
        Ok(StreamHeader {
            scan_type: geometry.scan_type,
            rows,
            cols,
            width: geometry.width,
            precision_um,
            mask_codec,
            frame_count,
        })
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            rows: self.rows as usize,
            cols: self.cols as usize,
            width: self.width,
            scan_type: self.scan_type,
        }
    }

    pub fn quantization(&self) -> QuantizationSpec {
        QuantizationSpec {
            precision_um: self.precision_um,
            width: self.width,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4] = VERSION;
        out[5] = self.scan_type.code();
        out[6..8].copy_from_slice(&self.rows.to_le_bytes());
        out[8..10].copy_from_slice(&self.cols.to_le_bytes());
        out[10] = self.width.bytes();
        out[11..15].copy_from_slice(&self.precision_um.to_le_bytes());
        out[15] = self.mask_codec.id();
        out[16..20].copy_from_slice(&self.frame_count.unwrap_or(STREAMING).to_le_bytes());
        let crc = crc32fast::hash(&out[..20]);
        out[20..24].copy_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Result<Self> {
        if bytes[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let crc = u32::from_le_bytes([bytes[20], bytes[21], bytes[22], bytes[23]]);
        if crc32fast::hash(&bytes[..20]) != crc {
            return Err(Error::HeaderChecksum);
        }
        let rows = u16::from_le_bytes([bytes[6], bytes[7]]);
        let cols = u16::from_le_bytes([bytes[8], bytes[9]]);
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape {
                rows: rows as usize,
                cols: cols as usize,
            });
        }
        let precision_um = u32::from_le_bytes([bytes[11], bytes[12], bytes[13], bytes[14]]);
        if precision_um == 0 {
            return Err(Error::InvalidPrecision);
        }
        let frame_count = match u32::from_le_bytes([bytes[16], bytes[17], bytes[18], bytes[19]]) {
            STREAMING => None,
            n => Some(n),
        };
        Ok(StreamHeader {
            scan_type: ScanType::from_code(bytes[5])?,
            rows,
            cols,
            width: SampleWidth::from_bytes(bytes[10])?,
            precision_um,
            mask_codec: ByteCompressorId::from_id(bytes[15])?,
            frame_count,
        })
    }

    /// Upper bound on a legitimate frame payload for this geometry.
    fn max_frame_len(&self) -> u64 {
        let samples = self.rows as u64 * self.cols as u64;
        // Mask stored raw, every value an exception at full width, plus
        // per-block headers.
        1024 + samples.div_ceil(8) + samples * 11
    }
}

pub struct StreamWriter<W: Write> {
    inner: W,
    header: StreamHeader,
    written: u32,
    buf: Vec<u8>,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, header: StreamHeader) -> Result<Self> {
        inner.write_all(&header.to_bytes())?;
        Ok(StreamWriter {
            inner,
            header,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn frames_written(&self) -> u32 {
        self.written
    }

    pub fn write_frame(&mut self, frame: &EncodedScan) -> Result<()> {
        if self.header.frame_count.is_some_and(|n| self.written >= n) || self.written == STREAMING - 1 {
            return Err(Error::FrameCountMismatch {
                declared: self.header.frame_count.unwrap_or(STREAMING),
                written: self.written + 1,
            });
        }
        self.buf.clear();
        frame.write_to(&mut self.buf);
        let len = u32::try_from(self.buf.len()).map_err(|_| {
            Error::Io(io::Error::new(io::ErrorKind::InvalidInput, "frame exceeds 4 GiB"))
        })?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(&crc32fast::hash(&self.buf).to_le_bytes())?;
        self.inner.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the sink. Fails if fewer frames were written
    /// than the header declared.
    pub fn finish(mut self) -> Result<W> {
        if let Some(declared) = self.header.frame_count {
            if declared != self.written {
                return Err(Error::FrameCountMismatch {
                    declared,
                    written: self.written,
                });
            }
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a complete stream in one call.
pub fn write_stream<'a, W: Write>(
    sink: W,
    header: StreamHeader,
    frames: impl IntoIterator<Item = &'a EncodedScan>,
) -> Result<W> {
    let mut writer = StreamWriter::new(sink, header)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    writer.finish()
}

/// Sequential frame reader; yields each frame's encoded scan in order.
pub struct StreamReader<R: Read> {
    inner: R,
    header: StreamHeader,
    next_index: u32,
    done: bool,
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut bytes = [0u8; HEADER_LEN];
        read_exact_or(&mut inner, &mut bytes, Error::HeaderTruncated)?;
        let header = StreamHeader::parse(&bytes)?;
        Ok(StreamReader {
            inner,
            header,
            next_index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Reads the next frame's raw payload (CRC verified).
    pub fn next_payload(&mut self) -> Option<Result<Vec<u8>>> {
        if self.done {
            return None;
        }
        let index = self.next_index;
        if self.header.frame_count.is_some_and(|n| index >= n) {
            self.done = true;
            return None;
        }
        let result = self.read_payload(index);
        match &result {
            Ok(None) => {
                self.done = true;
                return None;
            }
            Ok(Some(_)) => self.next_index += 1,
            Err(_) => self.done = true,
        }
        result.transpose()
    }

    fn read_payload(&mut self, index: u32) -> Result<Option<Vec<u8>>> {
        let mut prefix = [0u8; FRAME_PREFIX_LEN];
        let got = read_up_to(&mut self.inner, &mut prefix)?;
        if got == 0 && self.header.frame_count.is_none() {
            return Ok(None);
        }
        if got < FRAME_PREFIX_LEN {
            return Err(Error::FrameTruncated { index });
        }
        let len = u32::from_le_bytes([prefix[0], prefix[1], prefix[2], prefix[3]]);
        let crc = u32::from_le_bytes([prefix[4], prefix[5], prefix[6], prefix[7]]);
        if len as u64 > self.header.max_frame_len() {
            return Err(Error::FrameTooLarge { index, len });
        }
        let mut payload = Vec::new();
        (&mut self.inner).take(len as u64).read_to_end(&mut payload)?;
        if payload.len() != len as usize {
            return Err(Error::FrameTruncated { index });
        }
        if crc32fast::hash(&payload) != crc {
            return Err(Error::FrameChecksum { index });
        }
        Ok(Some(payload))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<EncodedScan>;

    fn next(&mut self) -> Option<Self::Item> {
        let index = self.next_index;
        let payload = self.next_payload()?;
        Some(payload.and_then(|p| {
            EncodedScan::from_bytes(&p).map_err(|e| Error::Frame {
                index,
                source: Box::new(e),
            })
        }))
    }
}

/// Opens a stream for reading.
pub fn read_stream<R: Read>(source: R) -> Result<(StreamHeader, StreamReader<R>)> {
    let reader = StreamReader::new(source)?;
    Ok((*reader.header(), reader))
}

/// Reads and decodes every scan of a stream, holding one reference scan at
/// a time.
pub struct ScanReader<R: Read> {
    frames: StreamReader<R>,
    decoder: Decoder,
}

impl<R: Read> ScanReader<R> {
    pub fn new(source: R) -> Result<Self> {
        let frames = StreamReader::new(source)?;
        let decoder = Decoder::new(frames.header().geometry());
        Ok(ScanReader { frames, decoder })
    }

    pub fn header(&self) -> &StreamHeader {
        self.frames.header()
    }
}

impl<R: Read> Iterator for ScanReader<R> {
    type Item = Result<Scan>;

    fn next(&mut self) -> Option<Self::Item> {
        let index = self.frames.next_index;
        let frame = self.frames.next()?;
        Some(frame.and_then(|f| {
            self.decoder.decode(&f).map_err(|e| Error::Frame {
                index,
                source: Box::new(e),
            })
        }))
    }
}

fn read_up_to<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn read_exact_or<R: Read>(reader: &mut R, buf: &mut [u8], short: Error) -> Result<()> {
    if read_up_to(reader, buf)? < buf.len() {
        return Err(short);
    }
    Ok(())
}
