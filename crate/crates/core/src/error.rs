use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // Construction / argument errors.
    #[error("invalid scan shape {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize },
    #[error("expected {expected} samples, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("sample {value} at index {index} does not fit in {width} byte(s)")]
    SampleOutOfRange { index: usize, value: u32, width: u8 },
    #[error("invalid sample width {0} (must be 1, 2 or 4)")]
    InvalidSampleWidth(u8),
    #[error("unknown scan type code {0}")]
    InvalidScanType(u8),
    #[error("quantization precision must be at least 1 micrometer")]
    InvalidPrecision,
    #[error("invalid beam layout: {0}")]
    InvalidLayout(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("scan geometry does not match the stream")]
    GeometryMismatch,
    #[error("test_lines must be between 1 and the row count ({rows}), got {test_lines}")]
    InvalidTestLines { test_lines: usize, rows: usize },

    // Corrupt-stream errors raised while decoding.
    #[error("stream truncated")]
    Truncated,
    #[error("varint exceeds the target integer width")]
    VarintOverflow,
    #[error("bit width {0} exceeds 32")]
    BitWidth(u8),
    #[error("exception count {count} exceeds block length {len}")]
    ExceptionCount { count: usize, len: usize },
    #[error("exception position {position} invalid for block of {len} values")]
    ExceptionPosition { position: u8, len: usize },
    #[error("decoded value overflows 32 bits")]
    ValueOverflow,
    #[error("delta prefix sum leaves the u32 range at index {index}")]
    DeltaOverflow { index: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("{0} trailing byte(s) after block")]
    TrailingBytes(usize),
    #[error("unknown byte compressor id {0}")]
    UnknownCodec(u8),
    #[error("byte compressor failed: {0}")]
    CompressedBlock(String),
    #[error("mask padding bits are not zero")]
    MaskPadding,
    #[error("invalid mode byte {0:#04x}")]
    InvalidMode(u8),
    #[error("predicted scan without a reference scan")]
    MissingReference,
    #[error("reconstructed sample at index {index} is outside the sample range")]
    ResidualOutOfRange { index: usize },
    #[error("zero value at unmasked index {index}")]
    UnmaskedZero { index: usize },
    #[error("decoded frame {index} differs from the input")]
    RoundtripMismatch { index: usize },

    // Container errors.
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("stream header truncated")]
    HeaderTruncated,
    #[error("stream header checksum mismatch")]
    HeaderChecksum,
    #[error("frame {index}: truncated")]
    FrameTruncated { index: u32 },
    #[error("frame {index}: checksum mismatch")]
    FrameChecksum { index: u32 },
    #[error("frame {index}: declared length {len} exceeds the limit for this stream")]
    FrameTooLarge { index: u32, len: u32 },
    #[error("frame {index}: {source}")]
    Frame {
        index: u32,
        #[source]
        source: Box<Error>,
    },
    #[error("stream declared {declared} frames but {written} were written")]
    FrameCountMismatch { declared: u32, written: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Frame index carried by container-level errors, if any.
    pub fn frame_index(&self) -> Option<u32> {
        match self {
            Error::FrameTruncated { index }
            | Error::FrameChecksum { index }
            | Error::FrameTooLarge { index, .. }
            | Error::Frame { index, .. } => Some(*index),
            _ => None,
        }
    }

    /// True for errors caused by malformed or damaged encoded data.
    pub fn is_corruption(&self) -> bool {
        !matches!(
            self,
            Error::InvalidShape { .. }
                | Error::ShapeMismatch { .. }
                | Error::SampleOutOfRange { .. }
                | Error::InvalidSampleWidth(_)
                | Error::InvalidPrecision
                | Error::InvalidLayout(_)
                | Error::InvalidArgument(_)
                | Error::GeometryMismatch
                | Error::InvalidTestLines { .. }
                | Error::FrameCountMismatch { .. }
                | Error::Io(_)
        )
    }
}
