//! Lossless compression of LiDAR scan sequences.
//!
//! Scans are 2D grids of unsigned integer samples (quantized ranges or
//! sensor attributes) in which zero marks a missing return. Each scan is
//! coded either on its own (I) or as a residual against the previous scan
//! (P):
//!
//! 1. a one-bit-per-sample zero mask, byte-packed and handed to a
//!    general-purpose compressor (XORed with the previous mask for P scans);
//! 2. the nonzero samples (or temporal residuals), flattened row-major;
//! 3. spatial delta, ZigZag, and patched frame-of-reference bitpacking.
//!
//! A cheap trial compression of a few scanlines picks the mode per scan.
//! [`container`] wraps the per-scan payloads in a checksummed stream format.
//!
//! ```
//! use jiffy::{Decoder, Encoder, EncoderConfig, Geometry, SampleWidth, Scan, ScanType};
//!
//! let geometry = Geometry::new(2, 4, SampleWidth::U16, ScanType::Range).unwrap();
//! let scan = Scan::new(geometry, vec![0, 1200, 1201, 1199, 900, 0, 0, 905]).unwrap();
//!
//! let mut encoder = Encoder::new(geometry, EncoderConfig::default()).unwrap();
//! let encoded = encoder.encode(&scan).unwrap();
//! let mut decoder = Decoder::new(geometry);
//! assert_eq!(decoder.decode(&encoded).unwrap(), scan);
//! ```

pub mod analysis;
pub mod codec;
pub mod container;
pub mod error;
pub mod exec;
pub mod intcodec;
pub mod mask;
pub mod scan;
pub mod synth;

pub use codec::{
    decode, encode, encode_i, encode_p, select_mode, Decoder, DecoderState, EncodedScan, Encoder, EncoderConfig,
    EncoderState, Mode, ModeConfig, ModePolicy, ResidualCoding,
};
pub use container::{read_stream, write_stream, ScanReader, StreamHeader, StreamReader, StreamWriter};
pub use error::{Error, Result};
pub use exec::Execution;
pub use mask::{Bitmask, ByteCompressorId};
pub use scan::{
    canonicalize, dequantize, quantize, BeamLayout, Geometry, QuantizationSpec, RangeImage, SampleWidth, Scan,
    ScanType,
};
