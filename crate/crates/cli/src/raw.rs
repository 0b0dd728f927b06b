//! Raw little-endian frame dumps: `frames × rows × cols` elements of one
//! type, optionally with padding between frames (a stride larger than the
//! frame size).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use jiffy::{dequantize, quantize, Geometry, QuantizationSpec, RangeImage, SampleWidth, Scan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ElementType {
    F32,
    U32,
    U16,
    U8,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::F32 | ElementType::U32 => 4,
            ElementType::U16 => 2,
            ElementType::U8 => 1,
        }
    }

    /// Natural sample width for scans read from this element type.
    pub fn sample_width(self) -> SampleWidth {
        match self {
            ElementType::F32 | ElementType::U32 => SampleWidth::U32,
            ElementType::U16 => SampleWidth::U16,
            ElementType::U8 => SampleWidth::U8,
        }
    }

    /// Element type that holds samples of `width` without conversion.
    pub fn for_width(width: SampleWidth) -> Self {
        match width {
            SampleWidth::U8 => ElementType::U8,
            SampleWidth::U16 => ElementType::U16,
            SampleWidth::U32 => ElementType::U32,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RawLayout {
    pub rows: usize,
    pub cols: usize,
    pub etype: ElementType,
    /// Bytes from one frame start to the next; defaults to the frame size.
    pub stride: Option<usize>,
}

impl RawLayout {
    pub fn frame_bytes(&self) -> usize {
        self.rows * self.cols * self.etype.size()
    }

    fn stride(&self) -> Result<usize> {
        let stride = self.stride.unwrap_or(self.frame_bytes());
        ensure!(
            stride >= self.frame_bytes(),
            "frame stride {stride} is smaller than the frame size {}",
            self.frame_bytes()
        );
        Ok(stride)
    }
}

/// Decoded contents of a raw file.
pub enum RawFrames {
    /// Real-valued measurements; zero, negative and non-finite mean invalid.
    Real(Vec<RangeImage>),
    Integer(Vec<Vec<u32>>),
}

impl RawFrames {
    /// Scans in the quantized domain. Integer inputs are taken as already
    /// quantized and must fit the sample width.
    pub fn to_scans(&self, geometry: Geometry, spec: &QuantizationSpec) -> Result<Vec<Scan>> {
        match self {
            RawFrames::Real(images) => images
                .iter()
                .enumerate()
                .map(|(t, img)| quantize(img, spec, geometry.scan_type).with_context(|| format!("frame {t}")))
                .collect(),
            RawFrames::Integer(frames) => frames
                .iter()
                .enumerate()
                .map(|(t, f)| Scan::new(geometry, f.clone()).with_context(|| format!("frame {t}")))
                .collect(),
        }
    }
}

pub fn read(path: &Path, layout: &RawLayout) -> Result<RawFrames> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .with_context(|| format!("reading {}", path.display()))?;
    parse(&bytes, layout)
}

pub fn parse(bytes: &[u8], layout: &RawLayout) -> Result<RawFrames> {
    ensure!(layout.rows > 0 && layout.cols > 0, "shape must be at least 1x1");
    let stride = layout.stride()?;
    let frame = layout.frame_bytes();
    // The last frame may omit its trailing padding.
    let count = if bytes.is_empty() { 0 } else { (bytes.len() + stride - frame) / stride };
    if bytes.len() != count.saturating_sub(1) * stride + if count > 0 { frame } else { 0 }
        && bytes.len() != count * stride
    {
        bail!(
            "input is {} bytes, not a whole number of {}x{} {:?} frames (stride {stride})",
            bytes.len(),
            layout.rows,
            layout.cols,
            layout.etype
        );
    }
    let frames = (0..count).map(|t| &bytes[t * stride..t * stride + frame]);
    Ok(match layout.etype {
        ElementType::F32 => RawFrames::Real(
            frames
                .map(|f| {
                    let data = f
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect();
                    RangeImage::new(layout.rows, layout.cols, data).expect("shape checked")
                })
                .collect(),
        ),
        ElementType::U32 => RawFrames::Integer(
            frames
                .map(|f| f.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
                .collect(),
        ),
        ElementType::U16 => RawFrames::Integer(
            frames
                .map(|f| f.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect())
                .collect(),
        ),
        ElementType::U8 => RawFrames::Integer(frames.map(|f| f.iter().map(|&b| b as u32).collect()).collect()),
    })
}

/// Streams frames to a raw file.
pub struct RawWriter {
    out: BufWriter<File>,
    etype: ElementType,
}

impl RawWriter {
    pub fn create(path: &Path, etype: ElementType) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RawWriter {
            out: BufWriter::new(file),
            etype,
        })
    }

    /// Writes a scan. Float output is dequantized, with invalid samples
    /// written as 0.0; integer output must hold every sample.
    pub fn write_scan(&mut self, scan: &Scan, spec: &QuantizationSpec) -> Result<()> {
        match self.etype {
            ElementType::F32 => self.write_real(&dequantize(scan, spec)),
            etype => {
                let max = match etype {
                    ElementType::U8 => u8::MAX as u32,
                    ElementType::U16 => u16::MAX as u32,
                    _ => u32::MAX,
                };
                if let Some(v) = scan.samples().iter().find(|&&v| v > max) {
                    bail!("sample {v} does not fit in {etype:?}");
                }
                for &v in scan.samples() {
                    match etype {
                        ElementType::U8 => self.out.write_all(&[v as u8])?,
                        ElementType::U16 => self.out.write_all(&(v as u16).to_le_bytes())?,
                        _ => self.out.write_all(&v.to_le_bytes())?,
                    }
                }
                Ok(())
            }
        }
    }

    pub fn write_real(&mut self, image: &RangeImage) -> Result<()> {
        ensure!(self.etype == ElementType::F32, "real-valued frames need --etype f32");
        for &v in &image.data {
            let v = if v.is_finite() { v as f32 } else { 0.0 };
            self.out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("shape `{s}` must look like ROWSxCOLS"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0 && n <= u16::MAX as usize)
            .ok_or_else(|| format!("`{v}` is not a dimension in 1..=65535"))
    };
    Ok((parse(r)?, parse(c)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(frames: RawFrames) -> usize {
        match frames {
            RawFrames::Real(v) => v.len(),
            RawFrames::Integer(v) => v.len(),
        }
    }

    fn layout(etype: ElementType, stride: Option<usize>) -> RawLayout {
        RawLayout {
            rows: 1,
            cols: 2,
            etype,
            stride,
        }
    }

    #[test]
    fn frame_counting() {
        let l = layout(ElementType::U16, None);
        assert_eq!(count(parse(&[], &l).unwrap()), 0);
        assert_eq!(count(parse(&[1, 0, 2, 0, 3, 0, 4, 0], &l).unwrap()), 2);
        assert!(parse(&[1, 0, 2], &l).is_err());
        // Stride 6: two frames with 2 padding bytes between them.
        let l = layout(ElementType::U16, Some(6));
        match parse(&[1, 0, 2, 0, 9, 9, 3, 0, 4, 0], &l).unwrap() {
            RawFrames::Integer(f) => assert_eq!(f, vec![vec![1, 2], vec![3, 4]]),
            RawFrames::Real(_) => unreachable!(),
        }
        assert_eq!(count(parse(&[1, 0, 2, 0, 9, 9, 3, 0, 4, 0, 9, 9], &l).unwrap()), 2);
        assert!(parse(&[1, 0, 2, 0, 9], &l).is_err());
        assert!(parse(&[0; 8], &layout(ElementType::U16, Some(2))).is_err());
    }

    #[test]
    fn shapes() {
        assert_eq!(parse_shape("128x1024").unwrap(), (128, 1024));
        assert!(parse_shape("128").is_err());
        assert!(parse_shape("0x4").is_err());
        assert!(parse_shape("4x70000").is_err());
    }
}
