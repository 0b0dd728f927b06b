//! `jiffy`: compress, inspect and benchmark LiDAR scan sequences.
//!
//! Exit status: 0 on success, 1 for usage and I/O errors, 2 when a
//! container is corrupt or a verification finds a mismatch.

mod raw;
mod report;

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use jiffy::analysis::{ablate, bench, heuristic_eval, sweep};
use jiffy::synth::{SceneKind, Synth, SynthConfig};
use jiffy::{
    ByteCompressorId, Encoder, EncoderConfig, Execution, Geometry, Mode, ModeConfig, ModePolicy, QuantizationSpec,
    ResidualCoding, SampleWidth, Scan, ScanReader, ScanType, StreamHeader, StreamWriter,
};

use raw::{ElementType, RawFrames, RawLayout, RawWriter};
use report::Format;

#[derive(Parser)]
#[command(name = "jiffy", version, about = "Lossless compression for LiDAR range and attribute scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a raw frame dump into a container.
    Compress(CompressArgs),
    /// Expand a container back into a raw frame dump.
    Decompress(DecompressArgs),
    /// Check that a container reproduces a raw frame dump exactly.
    Verify(VerifyArgs),
    /// Time in-memory encode and decode; reports ratio, scans/s and points/s.
    Bench(BenchArgs),
    /// Compress one real-valued sequence at several quantization precisions.
    Sweep(SweepArgs),
    /// Compare the codec against progressively ablated pipelines.
    Ablate(AnalysisArgs),
    /// Score the I/P mode heuristic against brute-force dual encoding.
    HeuristicEval(AnalysisArgs),
    /// Write a deterministic synthetic sequence as a raw frame dump.
    Gen(GenArgs),
}

/// How to interpret a raw input file.
#[derive(Args, Clone)]
struct RawArgs {
    /// Frame shape, ROWSxCOLS.
    #[arg(long, value_parser = raw::parse_shape)]
    shape: (usize, usize),
    /// Element type of the raw file (little-endian).
    #[arg(long, value_enum, default_value = "f32")]
    etype: ElementType,
    /// Bytes between frame starts, if frames are padded.
    #[arg(long)]
    stride: Option<usize>,
}

impl RawArgs {
    fn layout(&self) -> RawLayout {
        RawLayout {
            rows: self.shape.0,
            cols: self.shape.1,
            etype: self.etype,
            stride: self.stride,
        }
    }
}

/// Quantization and geometry of the scans built from raw input.
#[derive(Args, Clone)]
struct ScanArgs {
    #[arg(long, default_value = "range")]
    scan_type: ScanType,
    /// Quantization step in micrometers. Integer inputs are taken as already
    /// quantized; the step is recorded so float output can be restored.
    #[arg(long, default_value_t = 1000)]
    precision_um: u32,
    /// Stored sample width in bytes (1, 2 or 4); defaults to the element size.
    #[arg(long, value_parser = parse_width)]
    width: Option<SampleWidth>,
}

#[derive(Args, Clone)]
struct CodecArgs {
    /// Scan mode policy: auto, i or p.
    #[arg(long, default_value = "auto")]
    mode: ModePolicy,
    /// Byte compressor for the invalid-sample mask: zstd, deflate or stored.
    #[arg(long, default_value = "zstd")]
    mask_codec: ByteCompressorId,
    /// Rows trial-encoded by the auto mode heuristic.
    #[arg(long)]
    test_lines: Option<usize>,
}

impl CodecArgs {
    fn config(&self) -> EncoderConfig {
        let mut mode = ModeConfig::new(self.mode);
        if let Some(lines) = self.test_lines {
            mode.test_lines = lines;
        }
        EncoderConfig {
            mode,
            mask_codec: self.mask_codec,
            residual: ResidualCoding::default(),
        }
    }
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    raw: RawArgs,
    #[command(flatten)]
    scan: ScanArgs,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long)]
    output: PathBuf,
    /// Decode the written container and compare with the input.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Output element type; f32 dequantizes range scans to meters.
    /// Defaults to the stored sample width.
    #[arg(long, value_enum)]
    etype: Option<ElementType>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Raw frame dump the container was made from.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    container: PathBuf,
    /// Frame shape of the raw file; defaults to the container's.
    #[arg(long, value_parser = raw::parse_shape)]
    shape: Option<(usize, usize)>,
    #[arg(long, value_enum, default_value = "f32")]
    etype: ElementType,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Raw frame dump; repeat for several streams (one row each).
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Scan type per input; a single value applies to every input.
    #[arg(long, default_value = "range")]
    scan_type: Vec<ScanType>,
    #[command(flatten)]
    raw: RawArgs,
    #[arg(long, default_value_t = 1000)]
    precision_um: u32,
    #[arg(long, value_parser = parse_width)]
    width: Option<SampleWidth>,
    #[command(flatten)]
    codec: CodecArgs,
    /// Timed repetitions after one untimed warm-up pass.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Raw f32 frame dump in meters.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = raw::parse_shape)]
    shape: (usize, usize),
    #[arg(long)]
    stride: Option<usize>,
    /// Comma-separated precisions in micrometers.
    #[arg(long, value_delimiter = ',', required = true)]
    precisions: Vec<u32>,
    #[arg(long, value_parser = parse_width, default_value = "4")]
    width: SampleWidth,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Spread the work over all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    raw: RawArgs,
    #[command(flatten)]
    scan: ScanArgs,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Spread the work over all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct GenArgs {
    /// static_scene, driving_like, random, sparse_vertical or stop_and_go.
    #[arg(long)]
    kind: SceneKind,
    #[arg(long)]
    frames: usize,
    #[arg(long, value_parser = raw::parse_shape, default_value = "128x1024")]
    shape: (usize, usize),
    /// Fraction of missing returns; defaults depend on the kind.
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// f32 writes meters (0.0 = no return); integer types write quantized steps.
    #[arg(long, value_enum, default_value = "f32")]
    etype: ElementType,
    #[arg(long, default_value_t = 1000)]
    precision_um: u32,
    #[arg(long)]
    parallel: bool,
}

fn parse_width(s: &str) -> Result<SampleWidth, String> {
    s.parse::<u8>()
        .ok()
        .and_then(|b| SampleWidth::from_bytes(b).ok())
        .ok_or_else(|| format!("`{s}` is not a sample width (1, 2 or 4)"))
}

fn execution(parallel: bool) -> Execution {
    if parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// A decoded container that does not match its reference input.
#[derive(Debug)]
struct VerifyFailed(String);

impl fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let corrupt = err.chain().any(|cause| {
        cause.is::<VerifyFailed>() || cause.downcast_ref::<jiffy::Error>().is_some_and(jiffy::Error::is_corruption)
    });
    if corrupt {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::HeuristicEval(a) => heuristic_cmd(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Reads a raw dump and turns it into scans.
fn load_scans(
    input: &Path,
    raw: &RawArgs,
    scan_type: ScanType,
    precision_um: u32,
    width: Option<SampleWidth>,
) -> Result<(Geometry, QuantizationSpec, Vec<Scan>)> {
    let width = width.unwrap_or(raw.etype.sample_width());
    let geometry = Geometry::new(raw.shape.0, raw.shape.1, width, scan_type)?;
    let spec = QuantizationSpec::new(precision_um, width)?;
    let frames = raw::read(input, &raw.layout())?;
    let scans = frames.to_scans(geometry, &spec)?;
    Ok((geometry, spec, scans))
}

fn open_report(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn compress(args: CompressArgs) -> Result<()> {
    let (geometry, spec, scans) =
        load_scans(&args.input, &args.raw, args.scan.scan_type, args.scan.precision_um, args.scan.width)?;
    let count = u32::try_from(scans.len()).context("too many frames for one container")?;
    let header = StreamHeader::new(&geometry, spec.precision_um, args.codec.mask_codec, Some(count))?;
    let file = File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let mut writer = StreamWriter::new(BufWriter::new(file), header)?;
    let mut encoder = Encoder::new(geometry, args.codec.config())?;

    let mut encode_secs = 0.0;
    let mut i_frames = 0;
    for scan in &scans {
        let start = Instant::now();
        let frame = encoder.encode(scan)?;
        encode_secs += start.elapsed().as_secs_f64();
        i_frames += usize::from(frame.mode == Mode::I);
        writer.write_frame(&frame)?;
    }
    writer.finish()?.flush()?;

    let input_bytes = (scans.len() * args.raw.layout().frame_bytes()) as u64;
    let output_bytes = std::fs::metadata(&args.output)?.len();
    if args.verify {
        check_container(&args.output, Some(geometry), &scans)?;
    }

    let n = scans.len();
    let ratio = if n == 0 {
        "n/a".to_string()
    } else {
        format!("{:.3}", input_bytes as f64 / output_bytes as f64)
    };
    print!(
        "{n} frames {}x{} {}: {input_bytes} -> {output_bytes} bytes, ratio {ratio}, {i_frames} I / {} P",
        geometry.rows,
        geometry.cols,
        geometry.scan_type.name(),
        n - i_frames
    );
    if n > 0 && encode_secs > 0.0 {
        let rate = n as f64 / encode_secs;
        print!(", {rate:.1} scans/s, {:.2} Mpts/s", rate * geometry.len() as f64 / 1e6);
    }
    if args.verify {
        print!(", verified");
    }
    println!();
    Ok(())
}

/// Decodes `container` and compares it frame by frame with `expected`.
fn check_container(container: &Path, geometry: Option<Geometry>, expected: &[Scan]) -> Result<()> {
    let file = File::open(container).with_context(|| format!("opening {}", container.display()))?;
    let reader = ScanReader::new(BufReader::new(file))?;
    let header_geometry = reader.header().geometry();
    if let Some(g) = geometry {
        if g != header_geometry {
            return Err(VerifyFailed(format!(
                "container holds {}x{} {} scans of width {}, input is {}x{} {} of width {}",
                header_geometry.rows,
                header_geometry.cols,
                header_geometry.scan_type.name(),
                header_geometry.width.bytes(),
                g.rows,
                g.cols,
                g.scan_type.name(),
                g.width.bytes()
            ))
            .into());
        }
    }
    let mut decoded = 0;
    for (t, scan) in reader.enumerate() {
        let scan = scan?;
        match expected.get(t) {
            None => return Err(VerifyFailed(format!("container has more frames than the input ({})", expected.len())).into()),
            Some(want) if *want != scan => {
                let index = want.samples().iter().zip(scan.samples()).position(|(a, b)| a != b).unwrap_or(0);
                return Err(VerifyFailed(format!("frame {t}: sample {index} differs from the input")).into());
            }
            Some(_) => decoded += 1,
        }
    }
    if decoded != expected.len() {
        return Err(VerifyFailed(format!("container has {decoded} frames, input has {}", expected.len())).into());
    }
    Ok(())
}

fn decompress(args: DecompressArgs) -> Result<()> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let reader = ScanReader::new(BufReader::new(file))?;
    let header = *reader.header();
    let etype = args.etype.unwrap_or(ElementType::for_width(header.width));
    let spec = header.quantization();
    let mut out = RawWriter::create(&args.output, etype)?;
    let mut n = 0;
    for scan in reader {
        out.write_scan(&scan?, &spec)?;
        n += 1;
    }
    out.finish()?;
    println!(
        "{n} frames {}x{} {} -> {} ({etype:?})",
        header.rows,
        header.cols,
        header.scan_type.name(),
        args.output.display()
    );
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let file = File::open(&args.container).with_context(|| format!("opening {}", args.container.display()))?;
    let header = *ScanReader::new(BufReader::new(file))?.header();
    let geometry = header.geometry();
    let (rows, cols) = args.shape.unwrap_or((geometry.rows, geometry.cols));
    if (rows, cols) != (geometry.rows, geometry.cols) {
        return Err(VerifyFailed(format!(
            "container shape {}x{} differs from --shape {rows}x{cols}",
            geometry.rows, geometry.cols
        ))
        .into());
    }
    let layout = RawLayout {
        rows,
        cols,
        etype: args.etype,
        stride: args.stride,
    };
    // Floats are compared after quantizing with the container's own step.
    let scans = raw::read(&args.input, &layout)?.to_scans(geometry, &header.quantization())?;
    check_container(&args.container, None, &scans)?;
    println!("ok: {} frames match", scans.len());
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let types = &args.scan_type;
    ensure!(
        types.len() == 1 || types.len() == args.input.len(),
        "give one --scan-type, or one per --input ({} inputs, {} scan types)",
        args.input.len(),
        types.len()
    );
    ensure!(args.reps > 0, "--reps must be at least 1");
    let config = args.codec.config();
    let mut reports = Vec::with_capacity(args.input.len());
    for (k, input) in args.input.iter().enumerate() {
        let scan_type = types[k.min(types.len() - 1)];
        let (_, _, scans) = load_scans(input, &args.raw, scan_type, args.precision_um, args.width)?;
        let report = bench(&scans, &config, args.reps).with_context(|| format!("benchmarking {}", input.display()))?;
        reports.push((input.display().to_string(), report));
    }
    let mut out = open_report(args.output.as_deref())?;
    report::bench(&mut out, args.format, &reports)?;
    out.flush()?;
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let layout = RawLayout {
        rows: args.shape.0,
        cols: args.shape.1,
        etype: ElementType::F32,
        stride: args.stride,
    };
    let RawFrames::Real(images) = raw::read(&args.input, &layout)? else {
        unreachable!("f32 layouts decode to real frames")
    };
    let rows = sweep(
        images.len(),
        |t| images[t].clone(),
        &args.precisions,
        args.width,
        &args.codec.config(),
        execution(args.parallel),
    )?;
    let mut out = open_report(args.output.as_deref())?;
    report::sweep(&mut out, args.format, &rows)?;
    out.flush()?;
    Ok(())
}

fn load_analysis(args: &AnalysisArgs) -> Result<Vec<Scan>> {
    let (_, _, scans) = load_scans(&args.input, &args.raw, args.scan.scan_type, args.scan.precision_um, args.scan.width)?;
    Ok(scans)
}

fn ablate_cmd(args: AnalysisArgs) -> Result<()> {
    let scans = load_analysis(&args)?;
    let rows = ablate(&scans, &args.codec.config(), execution(args.parallel))?;
    let mut out = open_report(args.output.as_deref())?;
    report::ablation(&mut out, args.format, &rows)?;
    out.flush()?;
    Ok(())
}

fn heuristic_cmd(args: AnalysisArgs) -> Result<()> {
    let scans = load_analysis(&args)?;
    let report = heuristic_eval(&scans, &args.codec.config(), execution(args.parallel))?;
    let mut out = open_report(args.output.as_deref())?;
    report::heuristic(&mut out, args.format, &report)?;
    out.flush()?;
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let (rows, cols) = args.shape;
    let mut config = SynthConfig::new(args.kind, args.frames, rows, cols, args.seed);
    if let Some(s) = args.sparsity {
        ensure!((0.0..=1.0).contains(&s), "--sparsity must be in [0, 1], got {s}");
        config = config.with_sparsity(s);
    }
    let synth = Synth::new(config)?;
    let exec = execution(args.parallel);
    let mut out = RawWriter::create(&args.output, args.etype)?;
    match args.etype {
        ElementType::F32 => {
            for image in synth.images(exec) {
                out.write_real(&image)?;
            }
        }
        etype => {
            let spec = QuantizationSpec::new(args.precision_um, etype.sample_width())?;
            for scan in synth.scans(&spec, exec)? {
                out.write_scan(&scan, &spec)?;
            }
        }
    }
    out.finish()?;
    eprintln!(
        "{} frames {rows}x{cols} {} (seed {}, sparsity {:.2}) -> {}",
        args.frames,
        args.kind,
        args.seed,
        synth.config().sparsity,
        args.output.display()
    );
    Ok(())
}
