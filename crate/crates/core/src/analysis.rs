//! Evaluation harnesses: the ablation ladder, brute-force validation of the
//! mode heuristic, quantization sweeps and codec throughput.
//!
//! Any frame can be coded in isolation from a state holding the previous
//! scan, which is exactly the state a sequential encoder would have. The
//! size-only harnesses exploit that to spread frames over an [`Execution`];
//! throughput is always measured on one thread.

use std::time::Instant;

use serde::Serialize;

use crate::codec::{
    encode, encode_i, encode_p, encode_values, select_mode, Decoder, EncoderConfig, EncoderState, Mode, ModePolicy,
    ValueTransform,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::scan::{quantize, QuantizationSpec, RangeImage, SampleWidth, Scan, ScanType};

fn input_bytes(scans: &[Scan]) -> u64 {
    scans.iter().map(|s| s.geometry().scan_bytes() as u64).sum()
}

fn ratio(input: u64, output: u64) -> f64 {
    if output == 0 {
        f64::NAN
    } else {
        input as f64 / output as f64
    }
}

/// Encoded size of frame `t` of `scans` under `config`, as a sequential
/// encoder would produce it.
fn frame_bytes(scans: &[Scan], t: usize, config: &EncoderConfig) -> Result<(Mode, usize)> {
    let mut state = match t {
        0 => EncoderState::new(),
        _ => EncoderState::with_previous(scans[t - 1].clone()),
    };
    let encoded = encode(&scans[t], &mut state, config)?;
    Ok((encoded.mode, encoded.encoded_len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AblationVariant {
    /// Bitpacking of the raw samples.
    Pfor,
    /// Spatial delta, signed deltas cast to unsigned, bitpacking.
    DeltaPfor,
    /// Spatial delta, ZigZag, bitpacking.
    DeltaZigZagPfor,
    /// Zero mask removed first; every scan intra-coded.
    MaskDeltaZigZagPfor,
    /// The complete codec with automatic I/P selection.
    Full,
}

impl AblationVariant {
    pub const LADDER: [AblationVariant; 5] = [
        AblationVariant::Pfor,
        AblationVariant::DeltaPfor,
        AblationVariant::DeltaZigZagPfor,
        AblationVariant::MaskDeltaZigZagPfor,
        AblationVariant::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Pfor => "pfor",
            AblationVariant::DeltaPfor => "delta>pfor",
            AblationVariant::DeltaZigZagPfor => "delta>zigzag>pfor",
            AblationVariant::MaskDeltaZigZagPfor => "mask>delta>zigzag>pfor",
            AblationVariant::Full => "full",
        }
    }

    fn transform(self) -> Option<ValueTransform> {
        match self {
            AblationVariant::Pfor => Some(ValueTransform::Raw),
            AblationVariant::DeltaPfor => Some(ValueTransform::DeltaCast),
            AblationVariant::DeltaZigZagPfor => Some(ValueTransform::DeltaZigZag),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub label: &'static str,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub ratio: f64,
}

/// Compressed size of `scans` under every rung of the ablation ladder.
pub fn ablate(scans: &[Scan], config: &EncoderConfig, exec: Execution) -> Result<Vec<AblationRow>> {
    check_sequence(scans)?;
    let input = input_bytes(scans);
    AblationVariant::LADDER
        .iter()
        .map(|&variant| {
            let sizes: Vec<Result<usize>> = match variant.transform() {
                Some(transform) => exec.map(scans, |scan| {
                    let mut out = Vec::new();
                    encode_values(scan.samples(), transform, &mut Vec::new(), &mut out);
                    Ok(out.len())
                }),
                None if variant == AblationVariant::MaskDeltaZigZagPfor => {
                    exec.map(scans, |scan| Ok(encode_i(scan, config.mask_codec).encoded_len()))
                }
                None => {
                    let auto = EncoderConfig {
                        mode: crate::codec::ModeConfig {
                            policy: ModePolicy::Auto,
                            ..config.mode
                        },
                        ..*config
                    };
                    exec.map_range(scans.len(), |t| frame_bytes(scans, t, &auto).map(|(_, n)| n))
                }
            };
            let output = sizes.into_iter().sum::<Result<usize>>()? as u64;
            Ok(AblationRow {
                variant,
                label: variant.label(),
                input_bytes: input,
                output_bytes: output,
                ratio: ratio(input, output),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrameVerdict {
    pub index: usize,
    pub chosen: Mode,
    pub i_bytes: usize,
    pub p_bytes: usize,
}

impl FrameVerdict {
    /// The chosen mode produced the smallest full encoding (ties count as
    /// correct for either mode).
    pub fn correct(&self) -> bool {
        self.chosen_bytes() == self.i_bytes.min(self.p_bytes)
    }

    pub fn chosen_bytes(&self) -> usize {
        match self.chosen {
            Mode::I => self.i_bytes,
            Mode::P => self.p_bytes,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeuristicReport {
    /// Frames with a choice to make (all but the first).
    pub evaluated: usize,
    pub correct: usize,
    /// Heuristic chose I where P was strictly smaller.
    pub suboptimal_i: usize,
    /// Heuristic chose P where I was strictly smaller.
    pub suboptimal_p: usize,
    pub accuracy: f64,
    pub suboptimal_i_rate: f64,
    pub suboptimal_p_rate: f64,
    /// Stream sizes, first frame included.
    pub auto_bytes: u64,
    pub force_i_bytes: u64,
    pub force_p_bytes: u64,
    pub optimal_bytes: u64,
    pub frames: Vec<FrameVerdict>,
}

/// Runs the mode heuristic on every frame and compares its choice with both
/// complete encodings.
pub fn heuristic_eval(scans: &[Scan], config: &EncoderConfig, exec: Execution) -> Result<HeuristicReport> {
    check_sequence(scans)?;
    let first = scans.first().map(|s| encode_i(s, config.mask_codec).encoded_len() as u64).unwrap_or(0);
    let verdicts: Vec<Result<FrameVerdict>> = exec.map_range(scans.len().saturating_sub(1), |k| {
        let t = k + 1;
        let state = EncoderState::with_previous(scans[t - 1].clone());
        let auto = EncoderConfig {
            mode: crate::codec::ModeConfig {
                policy: ModePolicy::Auto,
                ..config.mode
            },
            ..*config
        };
        let chosen = select_mode(&scans[t], &state, &auto)?;
        let i_bytes = encode_i(&scans[t], config.mask_codec).encoded_len();
        let p_bytes = encode_p(&scans[t], &state, config.mask_codec, config.residual)?.encoded_len();
        Ok(FrameVerdict {
            index: t,
            chosen,
            i_bytes,
            p_bytes,
        })
    });
    let frames = verdicts.into_iter().collect::<Result<Vec<_>>>()?;

    let evaluated = frames.len();
    let correct = frames.iter().filter(|v| v.correct()).count();
    let suboptimal_i = frames.iter().filter(|v| v.chosen == Mode::I && v.p_bytes < v.i_bytes).count();
    let suboptimal_p = frames.iter().filter(|v| v.chosen == Mode::P && v.i_bytes < v.p_bytes).count();
    let rate = |n: usize| if evaluated == 0 { f64::NAN } else { n as f64 / evaluated as f64 };
    let sum = |f: &dyn Fn(&FrameVerdict) -> usize| first + frames.iter().map(|v| f(v) as u64).sum::<u64>();
    Ok(HeuristicReport {
        evaluated,
        correct,
        suboptimal_i,
        suboptimal_p,
        accuracy: if evaluated == 0 { 1.0 } else { correct as f64 / evaluated as f64 },
        suboptimal_i_rate: rate(suboptimal_i),
        suboptimal_p_rate: rate(suboptimal_p),
        auto_bytes: sum(&|v| v.chosen_bytes()),
        force_i_bytes: sum(&|v| v.i_bytes),
        force_p_bytes: sum(&|v| v.p_bytes),
        optimal_bytes: sum(&|v| v.i_bytes.min(v.p_bytes)),
        frames,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub precision_um: u32,
    pub frames: usize,
    pub samples: u64,
    /// Samples that quantized to a nonzero value.
    pub valid_samples: u64,
    pub output_bytes: u64,
    /// `8 · output_bytes / samples`.
    pub bits_per_sample: f64,
    /// `8 · output_bytes / valid_samples`.
    pub bits_per_valid: f64,
    pub ratio: f64,
}

/// Compresses the same real-valued sequence at each precision.
/// `frame(t)` must return frame `t` of an `n`-frame sequence.
pub fn sweep<F>(
    n: usize,
    frame: F,
    precisions: &[u32],
    width: SampleWidth,
    config: &EncoderConfig,
    exec: Execution,
) -> Result<Vec<SweepRow>>
where
    F: Fn(usize) -> RangeImage + Sync + Send,
{
    precisions
        .iter()
        .map(|&precision_um| {
            let spec = QuantizationSpec::new(precision_um, width)?;
            let scans = exec
                .map_range(n, |t| quantize(&frame(t), &spec, ScanType::Range))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            check_sequence(&scans)?;
            let output = exec
                .map_range(n, |t| frame_bytes(&scans, t, config).map(|(_, b)| b as u64))
                .into_iter()
                .sum::<Result<u64>>()?;
            let samples = scans.iter().map(|s| s.samples().len() as u64).sum::<u64>();
            let valid = samples - scans.iter().map(|s| s.zero_count() as u64).sum::<u64>();
            let per = |count: u64| if count == 0 { f64::NAN } else { 8.0 * output as f64 / count as f64 };
            Ok(SweepRow {
                precision_um,
                frames: n,
                samples,
                valid_samples: valid,
                output_bytes: output,
                bits_per_sample: per(samples),
                bits_per_valid: per(valid),
                ratio: ratio(input_bytes(&scans), output),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameStat {
    pub index: usize,
    pub mode: Mode,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub ratio: f64,
    /// Mean over repetitions, seconds.
    pub encode_secs: f64,
    pub decode_secs: f64,
}

/// Mean and sample standard deviation of a rate over repetitions.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Rate {
    pub mean: f64,
    pub stddev: f64,
}

impl Rate {
    fn from_samples(samples: &[f64]) -> Rate {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Rate::default();
        }
        let mean = samples.iter().sum::<f64>() / n;
        let stddev = if samples.len() < 2 {
            0.0
        } else {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Rate { mean, stddev }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub scan_type: ScanType,
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub repetitions: usize,
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// Total input over total output.
    pub ratio: f64,
    /// Mean of per-frame ratios.
    pub mean_frame_ratio: f64,
    pub encode_scans_per_sec: Rate,
    pub decode_scans_per_sec: Rate,
    pub encode_points_per_sec: Rate,
    pub decode_points_per_sec: Rate,
    pub i_frames: usize,
    pub p_frames: usize,
    pub hardware: String,
    pub per_frame: Vec<FrameStat>,
}

/// Single-threaded in-memory encode and decode timing. One untimed warm-up
/// pass precedes `repetitions` timed passes; every decoded pass is checked
/// against the input.
pub fn bench(scans: &[Scan], config: &EncoderConfig, repetitions: usize) -> Result<BenchReport> {
    check_sequence(scans)?;
    let repetitions = repetitions.max(1);
    let Some(geometry) = scans.first().map(|s| *s.geometry()) else {
        return Ok(BenchReport {
            scan_type: ScanType::Range,
            frames: 0,
            rows: 0,
            cols: 0,
            repetitions,
            input_bytes: 0,
            output_bytes: 0,
            ratio: f64::NAN,
            mean_frame_ratio: f64::NAN,
            encode_scans_per_sec: Rate::default(),
            decode_scans_per_sec: Rate::default(),
            encode_points_per_sec: Rate::default(),
            decode_points_per_sec: Rate::default(),
            i_frames: 0,
            p_frames: 0,
            hardware: hardware_summary(),
            per_frame: Vec::new(),
        });
    };
    let n = scans.len();
    let mut encode_time = vec![0.0f64; n];
    let mut decode_time = vec![0.0f64; n];
    let mut encode_totals = Vec::with_capacity(repetitions);
    let mut decode_totals = Vec::with_capacity(repetitions);
    let mut encoded = Vec::with_capacity(n);

    for rep in 0..=repetitions {
        let timed = rep > 0;
        encoded.clear();
        let mut state = EncoderState::new();
        let start = Instant::now();
        for (t, scan) in scans.iter().enumerate() {
            let frame_start = Instant::now();
            encoded.push(encode(scan, &mut state, config)?);
            if timed {
                encode_time[t] += frame_start.elapsed().as_secs_f64();
            }
        }
        let encode_total = start.elapsed().as_secs_f64();

        let mut decoder = Decoder::new(geometry);
        let start = Instant::now();
        for (t, frame) in encoded.iter().enumerate() {
            let frame_start = Instant::now();
            let scan = decoder.decode(frame)?;
            if timed {
                decode_time[t] += frame_start.elapsed().as_secs_f64();
            }
            if scan != scans[t] {
                return Err(Error::RoundtripMismatch { index: t });
            }
        }
        let decode_total = start.elapsed().as_secs_f64();
        if timed {
            encode_totals.push(encode_total);
            decode_totals.push(decode_total);
        }
    }

    let per_scan = geometry.scan_bytes() as u64;
    let per_frame: Vec<FrameStat> = encoded
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let out = e.encoded_len() as u64;
            FrameStat {
                index: t,
                mode: e.mode,
                input_bytes: per_scan,
                output_bytes: out,
                ratio: ratio(per_scan, out),
                encode_secs: encode_time[t] / repetitions as f64,
                decode_secs: decode_time[t] / repetitions as f64,
            }
        })
        .collect();
    let output = per_frame.iter().map(|f| f.output_bytes).sum::<u64>();
    let points = geometry.len() as f64;
    let scans_per_sec = |totals: &[f64]| totals.iter().map(|&s| n as f64 / s).collect::<Vec<_>>();
    let enc = scans_per_sec(&encode_totals);
    let dec = scans_per_sec(&decode_totals);
    let times_points = |v: &[f64]| v.iter().map(|x| x * points).collect::<Vec<_>>();
    let i_frames = per_frame.iter().filter(|f| f.mode == Mode::I).count();

    Ok(BenchReport {
        scan_type: geometry.scan_type,
        frames: n,
        rows: geometry.rows,
        cols: geometry.cols,
        repetitions,
        input_bytes: per_scan * n as u64,
        output_bytes: output,
        ratio: ratio(per_scan * n as u64, output),
        mean_frame_ratio: per_frame.iter().map(|f| f.ratio).sum::<f64>() / n as f64,
        encode_scans_per_sec: Rate::from_samples(&enc),
        decode_scans_per_sec: Rate::from_samples(&dec),
        encode_points_per_sec: Rate::from_samples(&times_points(&enc)),
        decode_points_per_sec: Rate::from_samples(&times_points(&dec)),
        i_frames,
        p_frames: n - i_frames,
        hardware: hardware_summary(),
        per_frame,
    })
}

/// Encodes and decodes `scans` as one stream; returns the index of the
/// first frame that did not reproduce exactly.
pub fn first_mismatch(scans: &[Scan], config: &EncoderConfig) -> Result<Option<usize>> {
    check_sequence(scans)?;
    let Some(geometry) = scans.first().map(|s| *s.geometry()) else {
        return Ok(None);
    };
    let mut state = EncoderState::new();
    let mut decoder = Decoder::new(geometry);
    for (t, scan) in scans.iter().enumerate() {
        let bytes = encode(scan, &mut state, config)?.to_bytes();
        let parsed = crate::codec::EncodedScan::from_bytes(&bytes)?;
        if &decoder.decode(&parsed)? != scan {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Checks many independent streams, one result per stream.
pub fn verify_streams(
    streams: &[Vec<Scan>],
    configs: &[EncoderConfig],
    exec: Execution,
) -> Vec<Result<Option<usize>>> {
    exec.map_range(streams.len() * configs.len(), |k| {
        first_mismatch(&streams[k / configs.len()], &configs[k % configs.len()])
    })
}

fn check_sequence(scans: &[Scan]) -> Result<()> {
    match scans.first() {
        Some(first) if scans.iter().any(|s| s.geometry() != first.geometry()) => Err(Error::GeometryMismatch),
        _ => Ok(()),
    }
}

/// CPU model and thread count, best effort.
pub fn hardware_summary() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{model} ({} {}, {threads} hw threads)", std::env::consts::OS, std::env::consts::ARCH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SceneKind, Synth, SynthConfig};

    fn scans(kind: SceneKind, frames: usize, rows: usize, cols: usize) -> Vec<Scan> {
        Synth::new(SynthConfig::new(kind, frames, rows, cols, 21))
            .unwrap()
            .scans(&QuantizationSpec::default(), Execution::Sequential)
            .unwrap()
    }

    #[test]
    fn ablation_sequential_matches_parallel() {
        let seq = scans(SceneKind::DrivingLike, 6, 16, 256);
        let config = EncoderConfig::default();
        let a = ablate(&seq, &config, Execution::Sequential).unwrap();
        let b = ablate(&seq, &config, Execution::Parallel).unwrap();
        assert_eq!(
            a.iter().map(|r| r.output_bytes).collect::<Vec<_>>(),
            b.iter().map(|r| r.output_bytes).collect::<Vec<_>>()
        );
    }

    #[test]
    fn full_rung_matches_a_real_stream() {
        let seq = scans(SceneKind::StopAndGo, 8, 16, 256);
        let config = EncoderConfig::default();
        let rows = ablate(&seq, &config, Execution::Parallel).unwrap();
        let mut state = EncoderState::new();
        let streamed: usize = seq.iter().map(|s| encode(s, &mut state, &config).unwrap().encoded_len()).sum();
        assert_eq!(rows[4].output_bytes, streamed as u64);
    }

    #[test]
    fn all_zero_sequence_favours_mask() {
        let g = crate::scan::Geometry::new(32, 256, SampleWidth::U32, ScanType::Range).unwrap();
        let seq = vec![Scan::zeros(g); 4];
        let rows = ablate(&seq, &EncoderConfig::default(), Execution::Sequential).unwrap();
        assert!(rows[3].ratio > 5.0 * rows[2].ratio, "{rows:?}");
        assert_eq!(rows[3].output_bytes, rows[4].output_bytes);
    }

    #[test]
    fn constant_dense_sequence_full_at_least_mask() {
        let g = crate::scan::Geometry::new(16, 128, SampleWidth::U32, ScanType::Range).unwrap();
        let seq = vec![Scan::new(g, vec![12_345; g.len()]).unwrap(); 5];
        let rows = ablate(&seq, &EncoderConfig::default(), Execution::Sequential).unwrap();
        assert!(rows[4].ratio >= rows[3].ratio, "{rows:?}");
    }

    #[test]
    fn heuristic_extremes() {
        let config = EncoderConfig::default();
        let g = crate::scan::Geometry::new(16, 128, SampleWidth::U32, ScanType::Range).unwrap();
        let frozen = vec![scans(SceneKind::StaticScene, 1, 16, 128)[0].clone(); 6];
        let report = heuristic_eval(&frozen, &config, Execution::Sequential).unwrap();
        assert_eq!(report.evaluated, 5);
        assert_eq!(report.accuracy, 1.0);
        assert!(report.frames.iter().all(|v| v.chosen == Mode::P));

        let random = scans(SceneKind::Random, 6, g.rows, g.cols);
        let report = heuristic_eval(&random, &config, Execution::Parallel).unwrap();
        assert_eq!(report.accuracy, 1.0, "{:?}", report.frames);
        assert!(report.frames.iter().all(|v| v.chosen == Mode::I));
        assert!(report.auto_bytes <= report.force_p_bytes);
    }

    #[test]
    fn sweep_single_precision_and_monotone() {
        let synth = Synth::new(SynthConfig::new(SceneKind::StaticScene, 3, 16, 256, 2)).unwrap();
        let config = EncoderConfig::default();
        let one = sweep(3, |t| synth.frame(t), &[1000], SampleWidth::U32, &config, Execution::Sequential).unwrap();
        assert_eq!(one.len(), 1);
        let rows = sweep(3, |t| synth.frame(t), &[1000, 2000, 4000, 8000], SampleWidth::U32, &config, Execution::Parallel)
            .unwrap();
        assert!(rows.windows(2).all(|w| w[1].bits_per_sample <= w[0].bits_per_sample), "{rows:?}");
    }

    #[test]
    fn bench_reports_shape() {
        let seq = scans(SceneKind::StaticScene, 4, 16, 128);
        let report = bench(&seq, &EncoderConfig::default(), 3).unwrap();
        assert_eq!(report.per_frame.len(), 4);
        assert_eq!(report.repetitions, 3);
        assert!(report.ratio > 1.0);
        assert!(report.encode_scans_per_sec.mean > 0.0);
        assert!(report.encode_points_per_sec.mean > report.encode_scans_per_sec.mean);
        assert_eq!(report.i_frames + report.p_frames, 4);
        assert_eq!(report.per_frame[0].mode, Mode::I);
        let empty = bench(&[], &EncoderConfig::default(), 1).unwrap();
        assert_eq!(empty.frames, 0);
    }

    #[test]
    fn verify_streams_flags_nothing_on_valid_input() {
        let streams = vec![scans(SceneKind::DrivingLike, 3, 8, 64), scans(SceneKind::Random, 3, 8, 64)];
        let configs = [
            EncoderConfig::with_policy(ModePolicy::Auto),
            EncoderConfig::with_policy(ModePolicy::ForceP),
        ];
        for r in verify_streams(&streams, &configs, Execution::Parallel) {
            assert_eq!(r.unwrap(), None);
        }
    }
}
