//! Table, CSV and JSON emitters for the analysis commands.
//!
//! CSV reports are flat: one row per frame (or per variant / precision)
//! followed, where it makes sense, by an aggregate row whose `frame`
//! column reads `aggregate`. Empty cells mean "not applicable".

use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;
use jiffy::analysis::{AblationRow, BenchReport, HeuristicReport, Rate, SweepRow};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

fn fmt_ratio(r: f64) -> String {
    if r.is_finite() {
        format!("{r:.3}")
    } else {
        "n/a".into()
    }
}

fn fmt_rate(r: &Rate, scale: f64, digits: usize) -> String {
    format!("{:.*} ± {:.*}", digits, r.mean / scale, digits, r.stddev / scale)
}

fn write_csv<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchCsvRow<'a> {
    input: &'a str,
    scan_type: &'static str,
    frame: String,
    mode: String,
    input_bytes: u64,
    output_bytes: u64,
    ratio: f64,
    mean_frame_ratio: Option<f64>,
    encode_secs: f64,
    decode_secs: f64,
    encode_scans_per_sec: f64,
    encode_scans_per_sec_stddev: Option<f64>,
    decode_scans_per_sec: f64,
    decode_scans_per_sec_stddev: Option<f64>,
    encode_points_per_sec: f64,
    encode_points_per_sec_stddev: Option<f64>,
    decode_points_per_sec: f64,
    decode_points_per_sec_stddev: Option<f64>,
    repetitions: usize,
}

fn bench_rows<'a>(input: &'a str, r: &'a BenchReport) -> impl Iterator<Item = BenchCsvRow<'a>> + 'a {
    let points = (r.rows * r.cols) as f64;
    let per_frame = r.per_frame.iter().map(move |f| BenchCsvRow {
        input,
        scan_type: r.scan_type.name(),
        frame: f.index.to_string(),
        mode: f.mode.as_char().to_string(),
        input_bytes: f.input_bytes,
        output_bytes: f.output_bytes,
        ratio: f.ratio,
        mean_frame_ratio: None,
        encode_secs: f.encode_secs,
        decode_secs: f.decode_secs,
        encode_scans_per_sec: 1.0 / f.encode_secs,
        encode_scans_per_sec_stddev: None,
        decode_scans_per_sec: 1.0 / f.decode_secs,
        decode_scans_per_sec_stddev: None,
        encode_points_per_sec: points / f.encode_secs,
        encode_points_per_sec_stddev: None,
        decode_points_per_sec: points / f.decode_secs,
        decode_points_per_sec_stddev: None,
        repetitions: r.repetitions,
    });
    let n = r.per_frame.len().max(1) as f64;
    let aggregate = BenchCsvRow {
        input,
        scan_type: r.scan_type.name(),
        frame: "aggregate".into(),
        mode: format!("{}I/{}P", r.i_frames, r.p_frames),
        input_bytes: r.input_bytes,
        output_bytes: r.output_bytes,
        ratio: r.ratio,
        mean_frame_ratio: Some(r.mean_frame_ratio),
        encode_secs: r.per_frame.iter().map(|f| f.encode_secs).sum::<f64>() / n,
        decode_secs: r.per_frame.iter().map(|f| f.decode_secs).sum::<f64>() / n,
        encode_scans_per_sec: r.encode_scans_per_sec.mean,
        encode_scans_per_sec_stddev: Some(r.encode_scans_per_sec.stddev),
        decode_scans_per_sec: r.decode_scans_per_sec.mean,
        decode_scans_per_sec_stddev: Some(r.decode_scans_per_sec.stddev),
        encode_points_per_sec: r.encode_points_per_sec.mean,
        encode_points_per_sec_stddev: Some(r.encode_points_per_sec.stddev),
        decode_points_per_sec: r.decode_points_per_sec.mean,
        decode_points_per_sec_stddev: Some(r.decode_points_per_sec.stddev),
        repetitions: r.repetitions,
    };
    per_frame.chain(std::iter::once(aggregate))
}

#[derive(Serialize)]
struct BenchJson<'a> {
    input: &'a str,
    #[serde(flatten)]
    report: &'a BenchReport,
}

pub fn bench<W: Write>(mut out: W, format: Format, reports: &[(String, BenchReport)]) -> Result<()> {
    match format {
        Format::Csv => write_csv(out, reports.iter().flat_map(|(input, r)| bench_rows(input, r))),
        Format::Json => {
            let rows: Vec<_> = reports.iter().map(|(input, report)| BenchJson { input, report }).collect();
            write_json(out, &rows)
        }
        Format::Table => {
            writeln!(
                out,
                "{:<14} {:>7} {:>8} {:>22} {:>22} {:>16} {:>16} {:>11}",
                "scan type",
                "frames",
                "ratio",
                "encode [scans/s]",
                "decode [scans/s]",
                "encode [Mpts/s]",
                "decode [Mpts/s]",
                "I/P"
            )?;
            for (_, r) in reports {
                writeln!(
                    out,
                    "{:<14} {:>7} {:>8} {:>22} {:>22} {:>16} {:>16} {:>11}",
                    r.scan_type.name(),
                    r.frames,
                    fmt_ratio(r.ratio),
                    fmt_rate(&r.encode_scans_per_sec, 1.0, 1),
                    fmt_rate(&r.decode_scans_per_sec, 1.0, 1),
                    fmt_rate(&r.encode_points_per_sec, 1e6, 2),
                    fmt_rate(&r.decode_points_per_sec, 1e6, 2),
                    format!("{}/{}", r.i_frames, r.p_frames)
                )?;
            }
            if let Some((_, r)) = reports.first() {
                writeln!(out, "{} timed repetitions after a warm-up pass; {}", r.repetitions, r.hardware)?;
            }
            Ok(())
        }
    }
}

pub fn sweep<W: Write>(mut out: W, format: Format, rows: &[SweepRow]) -> Result<()> {
    match format {
        Format::Csv => write_csv(out, rows),
        Format::Json => write_json(out, rows),
        Format::Table => {
            writeln!(
                out,
                "{:>14} {:>14} {:>16} {:>10}",
                "precision [um]", "bits/sample", "bits/valid pt", "ratio"
            )?;
            for r in rows {
                writeln!(
                    out,
                    "{:>14} {:>14.3} {:>16.3} {:>10}",
                    r.precision_um,
                    r.bits_per_sample,
                    r.bits_per_valid,
                    fmt_ratio(r.ratio)
                )?;
            }
            Ok(())
        }
    }
}

pub fn ablation<W: Write>(mut out: W, format: Format, rows: &[AblationRow]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        variant: &'a str,
        input_bytes: u64,
        output_bytes: u64,
        ratio: f64,
    }
    let flat = rows.iter().map(|r| Row {
        variant: r.label,
        input_bytes: r.input_bytes,
        output_bytes: r.output_bytes,
        ratio: r.ratio,
    });
    match format {
        Format::Csv => write_csv(out, flat),
        Format::Json => write_json(out, &flat.collect::<Vec<_>>()),
        Format::Table => {
            writeln!(out, "{:<26} {:>14} {:>8}", "variant", "output bytes", "ratio")?;
            for r in rows {
                writeln!(out, "{:<26} {:>14} {:>8}", r.label, r.output_bytes, fmt_ratio(r.ratio))?;
            }
            Ok(())
        }
    }
}

pub fn heuristic<W: Write>(mut out: W, format: Format, report: &HeuristicReport) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        frame: String,
        chosen: String,
        i_bytes: u64,
        p_bytes: u64,
        chosen_bytes: u64,
        optimal_bytes: u64,
        correct: Option<bool>,
        accuracy: Option<f64>,
        suboptimal_i_rate: Option<f64>,
        suboptimal_p_rate: Option<f64>,
    }
    match format {
        Format::Json => write_json(out, report),
        Format::Csv => {
            let frames = report.frames.iter().map(|v| Row {
                frame: v.index.to_string(),
                chosen: v.chosen.as_char().to_string(),
                i_bytes: v.i_bytes as u64,
                p_bytes: v.p_bytes as u64,
                chosen_bytes: v.chosen_bytes() as u64,
                optimal_bytes: v.i_bytes.min(v.p_bytes) as u64,
                correct: Some(v.correct()),
                accuracy: None,
                suboptimal_i_rate: None,
                suboptimal_p_rate: None,
            });
            let aggregate = Row {
                frame: "aggregate".into(),
                chosen: "auto".into(),
                i_bytes: report.force_i_bytes,
                p_bytes: report.force_p_bytes,
                chosen_bytes: report.auto_bytes,
                optimal_bytes: report.optimal_bytes,
                correct: None,
                accuracy: Some(report.accuracy),
                suboptimal_i_rate: Some(report.suboptimal_i_rate),
                suboptimal_p_rate: Some(report.suboptimal_p_rate),
            };
            write_csv(out, frames.chain(std::iter::once(aggregate)))
        }
        Format::Table => {
            let pct = |x: f64| if x.is_finite() { format!("{:.1}%", 100.0 * x) } else { "n/a".into() };
            writeln!(out, "frames evaluated      {}", report.evaluated)?;
            writeln!(out, "accuracy              {} ({} correct)", pct(report.accuracy), report.correct)?;
            writeln!(
                out,
                "sub-optimal I         {} ({} frames)",
                pct(report.suboptimal_i_rate),
                report.suboptimal_i
            )?;
            writeln!(
                out,
                "sub-optimal P         {} ({} frames)",
                pct(report.suboptimal_p_rate),
                report.suboptimal_p
            )?;
            writeln!(out, "bytes auto            {}", report.auto_bytes)?;
            writeln!(out, "bytes forced I        {}", report.force_i_bytes)?;
            writeln!(out, "bytes forced P        {}", report.force_p_bytes)?;
            writeln!(out, "bytes per-frame best  {}", report.optimal_bytes)?;
            Ok(())
        }
    }
}
