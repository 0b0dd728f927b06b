//! Deterministic synthetic range-scan sequences for tests and benchmarks.
//!
//! A scene is a periodic range field over (row, scene column): smooth
//! large-scale structure and a few closer objects with sharp edges, plus a
//! surface texture resolved at a fraction of a column. Each frame samples
//! the scene at a per-frame column shift (the sensor turning or travelling),
//! adds sensor noise and drops returns. A stationary sensor sees the same
//! texture every frame; once it moves, beams land on different texture
//! cells, which is what makes temporal prediction lose its edge. Dropped returns come from three sources: coherent regions fixed
//! in the scene (sky, absorbing surfaces), persistent per-pixel dropouts,
//! and per-frame flicker.
//!
//! Every frame is generated from its own RNG stream, so frames can be
//! produced in any order (or in parallel) with identical results.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::scan::{quantize, QuantizationSpec, RangeImage, Scan, ScanType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SceneKind {
    /// Stationary sensor: fixed scene, per-frame noise and flicker.
    StaticScene,
    /// Moving sensor: the scene drifts across columns, range scales
    /// slightly, and occluders move through the view.
    DrivingLike,
    /// Independent uniform ranges in every frame; no spatial or temporal
    /// structure.
    Random,
    /// Vertically mounted sensor: most returns in the upper rows are
    /// missing, slow drift.
    SparseVertical,
    /// Alternating stationary and moving segments with short speed ramps.
    StopAndGo,
}

impl SceneKind {
    pub const ALL: [SceneKind; 5] = [
        SceneKind::StaticScene,
        SceneKind::DrivingLike,
        SceneKind::Random,
        SceneKind::SparseVertical,
        SceneKind::StopAndGo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::StaticScene => "static_scene",
            SceneKind::DrivingLike => "driving_like",
            SceneKind::Random => "random",
            SceneKind::SparseVertical => "sparse_vertical",
            SceneKind::StopAndGo => "stop_and_go",
        }
    }

    /// Sparsity used when the caller does not specify one.
    pub fn default_sparsity(self) -> f64 {
        match self {
            SceneKind::SparseVertical => 0.6,
            _ => 0.3,
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = SceneKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown scene kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SynthConfig {
    pub kind: SceneKind,
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    /// Target fraction of missing returns, in [0, 1].
    pub sparsity: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(kind: SceneKind, frames: usize, rows: usize, cols: usize, seed: u64) -> Self {
        SynthConfig {
            kind,
            frames,
            rows,
            cols,
            sparsity: kind.default_sparsity(),
            seed,
        }
    }

    pub fn with_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }
}

const MIN_RANGE: f64 = 2.0;
const MAX_RANGE: f64 = 32.0;
const TEXTURE_SIGMA: f64 = 0.07;
/// Texture cells per column.
const TEXTURE_RES: usize = 8;
const NOISE_SIGMA: f64 = 0.02;
const DRIVING_SPEED: f64 = 2.7;

/// A moving object in sensor coordinates (elliptical footprint).
#[derive(Clone, Copy, Debug)]
struct Occluder {
    col0: f64,
    velocity: f64,
    row: f64,
    half_rows: f64,
    half_cols: f64,
    range: f64,
}

#[derive(Clone, Debug)]
pub struct Synth {
    config: SynthConfig,
    /// Range in meters at integer scene coordinates, row-major.
    base: Vec<f64>,
    /// Fine texture, `cols · TEXTURE_RES` cells per row.
    texture: Vec<f32>,
    /// Scene cells that never return.
    coherent_gap: Vec<bool>,
    /// Sensor pixels that never return.
    dropout: Vec<bool>,
    flicker: f64,
    /// Column shift of frame `t` relative to frame 0.
    shifts: Vec<f64>,
    occluders: Vec<Occluder>,
}

impl Synth {
    pub fn new(config: SynthConfig) -> Result<Self> {
        if config.rows == 0 || config.cols == 0 {
            return Err(Error::InvalidShape {
                rows: config.rows,
                cols: config.cols,
            });
        }
        if !(0.0..=1.0).contains(&config.sparsity) {
            return Err(Error::InvalidArgument("sparsity must lie in [0, 1]"));
        }
        let (rows, cols) = (config.rows, config.cols);
        let n = rows * cols;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        // Split the target sparsity between the three dropout sources so
        // that P(valid) = (1 - coherent)(1 - dropout)(1 - flicker) = 1 - s.
        let s = config.sparsity;
        let persistent = s / 10.0;
        let flicker = s / 30.0;
        let coherent = if s >= 1.0 {
            1.0
        } else {
            (1.0 - (1.0 - s) / ((1.0 - persistent) * (1.0 - flicker))).max(0.0)
        };

        let base = scene_ranges(&mut rng, rows, cols);
        let texture_dist = Normal::new(0.0, TEXTURE_SIGMA as f32).expect("valid sigma");
        let texture = (0..n * TEXTURE_RES).map(|_| texture_dist.sample(&mut rng)).collect();
        let mut gap_field = value_noise(&mut rng, rows, cols, 8.0, 64.0);
        let texture_a = value_noise(&mut rng, rows, cols, 3.0, 12.0);
        for (i, g) in gap_field.iter_mut().enumerate() {
            *g += 0.25 * texture_a[i];
            if config.kind == SceneKind::SparseVertical {
                // Upper rows look at the sky.
                *g += 1.5 * (1.0 - (i / cols) as f64 / rows as f64);
            }
        }
        let coherent_gap = top_fraction(&gap_field, coherent);
        let dropout = top_fraction(&(0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>(), persistent);

        let shifts = shift_schedule(&mut rng, config.kind, config.frames);
        let occluders = match config.kind {
            SceneKind::DrivingLike | SceneKind::StopAndGo => (0..(cols / 256).max(1))
                .map(|_| Occluder {
                    col0: rng.gen_range(0.0..cols as f64),
                    velocity: rng.gen_range(1.0..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                    row: rng.gen_range(0.55..0.9) * rows as f64,
                    half_rows: (rows as f64 / 10.0).max(0.5),
                    half_cols: rng.gen_range(8.0..32.0f64).min(cols as f64 / 4.0).max(0.5),
                    range: rng.gen_range(4.0..12.0),
                })
                .collect(),
            _ => Vec::new(),
        };

        Ok(Synth {
            config,
            base,
            texture,
            coherent_gap,
            dropout,
            flicker: if s >= 1.0 { 1.0 } else { flicker },
            shifts,
            occluders,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.frames
    }

    pub fn is_empty(&self) -> bool {
        self.config.frames == 0
    }

    /// Sensor column shift of frame `t` (columns, cumulative).
    pub fn shift(&self, t: usize) -> f64 {
        self.shifts[t]
    }

    /// Generates frame `t` in meters; missing returns are NaN.
    pub fn frame(&self, t: usize) -> RangeImage {
        assert!(t < self.config.frames, "frame {t} out of range");
        let (rows, cols) = (self.config.rows, self.config.cols);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(t as u64 + 1);

        if self.config.kind == SceneKind::Random {
            let data = (0..rows * cols)
                .map(|_| {
                    if rng.gen_bool(self.config.sparsity) {
                        f64::NAN
                    } else {
                        rng.gen_range(0.5..100.0)
                    }
                })
                .collect();
            return RangeImage::new(rows, cols, data).expect("shape");
        }

        let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
        let shift = self.shifts[t];
        let scale = match self.config.kind {
            SceneKind::DrivingLike => 1.0 + 0.003 * (t as f64 * std::f64::consts::TAU / 40.0).sin(),
            _ => 1.0,
        };
        let whole = shift.floor();
        let frac = shift - whole;
        let offset = (whole as i64).rem_euclid(cols as i64) as usize;

        let mut data = vec![f64::NAN; rows * cols];
        for r in 0..rows {
            let scene_row = &self.base[r * cols..(r + 1) * cols];
            let texture_row = &self.texture[r * cols * TEXTURE_RES..(r + 1) * cols * TEXTURE_RES];
            let gap_row = &self.coherent_gap[r * cols..(r + 1) * cols];
            for c in 0..cols {
                let u0 = (c + offset) % cols;
                let u1 = if u0 + 1 == cols { 0 } else { u0 + 1 };
                // Flicker and noise are drawn for every pixel so the RNG
                // stream position does not depend on the scene.
                let flick = rng.gen_bool(self.flicker);
                let n = noise.sample(&mut rng);
                let nearest = if frac < 0.5 { u0 } else { u1 };
                if flick || gap_row[nearest] || self.dropout[r * cols + c] {
                    continue;
                }
                let mut range = scene_row[u0] * (1.0 - frac) + scene_row[u1] * frac;
                let cell = ((c as f64 + shift) * TEXTURE_RES as f64).floor() as i64;
                range += texture_row[cell.rem_euclid(texture_row.len() as i64) as usize] as f64;
                range *= scale;
                for o in &self.occluders {
                    let col = (o.col0 + o.velocity * t as f64).rem_euclid(cols as f64);
                    let mut dc = (c as f64 - col).abs();
                    dc = dc.min(cols as f64 - dc);
                    let dr = r as f64 - o.row;
                    if (dc / o.half_cols).powi(2) + (dr / o.half_rows).powi(2) <= 1.0 {
                        range = range.min(o.range);
                    }
                }
                data[r * cols + c] = (range + n).max(0.5);
            }
        }
        RangeImage::new(rows, cols, data).expect("shape")
    }

    pub fn images(&self, exec: Execution) -> Vec<RangeImage> {
        exec.map_range(self.config.frames, |t| self.frame(t))
    }

    /// Quantized range scans.
    pub fn scans(&self, spec: &QuantizationSpec, exec: Execution) -> Result<Vec<Scan>> {
        exec.map_range(self.config.frames, |t| quantize(&self.frame(t), spec, ScanType::Range))
            .into_iter()
            .collect()
    }
}

/// Periodic-in-columns value noise in [0, 1] with smoothstep interpolation.
fn value_noise(rng: &mut impl Rng, rows: usize, cols: usize, cell_rows: f64, cell_cols: f64) -> Vec<f64> {
    let lattice_cols = ((cols as f64 / cell_cols).round() as usize).max(1);
    let lattice_rows = (rows as f64 / cell_rows).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..lattice_rows * lattice_cols).map(|_| rng.gen()).collect();
    let smooth = |x: f64| x * x * (3.0 - 2.0 * x);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let y = r as f64 / cell_rows;
        let (y0, fy) = (y.floor() as usize, smooth(y.fract()));
        for c in 0..cols {
            let x = c as f64 * lattice_cols as f64 / cols as f64;
            let x0 = x.floor() as usize % lattice_cols;
            let x1 = (x0 + 1) % lattice_cols;
            let fx = smooth(x.fract());
            let at = |ly: usize, lx: usize| lattice[ly * lattice_cols + lx];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Static scene geometry: smooth structure and a handful of closer objects.
fn scene_ranges(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<f64> {
    let coarse = value_noise(rng, rows, cols, 16.0, 256.0);
    let detail = value_noise(rng, rows, cols, 4.0, 64.0);
    let mut base: Vec<f64> = coarse
        .iter()
        .zip(&detail)
        .map(|(&a, &b)| {
            let x = 0.85 * a + 0.15 * b;
            MIN_RANGE + 2.0 + (MAX_RANGE - MIN_RANGE - 2.0) * x * x
        })
        .collect();

    // Poles, parked cars, walls: rectangles at a nearly constant range.
    for _ in 0..(cols / 64).max(1) {
        let width = rng.gen_range(3..=30usize).min(cols);
        let c0 = rng.gen_range(0..cols);
        let r0 = rng.gen_range(rows / 3..=rows.saturating_sub(1).max(rows / 3));
        let range = rng.gen_range(MIN_RANGE + 1.0..20.0);
        let slope = rng.gen_range(-0.02..0.02);
        for r in r0..rows {
            for k in 0..width {
                let i = r * cols + (c0 + k) % cols;
                base[i] = base[i].min(range + slope * k as f64);
            }
        }
    }

    base
}

/// Marks the `fraction` of cells with the largest field values. Ties are
/// broken by index, so exactly `round(fraction · n)` cells are marked.
fn top_fraction(field: &[f64], fraction: f64) -> Vec<bool> {
    let n = field.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
    let mut marked = vec![false; n];
    for &i in &order[..k] {
        marked[i] = true;
    }
    marked
}

fn shift_schedule(rng: &mut impl Rng, kind: SceneKind, frames: usize) -> Vec<f64> {
    let speeds: Vec<f64> = match kind {
        SceneKind::StaticScene | SceneKind::Random => vec![0.0; frames],
        SceneKind::DrivingLike => vec![DRIVING_SPEED; frames],
        SceneKind::SparseVertical => vec![0.5; frames],
        SceneKind::StopAndGo => {
            let mut speeds = Vec::with_capacity(frames);
            let mut moving = false;
            while speeds.len() < frames {
                let len = rng.gen_range(20..=60);
                let target = if moving { rng.gen_range(2.0..4.0) } else { 0.0 };
                let from = speeds.last().copied().unwrap_or(0.0);
                // Two-frame ramp between segments.
                speeds.push(from + (target - from) / 3.0);
                speeds.push(from + 2.0 * (target - from) / 3.0);
                speeds.extend(std::iter::repeat_n(target, len));
                moving = !moving;
            }
            speeds.truncate(frames);
            speeds
        }
    };
    let mut shift = 0.0;
    speeds
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            if t > 0 {
                shift += v;
            }
            shift
        })
        .collect()
}

/// Pearson correlation of consecutive frames over pixels valid in both.
pub fn frame_correlation(a: &RangeImage, b: &RangeImage) -> f64 {
    let pairs: Vec<(f64, f64)> = a
        .data
        .iter()
        .zip(&b.data)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let n = pairs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x / n, sy + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid_fraction(img: &RangeImage) -> f64 {
        img.data.iter().filter(|v| v.is_nan()).count() as f64 / img.data.len() as f64
    }

    #[test]
    fn deterministic_under_seed() {
        for kind in SceneKind::ALL {
            let config = SynthConfig::new(kind, 4, 16, 128, 99);
            let a = Synth::new(config).unwrap();
            let b = Synth::new(config).unwrap();
            for t in [0, 3, 1] {
                let (x, y) = (a.frame(t), b.frame(t));
                assert!(x.data.iter().zip(&y.data).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
            let other = Synth::new(SynthConfig { seed: 100, ..config }).unwrap();
            assert_ne!(
                a.frame(0).data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                other.frame(0).data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let synth = Synth::new(SynthConfig::new(SceneKind::StopAndGo, 6, 8, 64, 5)).unwrap();
        let spec = QuantizationSpec::default();
        assert_eq!(
            synth.scans(&spec, Execution::Sequential).unwrap(),
            synth.scans(&spec, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn sparsity_hits_target() {
        for kind in SceneKind::ALL {
            for target in [0.0, 0.1, 0.3, 0.6, 1.0] {
                let synth = Synth::new(SynthConfig::new(kind, 3, 64, 512, 7).with_sparsity(target)).unwrap();
                for t in 0..3 {
                    let got = invalid_fraction(&synth.frame(t));
                    assert!((got - target).abs() < 0.02, "{kind} target {target} frame {t}: {got}");
                }
            }
        }
    }

    #[test]
    fn static_frames_correlate_more_than_driving() {
        let corr = |kind| {
            let synth = Synth::new(SynthConfig::new(kind, 6, 32, 512, 3)).unwrap();
            (1..6)
                .map(|t| frame_correlation(&synth.frame(t - 1), &synth.frame(t)))
                .sum::<f64>()
                / 5.0
        };
        let fixed = corr(SceneKind::StaticScene);
        let moving = corr(SceneKind::DrivingLike);
        let random = corr(SceneKind::Random);
        assert!(fixed > 0.99, "{fixed}");
        assert!(fixed > moving, "{fixed} vs {moving}");
        assert!(moving > random);
        assert!(random.abs() < 0.05);
    }

    #[test]
    fn ranges_stay_in_band() {
        let synth = Synth::new(SynthConfig::new(SceneKind::DrivingLike, 3, 32, 256, 1)).unwrap();
        for t in 0..3 {
            for &v in synth.frame(t).data.iter().filter(|v| v.is_finite()) {
                assert!((0.5..=MAX_RANGE * 1.01 + 1.0).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn stop_and_go_has_both_regimes() {
        let synth = Synth::new(SynthConfig::new(SceneKind::StopAndGo, 300, 4, 64, 11)).unwrap();
        let speeds: Vec<f64> = (1..300).map(|t| synth.shift(t) - synth.shift(t - 1)).collect();
        let still = speeds.iter().filter(|&&v| v == 0.0).count();
        let fast = speeds.iter().filter(|&&v| v >= 2.0).count();
        assert!(still > 60 && fast > 60, "{still} still, {fast} fast");
    }

    #[test]
    fn kind_names_parse() {
        for kind in SceneKind::ALL {
            assert_eq!(kind.name().parse::<SceneKind>().unwrap(), kind);
        }
        assert_eq!("driving-like".parse::<SceneKind>().unwrap(), SceneKind::DrivingLike);
        assert!("lunar".parse::<SceneKind>().is_err());
    }

    #[test]
    fn degenerate_shapes() {
        let synth = Synth::new(SynthConfig::new(SceneKind::DrivingLike, 2, 1, 1, 0)).unwrap();
        assert_eq!(synth.frame(1).data.len(), 1);
        assert!(Synth::new(SynthConfig::new(SceneKind::StaticScene, 1, 0, 4, 0)).is_err());
        assert!(Synth::new(SynthConfig::new(SceneKind::StaticScene, 1, 4, 4, 0).with_sparsity(1.5)).is_err());
    }
}
