use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotation::ChartKind;
use super::config::GenConfig;
use super::raster::Rgb;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegendPosition {
    Right,
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub font_id: usize,
    pub title_px: u32,
    pub axis_label_px: u32,
    pub tick_label_px: u32,
    pub legend_px: u32,
    /// One color per series (bar) or slice (pie).
    pub colors: Vec<Rgb>,
    pub y_axis_label_orientation_deg: f64,
    pub x_tick_orientation_deg: f64,
    /// Draw the top and right spines as well.
    pub full_frame: bool,
    pub tick_len: u32,
    pub legend_position: LegendPosition,
    /// Fraction of a group's width covered by its bars.
    pub bar_fill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub legend_label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPayload {
    pub x_axis_label: String,
    pub y_axis_label: String,
    pub group_labels: Vec<String>,
    pub series: Vec<Series>,
    pub y_tick_values: Vec<f64>,
    /// Decimal places used to print tick labels.
    pub tick_decimals: usize,
    pub has_legend: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub legend_label: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiePayload {
    pub slices: Vec<Slice>,
    pub start_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Bar(BarPayload),
    Pie(PiePayload),
}

/// Sampled description of one chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub seed: u64,
    pub canvas_size: (u32, u32),
    pub title: String,
    pub style: StyleSpec,
    pub payload: Payload,
}

impl ChartSpec {
    pub fn bar(&self) -> Option<&BarPayload> {
        match &self.payload {
            Payload::Bar(b) => Some(b),
            Payload::Pie(_) => None,
        }
    }

    pub fn pie(&self) -> Option<&PiePayload> {
        match &self.payload {
            Payload::Pie(p) => Some(p),
            Payload::Bar(_) => None,
        }
    }
}

/// Independent per-chart seed derived from a dataset seed and chart index
/// (SplitMix64 finalizer).
pub fn chart_seed(dataset_seed: u64, index: u64) -> u64 {
    let mut z = dataset_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rounds to `digits` significant digits.
pub fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let p = digits - 1 - v.abs().log10().floor() as i32;
    let f = 10f64.powi(p.abs());
    if p >= 0 {
        (v * f).round() / f
    } else {
        (v / f).round() * f
    }
}

/// A "nice" tick layout covering `[0, top]` with `top ≥ target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickLayout {
    pub step: f64,
    pub intervals: u32,
    pub decimals: usize,
}

impl TickLayout {
    pub fn values(&self) -> Vec<f64> {
        (0..=self.intervals)
            .map(|i| {
                let v = i as f64 * self.step;
                let f = 10f64.powi(self.decimals as i32);
                (v * f).round() / f
            })
            .collect()
    }
}

/// All layouts with a step in `{1, 2, 2.5, 5}·10^k` whose top tick is the
/// first to reach `target`.
pub fn nice_tick_candidates(target: f64, intervals: [u32; 2]) -> Vec<TickLayout> {
    let mut out = Vec::new();
    for n in intervals[0]..=intervals[1] {
        let k0 = (target / n as f64).log10().floor() as i32;
        for k in k0 - 1..=k0 + 1 {
            for (m, extra) in [(1.0, 0), (2.0, 0), (2.5, 1), (5.0, 0)] {
                let step = m * 10f64.powi(k);
                if step * n as f64 >= target && step * (n as f64 - 1.0) < target {
                    let decimals = (-k + extra).max(0) as usize;
                    out.push(TickLayout {
                        step,
                        intervals: n,
                        decimals,
                    });
                }
            }
        }
    }
    out
}

pub fn format_tick(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn pick<R: Rng>(rng: &mut R, r: [u32; 2]) -> u32 {
    rng.gen_range(r[0]..=r[1])
}

fn sample_colors<R: Rng>(rng: &mut R, n: usize, min_dist: u8) -> Result<Vec<Rgb>> {
    let mut colors: Vec<Rgb> = Vec::with_capacity(n);
    let dist = |a: &Rgb, b: &Rgb| (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0);
    for _ in 0..10_000 {
        if colors.len() == n {
            break;
        }
        let c: Rgb = [rng.gen(), rng.gen(), rng.gen()];
        // Keep fills visible against the white background and distinct from text.
        if dist(&c, &[255, 255, 255]) < 64 || dist(&c, &[0, 0, 0]) < 48 {
            continue;
        }
        if colors.iter().all(|o| dist(o, &c) >= min_dist) {
            colors.push(c);
        }
    }
    if colors.len() < n {
        return Err(Error::config("min_color_distance", "cannot find enough distinct colors"));
    }
    Ok(colors)
}

/// Glyph-advance estimate in pixels for a font size (mono face, the widest).
fn char_px(size: u32) -> f64 {
    size as f64 * 6.0 / 7.0
}

fn pick_words<R: Rng>(rng: &mut R, words: &[String], n: usize, max_chars: usize, distinct_from: &[String]) -> Vec<String> {
    let pool: Vec<&String> = words
        .iter()
        .filter(|w| w.len() <= max_chars.max(2) && !distinct_from.contains(w))
        .collect();
    let pool: Vec<&String> = if pool.len() >= n {
        pool
    } else {
        // Fall back to the shortest words; layout may still reject the chart.
        let mut all: Vec<&String> = words.iter().filter(|w| !distinct_from.contains(w)).collect();
        all.sort_by_key(|w| (w.len(), w.as_str()));
        all.truncate(n.max(8));
        all
    };
    pool.choose_multiple(rng, n).map(|s| s.to_string()).collect()
}

fn phrase<R: Rng>(rng: &mut R, words: &[String], n_words: [u32; 2], max_chars: usize) -> String {
    for _ in 0..20 {
        let n = pick(rng, n_words) as usize;
        let p = words.choose_multiple(rng, n).cloned().collect::<Vec<_>>().join(" ");
        if p.len() <= max_chars {
            return p;
        }
    }
    let mut short: Vec<&String> = words.iter().collect();
    short.sort_by_key(|w| (w.len(), w.as_str()));
    short[rng.gen_range(0..short.len().min(10))].clone()
}

/// Samples a chart description. A pure function of `(kind, seed, config, words)`.
pub fn sample_chart_spec(kind: ChartKind, seed: u64, config: &GenConfig, words: &[String]) -> Result<ChartSpec> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = pick(&mut rng, config.canvas_width);
    let h = pick(&mut rng, config.canvas_height);
    let font_id = *config.fonts.choose(&mut rng).expect("validated non-empty");
    let title_px = pick(&mut rng, config.title_font_px);
    let axis_label_px = pick(&mut rng, config.axis_label_font_px);
    let tick_label_px = pick(&mut rng, config.tick_label_font_px);
    let legend_px = pick(&mut rng, config.legend_font_px);
    let full_frame = rng.gen_bool(0.5);
    let tick_len = rng.gen_range(3..=5);
    let bar_fill = rng.gen_range(0.6..0.85);
    let x_tick_orientation_deg = *config.x_tick_orientations_deg.choose(&mut rng).expect("validated non-empty");
    let title = phrase(&mut rng, words, config.title_words, ((w as f64 - 16.0) / char_px(title_px)) as usize);

    let (payload, n_colors, legend_position) = match kind {
        ChartKind::Bar => {
            let n_series = pick(&mut rng, config.series) as usize;
            let mut n_groups = pick(&mut rng, config.groups) as usize;
            let has_legend = n_series >= 2;
            let legend_position = if has_legend && rng.gen_bool(0.5) {
                LegendPosition::Top
            } else {
                LegendPosition::Right
            };
            let legend_chars = match legend_position {
                LegendPosition::Right => ((w as f64 * 0.25) / char_px(legend_px)) as usize,
                LegendPosition::Top => {
                    (((w as f64 - 16.0) / n_series as f64 - legend_px as f64 - 16.0) / char_px(legend_px)) as usize
                }
            };
            let plot_w = w as f64 * if has_legend && legend_position == LegendPosition::Right { 0.5 } else { 0.7 };
            if x_tick_orientation_deg == 0.0 {
                // Every group must hold at least a four-letter label.
                let fit = (plot_w / (4.0 * char_px(tick_label_px) + 8.0)) as usize;
                n_groups = n_groups.min(fit.max(config.groups[0] as usize));
            }
            let group_chars = if x_tick_orientation_deg == 0.0 {
                ((plot_w / n_groups as f64 - 6.0) / char_px(tick_label_px)) as usize
            } else {
                ((h as f64 * 0.18) / char_px(tick_label_px)) as usize
            };
            let group_labels = pick_words(&mut rng, words, n_groups, group_chars, &[]);
            let legend_labels = if has_legend {
                pick_words(&mut rng, words, n_series, legend_chars, &[])
            } else {
                vec![String::new()]
            };
            let e = rng.gen_range(config.value_exponent[0]..=config.value_exponent[1]);
            let scale = 10f64.powi(e);
            let series: Vec<Series> = legend_labels
                .into_iter()
                .map(|legend_label| Series {
                    legend_label,
                    values: (0..n_groups)
                        .map(|_| round_sig(rng.gen_range(config.value_range[0]..=config.value_range[1]) * scale, 3))
                        .collect(),
                })
                .collect();
            let max = series.iter().flat_map(|s| s.values.iter()).cloned().fold(0.0, f64::max);
            let cands = nice_tick_candidates(1.1 * max, config.tick_intervals);
            let layout = *cands
                .choose(&mut rng)
                .ok_or_else(|| Error::config("tick_intervals", "no nice tick layout fits the values"))?;
            let axis_chars = ((h as f64 * 0.6) / char_px(axis_label_px)) as usize;
            let x_axis_label = phrase(&mut rng, words, config.axis_label_words, axis_chars);
            let y_axis_label = phrase(&mut rng, words, config.axis_label_words, axis_chars);
            let payload = BarPayload {
                x_axis_label,
                y_axis_label,
                group_labels,
                series,
                y_tick_values: layout.values(),
                tick_decimals: layout.decimals,
                has_legend,
            };
            (Payload::Bar(payload), n_series, legend_position)
        }
        ChartKind::Pie => {
            let n = pick(&mut rng, config.slices) as usize;
            let fractions = loop {
                let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
                let s: f64 = u.iter().sum();
                let mut f: Vec<f64> = u.iter().map(|x| x / s).collect();
                let head: f64 = f[..n - 1].iter().sum();
                f[n - 1] = 1.0 - head;
                if f.iter().all(|&x| x >= config.min_slice_fraction) {
                    break f;
                }
            };
            let legend_chars = ((w as f64 * 0.3) / char_px(legend_px)) as usize;
            let labels = pick_words(&mut rng, words, n, legend_chars, &[]);
            let start_angle_deg = rng.gen_range(0.0..360.0);
            let slices = labels
                .into_iter()
                .zip(fractions)
                .map(|(legend_label, fraction)| Slice { legend_label, fraction })
                .collect();
            (
                Payload::Pie(PiePayload { slices, start_angle_deg }),
                n,
                LegendPosition::Right,
            )
        }
    };
    let colors = sample_colors(&mut rng, n_colors, config.min_color_distance)?;
    Ok(ChartSpec {
        kind,
        seed,
        canvas_size: (w, h),
        title,
        style: StyleSpec {
            font_id,
            title_px,
            axis_label_px,
            tick_label_px,
            legend_px,
            colors,
            y_axis_label_orientation_deg: config.y_axis_label_orientation_deg,
            x_tick_orientation_deg,
            full_frame,
            tick_len,
            legend_position,
            bar_fill,
        },
        payload,
    })
}
