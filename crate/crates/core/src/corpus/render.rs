use std::collections::BTreeMap;

use super::annotation::{AnnotatedObject, AnnotationSet, ObjectClass, Relation, RelationKind};
use super::font::{fonts, Font};
use super::raster::{Rgb, RgbImage};
use super::spec::{format_tick, BarPayload, ChartSpec, LegendPosition, Payload, PiePayload};
use crate::error::{Error, Result};

const MARGIN: i64 = 6;
const BACKGROUND: Rgb = [255, 255, 255];
const INK: Rgb = [0, 0, 0];
const SPINE: Rgb = [40, 40, 40];

/// A rasterized text run after rotation: an axis-aligned coverage block.
struct TextBlock {
    w: i64,
    h: i64,
    bits: Vec<bool>,
}

fn snapped_sin_cos(angle_deg: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let snap = |v: f64| {
        if (v - v.round()).abs() < 1e-12 {
            v.round()
        } else {
            v
        }
    };
    (snap(s), snap(c))
}

/// Renders `text` and rotates it counter-clockwise by `angle_deg` with
/// nearest-neighbor inverse mapping. The block is the rotated rectangle's
/// bounding box.
fn text_block(font: &Font, text: &str, size: u32, angle_deg: f64) -> TextBlock {
    let mask = font.render(text, size as usize);
    let (l, t) = (mask.width as f64, mask.height as f64);
    let (s, c) = snapped_sin_cos(angle_deg);
    let w = (l * c.abs() + t * s.abs() - 1e-9).ceil().max(1.0) as i64;
    let h = (l * s.abs() + t * c.abs() - 1e-9).ceil().max(1.0) as i64;
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut bits = vec![false; (w * h) as usize];
    for py in 0..h {
        for px in 0..w {
            let dx = px as f64 + 0.5 - cx;
            let dy = py as f64 + 0.5 - cy;
            // Reading direction (c, -s), glyph-down direction (s, c).
            let along = dx * c - dy * s + l / 2.0;
            let across = dx * s + dy * c + t / 2.0;
            if along >= 0.0 && across >= 0.0 && along < l && across < t {
                bits[(py * w + px) as usize] = mask.get(along as usize, across as usize);
            }
        }
    }
    TextBlock { w, h, bits }
}

struct Canvas {
    img: RgbImage,
    objects: Vec<AnnotatedObject>,
    relations: Vec<Relation>,
}

impl Canvas {
    fn new(w: u32, h: u32) -> Self {
        Canvas {
            img: RgbImage::new(w as usize, h as usize, BACKGROUND),
            objects: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn fits(&self, x: i64, y: i64, w: i64, h: i64) -> bool {
        x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= self.img.width as i64 && y + h <= self.img.height as i64
    }

    fn add(&mut self, class: ObjectClass, b: [i64; 4], orientation_deg: f64, text: Option<String>) -> Result<u32> {
        if !self.fits(b[0], b[1], b[2], b[3]) {
            return Err(Error::Layout(format!("{class:?} at {b:?} leaves the canvas")));
        }
        let id = self.objects.len() as u32;
        self.objects.push(AnnotatedObject {
            id,
            class,
            bbox: [b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64],
            orientation_deg,
            text,
        });
        Ok(id)
    }

    fn relate(&mut self, a: u32, b: u32, kind: RelationKind) {
        self.relations.push(Relation { a, b, kind });
    }

    fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Rgb) {
        if w > 0 && h > 0 && x >= 0 && y >= 0 {
            self.img.fill_rect(x as usize, y as usize, w as usize, h as usize, c);
        }
    }

    fn text(&mut self, class: ObjectClass, block: &TextBlock, text: &str, angle: f64, x: i64, y: i64) -> Result<u32> {
        let id = self.add(class, [x, y, block.w, block.h], angle, Some(text.to_string()))?;
        for py in 0..block.h {
            for px in 0..block.w {
                if block.bits[(py * block.w + px) as usize] {
                    self.img.put((x + px) as usize, (y + py) as usize, INK);
                }
            }
        }
        Ok(id)
    }
}

/// Renders a chart and its exhaustive annotations. The annotation's `image`
/// field is left empty for the caller to fill.
pub fn render_chart(spec: &ChartSpec) -> Result<(RgbImage, AnnotationSet)> {
    let font = fonts()
        .get(spec.style.font_id)
        .ok_or_else(|| Error::config("fonts", format!("no font {}", spec.style.font_id)))?;
    let (w, h) = spec.canvas_size;
    let mut cv = Canvas::new(w, h);
    let mut bar_values = BTreeMap::new();
    let mut angles = None;
    match &spec.payload {
        Payload::Bar(b) => render_bar(spec, b, font, &mut cv, &mut bar_values)?,
        Payload::Pie(p) => angles = Some(render_pie(spec, p, font, &mut cv)?),
    }
    let ann = AnnotationSet {
        image: String::new(),
        kind: spec.kind,
        width: w,
        height: h,
        seed: spec.seed,
        objects: cv.objects,
        relations: cv.relations,
        slice_boundary_angles_deg: angles,
        bar_values,
    };
    Ok((cv.img, ann))
}

/// Title centered at the top; returns the first free row below it.
fn draw_title(spec: &ChartSpec, font: &Font, cv: &mut Canvas) -> Result<i64> {
    let tb = text_block(font, &spec.title, spec.style.title_px, 0.0);
    let x = (spec.canvas_size.0 as i64 - tb.w) / 2;
    cv.text(ObjectClass::Title, &tb, &spec.title, 0.0, x, MARGIN)?;
    Ok(MARGIN + tb.h + 6)
}

/// Legend entries stacked vertically from `(x, y)`. Returns mark ids.
fn legend_column(
    cv: &mut Canvas,
    font: &Font,
    labels: &[&str],
    colors: &[Rgb],
    size: u32,
    x: i64,
    y: i64,
) -> Result<Vec<u32>> {
    let side = size as i64;
    let mut marks = Vec::new();
    for (i, (label, color)) in labels.iter().zip(colors).enumerate() {
        let yy = y + i as i64 * (side + 6);
        let mark = cv.add(ObjectClass::LegendMark, [x, yy, side, side], 0.0, None)?;
        cv.rect(x, yy, side, side, *color);
        let tb = text_block(font, label, size, 0.0);
        let lab = cv.text(ObjectClass::LegendLabel, &tb, label, 0.0, x + side + 4, yy)?;
        cv.relate(mark, lab, RelationKind::LegendMarkLabel);
        marks.push(mark);
    }
    Ok(marks)
}

fn render_bar(
    spec: &ChartSpec,
    p: &BarPayload,
    font: &Font,
    cv: &mut Canvas,
    values: &mut BTreeMap<u32, f64>,
) -> Result<()> {
    let st = &spec.style;
    let (cw, ch) = (spec.canvas_size.0 as i64, spec.canvas_size.1 as i64);
    let tick_len = st.tick_len as i64;
    let ns = p.series.len();
    let ng = p.group_labels.len();
    let mut top_y = draw_title(spec, font, cv)?;

    let legend_labels: Vec<&str> = p.series.iter().map(|s| s.legend_label.as_str()).collect();
    let mut marks = Vec::new();
    let mut legend_x = cw - MARGIN;
    if p.has_legend {
        let side = st.legend_px as i64;
        let blocks: Vec<TextBlock> = legend_labels.iter().map(|l| text_block(font, l, st.legend_px, 0.0)).collect();
        match st.legend_position {
            LegendPosition::Top => {
                let widths: Vec<i64> = blocks.iter().map(|b| side + 4 + b.w).collect();
                let total: i64 = widths.iter().sum::<i64>() + 12 * (ns as i64 - 1);
                if total > cw - 2 * MARGIN {
                    return Err(Error::Layout("legend row wider than canvas".into()));
                }
                let mut x = (cw - total) / 2;
                for (i, label) in legend_labels.iter().enumerate() {
                    marks.extend(legend_column(cv, font, &[label], &st.colors[i..=i], st.legend_px, x, top_y)?);
                    x += widths[i] + 12;
                }
                top_y += side + 6;
            }
            LegendPosition::Right => {
                let lw = side + 4 + blocks.iter().map(|b| b.w).max().unwrap_or(0);
                legend_x = cw - MARGIN - lw;
            }
        }
    }

    let tick_texts: Vec<String> = p.y_tick_values.iter().map(|v| format_tick(*v, p.tick_decimals)).collect();
    let tick_blocks: Vec<TextBlock> = tick_texts.iter().map(|t| text_block(font, t, st.tick_label_px, 0.0)).collect();
    let max_tick_w = tick_blocks.iter().map(|b| b.w).max().unwrap_or(0);
    let ylab = text_block(font, &p.y_axis_label, st.axis_label_px, st.y_axis_label_orientation_deg);
    let xlab = text_block(font, &p.x_axis_label, st.axis_label_px, 0.0);
    let xt_blocks: Vec<TextBlock> = p
        .group_labels
        .iter()
        .map(|l| text_block(font, l, st.tick_label_px, st.x_tick_orientation_deg))
        .collect();
    let xt_h = xt_blocks.iter().map(|b| b.h).max().unwrap_or(0);

    let plot_bottom = ch - MARGIN - xlab.h - 4 - xt_h - 2 - tick_len - 1;
    let plot_top_min = top_y + st.tick_label_px as i64 / 2 + 2;
    let intervals = (p.y_tick_values.len() - 1) as i64;
    let plot_h = (plot_bottom - plot_top_min).max(0) / intervals * intervals;
    if plot_h < 60 {
        return Err(Error::Layout(format!("plot height {plot_h} too small")));
    }
    let plot_top = plot_bottom - plot_h;
    let plot_left = MARGIN + ylab.w + 4 + max_tick_w + 3 + tick_len + 1;
    let plot_right = if p.has_legend && st.legend_position == LegendPosition::Right {
        legend_x - 8
    } else {
        cw - MARGIN - 2
    };
    let plot_w = plot_right - plot_left;
    let group_w = plot_w as f64 / ng as f64;
    let bar_w = (group_w * st.bar_fill / ns as f64).floor() as i64;
    if bar_w < 2 {
        return Err(Error::Layout("bars narrower than 2 px".into()));
    }

    if p.has_legend && st.legend_position == LegendPosition::Right {
        marks = legend_column(cv, font, &legend_labels, &st.colors, st.legend_px, legend_x, plot_top)?;
    }

    // Bars.
    let top_value = *p.y_tick_values.last().expect("at least two ticks");
    let mut group_centers = Vec::with_capacity(ng);
    let mut bar_ids = vec![Vec::new(); ng];
    for (g, ids) in bar_ids.iter_mut().enumerate() {
        let start = plot_left + (g as f64 * group_w + (group_w - (bar_w * ns as i64) as f64) / 2.0).floor() as i64;
        group_centers.push(start as f64 + (bar_w * ns as i64) as f64 / 2.0);
        for (s, series) in p.series.iter().enumerate() {
            let v = series.values[g];
            let top = ((plot_bottom as f64 - v / top_value * plot_h as f64).round() as i64).min(plot_bottom - 1);
            let x = start + s as i64 * bar_w;
            let id = cv.add(ObjectClass::Bar, [x, top, bar_w, plot_bottom - top], 0.0, None)?;
            cv.rect(x, top, bar_w, plot_bottom - top, st.colors[s]);
            values.insert(id, v);
            ids.push(id);
        }
    }

    // Spines.
    cv.rect(plot_left - 1, plot_top, 1, plot_h + 1, SPINE);
    cv.rect(plot_left - 1, plot_bottom, plot_w + 1, 1, SPINE);
    if st.full_frame {
        cv.rect(plot_left - 1, plot_top - 1, plot_w + 1, 1, SPINE);
        cv.rect(plot_right, plot_top - 1, 1, plot_h + 2, SPINE);
    }

    // Y ticks.
    let tick_x = plot_left - 1 - tick_len;
    for (i, (text, block)) in tick_texts.iter().zip(&tick_blocks).enumerate() {
        let row = plot_bottom - i as i64 * plot_h / intervals;
        let line = cv.add(ObjectClass::YTickLine, [tick_x, row - 1, tick_len, 2], 0.0, None)?;
        cv.rect(tick_x, row - 1, tick_len, 2, SPINE);
        let label = cv.text(ObjectClass::YTickLabel, block, text, 0.0, tick_x - 3 - block.w, row - block.h / 2)?;
        cv.relate(label, line, RelationKind::YTickLabelLine);
    }

    // X ticks.
    let label_top = plot_bottom + 1 + tick_len + 2;
    for (g, (label, block)) in p.group_labels.iter().zip(&xt_blocks).enumerate() {
        let xc = group_centers[g].floor() as i64;
        cv.add(ObjectClass::XTickLine, [xc - 1, plot_bottom + 1, 2, tick_len], 0.0, None)?;
        cv.rect(xc - 1, plot_bottom + 1, 2, tick_len, SPINE);
        if st.x_tick_orientation_deg == 0.0 && block.w as f64 > group_w - 2.0 {
            return Err(Error::Layout(format!("x-tick label `{label}` wider than its group")));
        }
        let x = (group_centers[g] - block.w as f64 / 2.0).round() as i64;
        let id = cv.text(ObjectClass::XTickLabel, block, label, st.x_tick_orientation_deg, x, label_top)?;
        if !p.has_legend {
            for &bar in &bar_ids[g] {
                cv.relate(bar, id, RelationKind::BarXTickLabel);
            }
        }
    }
    if p.has_legend {
        for ids in &bar_ids {
            for (s, &bar) in ids.iter().enumerate() {
                cv.relate(bar, marks[s], RelationKind::BarLegendMark);
            }
        }
    }

    // Axis labels.
    let xl = plot_left + (plot_w - xlab.w) / 2;
    cv.text(ObjectClass::XAxisLabel, &xlab, &p.x_axis_label, 0.0, xl, label_top + xt_h + 4)?;
    let yl = (plot_top + (plot_h - ylab.h) / 2).max(top_y);
    cv.text(
        ObjectClass::YAxisLabel,
        &ylab,
        &p.y_axis_label,
        st.y_axis_label_orientation_deg,
        MARGIN,
        yl,
    )?;
    Ok(())
}

/// Counter-clockwise angle in `[0, 360)` of the screen vector `(dx, dy)`
/// (image y pointing down).
pub fn screen_angle_deg(dx: f64, dy: f64) -> f64 {
    let a = (-dy).atan2(dx).to_degrees().rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Leading-boundary angle of each payload slice.
pub fn slice_start_angles(p: &PiePayload) -> Vec<f64> {
    let mut cum = 0.0;
    p.slices
        .iter()
        .map(|s| {
            let a = (p.start_angle_deg + 360.0 * cum).rem_euclid(360.0);
            cum += s.fraction;
            if a >= 360.0 {
                0.0
            } else {
                a
            }
        })
        .collect()
}

fn render_pie(spec: &ChartSpec, p: &PiePayload, font: &Font, cv: &mut Canvas) -> Result<Vec<f64>> {
    let st = &spec.style;
    let (cw, ch) = (spec.canvas_size.0 as i64, spec.canvas_size.1 as i64);
    let top_y = draw_title(spec, font, cv)?;
    let n = p.slices.len();
    let labels: Vec<&str> = p.slices.iter().map(|s| s.legend_label.as_str()).collect();
    let side = st.legend_px as i64;
    let lw = side + 4 + labels.iter().map(|l| text_block(font, l, st.legend_px, 0.0).w).max().unwrap_or(0);
    let legend_x = cw - MARGIN - lw;
    let legend_h = n as i64 * (side + 6) - 6;
    let avail_h = ch - MARGIN - top_y;
    if legend_h > avail_h {
        return Err(Error::Layout("legend taller than canvas".into()));
    }
    let marks = legend_column(cv, font, &labels, &st.colors, st.legend_px, legend_x, top_y + (avail_h - legend_h) / 2)?;

    let region_w = legend_x - 10 - MARGIN;
    let r = region_w.min(avail_h) / 2 - 2;
    if r < 30 {
        return Err(Error::Layout(format!("pie radius {r} too small")));
    }
    let cx = MARGIN + region_w / 2;
    let cy = top_y + avail_h / 2;
    cv.add(ObjectClass::Pie, [cx - r, cy - r, 2 * r, 2 * r], 0.0, None)?;
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for s in &p.slices {
        acc += s.fraction;
        cum.push(acc);
    }
    let r2 = (r * r) as f64;
    for y in cy - r..cy + r {
        for x in cx - r..cx + r {
            let dx = x as f64 + 0.5 - cx as f64;
            let dy = y as f64 + 0.5 - cy as f64;
            if dx * dx + dy * dy >= r2 {
                continue;
            }
            let rel = (screen_angle_deg(dx, dy) - p.start_angle_deg).rem_euclid(360.0) / 360.0;
            let i = (1..=n).find(|&i| rel < cum[i]).unwrap_or(n) - 1;
            cv.img.put(x as usize, y as usize, st.colors[i]);
        }
    }

    let starts = slice_start_angles(p);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| starts[a].total_cmp(&starts[b]));
    for (k, &i) in order.iter().enumerate() {
        cv.relate(k as u32, marks[i], RelationKind::SliceLegendMark);
    }
    Ok(order.iter().map(|&i| starts[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::spec::{sample_chart_spec, Slice, StyleSpec};
    use crate::corpus::words::default_words;
    use crate::corpus::annotation::ChartKind;
    use crate::corpus::GenConfig;

    fn style(colors: usize) -> StyleSpec {
        StyleSpec {
            font_id: 0,
            title_px: 14,
            axis_label_px: 11,
            tick_label_px: 10,
            legend_px: 10,
            colors: (0..colors).map(|i| [40 * i as u8, 100, 200 - 30 * i as u8]).collect(),
            y_axis_label_orientation_deg: 90.0,
            x_tick_orientation_deg: 0.0,
            full_frame: false,
            tick_len: 4,
            legend_position: LegendPosition::Right,
            bar_fill: 0.8,
        }
    }

    #[test]
    fn rotated_text_block_is_transposed() {
        let f = &fonts()[0];
        let a = text_block(f, "ab", 7, 0.0);
        let b = text_block(f, "ab", 7, 90.0);
        assert_eq!((a.w, a.h), (b.h, b.w));
        // Reading upward: the first glyph sits at the bottom, glyph tops face left.
        for y in 0..a.h {
            for x in 0..a.w {
                assert_eq!(a.bits[(y * a.w + x) as usize], b.bits[((a.w - 1 - x) * b.w + y) as usize]);
            }
        }
    }

    #[test]
    fn two_series_three_groups_gives_six_bars() {
        let spec = ChartSpec {
            kind: ChartKind::Bar,
            seed: 0,
            canvas_size: (320, 300),
            title: "sales".into(),
            style: style(2),
            payload: Payload::Bar(BarPayload {
                x_axis_label: "year".into(),
                y_axis_label: "total".into(),
                group_labels: vec!["a".into(), "b".into(), "c".into()],
                series: vec![
                    super::super::spec::Series {
                        legend_label: "x".into(),
                        values: vec![1.0, 2.0, 3.0],
                    },
                    super::super::spec::Series {
                        legend_label: "y".into(),
                        values: vec![2.5, 1.5, 0.5],
                    },
                ],
                y_tick_values: vec![0.0, 1.0, 2.0, 3.0, 4.0],
                tick_decimals: 0,
                has_legend: true,
            }),
        };
        let (img, ann) = render_chart(&spec).unwrap();
        assert_eq!((img.width, img.height), (320, 300));
        assert_eq!(ann.of_class(ObjectClass::Bar).count(), 6);
        ann.validate().unwrap();
        assert_eq!(ann.relations_of(RelationKind::BarLegendMark).count(), 6);
    }

    #[test]
    fn four_equal_slices_from_zero() {
        let spec = ChartSpec {
            kind: ChartKind::Pie,
            seed: 0,
            canvas_size: (300, 260),
            title: "share".into(),
            style: style(4),
            payload: Payload::Pie(PiePayload {
                slices: ["a", "b", "c", "d"]
                    .iter()
                    .map(|l| Slice {
                        legend_label: l.to_string(),
                        fraction: 0.25,
                    })
                    .collect(),
                start_angle_deg: 0.0,
            }),
        };
        let (img, ann) = render_chart(&spec).unwrap();
        assert_eq!(ann.slice_boundary_angles_deg, Some(vec![0.0, 90.0, 180.0, 270.0]));
        ann.validate().unwrap();
        // Upper-right quadrant carries slice 0's color.
        let pie = ann.of_class(ObjectClass::Pie).next().unwrap().bbox();
        let (cx, cy) = pie.center();
        assert_eq!(img.get((cx + 10.0) as usize, (cy - 10.0) as usize), spec.style.colors[0]);
        assert_eq!(img.get((cx - 10.0) as usize, (cy - 10.0) as usize), spec.style.colors[1]);
    }

    #[test]
    fn sampled_charts_render_or_report_layout() {
        let words = default_words();
        let cfg = GenConfig::default();
        let mut ok = 0;
        for seed in 0..60 {
            for kind in [ChartKind::Bar, ChartKind::Pie] {
                let spec = sample_chart_spec(kind, seed, &cfg, &words).unwrap();
                match render_chart(&spec) {
                    Ok((_, ann)) => {
                        ann.validate().unwrap();
                        ok += 1;
                    }
                    Err(Error::Layout(_)) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
        assert!(ok > 90, "{ok}");
    }
}
