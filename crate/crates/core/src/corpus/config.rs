use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::font::fonts;
use crate::error::{Error, Result};

/// Inclusive `[min, max]` range.
pub type Range<T> = [T; 2];

/// Sampling ranges for chart generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub canvas_width: Range<u32>,
    pub canvas_height: Range<u32>,
    /// Allowed indices into the bundled font set.
    pub fonts: Vec<usize>,
    pub title_font_px: Range<u32>,
    pub axis_label_font_px: Range<u32>,
    pub tick_label_font_px: Range<u32>,
    pub legend_font_px: Range<u32>,
    pub title_words: Range<u32>,
    pub axis_label_words: Range<u32>,
    pub series: Range<u32>,
    pub groups: Range<u32>,
    pub slices: Range<u32>,
    pub min_slice_fraction: f64,
    /// Mantissa range for bar values before scaling by `10^exponent`.
    pub value_range: Range<f64>,
    pub value_exponent: Range<i32>,
    /// Number of y-tick intervals.
    pub tick_intervals: Range<u32>,
    pub min_color_distance: u8,
    pub x_tick_orientations_deg: Vec<f64>,
    pub y_axis_label_orientation_deg: f64,
    /// Vocabulary file; the bundled list when absent.
    pub words_path: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            canvas_width: [256, 640],
            canvas_height: [256, 640],
            fonts: vec![0, 1, 2],
            title_font_px: [12, 18],
            axis_label_font_px: [10, 14],
            tick_label_font_px: [8, 12],
            legend_font_px: [8, 12],
            title_words: [1, 2],
            axis_label_words: [1, 2],
            series: [1, 5],
            groups: [2, 8],
            slices: [2, 9],
            min_slice_fraction: 0.01,
            value_range: [40.0, 100.0],
            value_exponent: [-2, 1],
            tick_intervals: [4, 8],
            min_color_distance: 24,
            x_tick_orientations_deg: vec![0.0, 90.0],
            y_axis_label_orientation_deg: 90.0,
            words_path: None,
        }
    }
}

impl GenConfig {
    /// The reduced corpus used for desk-scale learning runs: fixed 256×256
    /// canvas, two fonts, at most three series and six slices.
    pub fn simplified() -> Self {
        GenConfig {
            canvas_width: [256, 256],
            canvas_height: [256, 256],
            fonts: vec![0, 1],
            series: [1, 3],
            groups: [2, 6],
            slices: [2, 6],
            min_slice_fraction: 0.05,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn range<T: PartialOrd + Copy + std::fmt::Debug>(name: &str, r: &Range<T>) -> Result<()> {
            if r[0] > r[1] {
                return Err(Error::config(name, format!("min {:?} exceeds max {:?}", r[0], r[1])));
            }
            Ok(())
        }
        range("canvas_width", &self.canvas_width)?;
        range("canvas_height", &self.canvas_height)?;
        range("title_font_px", &self.title_font_px)?;
        range("axis_label_font_px", &self.axis_label_font_px)?;
        range("tick_label_font_px", &self.tick_label_font_px)?;
        range("legend_font_px", &self.legend_font_px)?;
        range("title_words", &self.title_words)?;
        range("axis_label_words", &self.axis_label_words)?;
        range("series", &self.series)?;
        range("groups", &self.groups)?;
        range("slices", &self.slices)?;
        range("value_range", &self.value_range)?;
        range("value_exponent", &self.value_exponent)?;
        range("tick_intervals", &self.tick_intervals)?;
        if self.canvas_width[0] < 128 || self.canvas_height[0] < 128 {
            return Err(Error::config("canvas_width", "canvas sides must be at least 128 px"));
        }
        if self.fonts.is_empty() || self.fonts.iter().any(|&f| f >= fonts().len()) {
            return Err(Error::config("fonts", format!("need indices below {}", fonts().len())));
        }
        for (name, r) in [
            ("title_font_px", self.title_font_px),
            ("axis_label_font_px", self.axis_label_font_px),
            ("tick_label_font_px", self.tick_label_font_px),
            ("legend_font_px", self.legend_font_px),
        ] {
            if r[0] < 7 {
                return Err(Error::config(name, "font sizes below 7 px are unreadable"));
            }
        }
        if self.title_words[0] < 1 || self.title_words[1] > 2 {
            return Err(Error::config("title_words", "titles have 1 to 2 words"));
        }
        if self.axis_label_words[0] < 1 || self.axis_label_words[1] > 2 {
            return Err(Error::config("axis_label_words", "axis labels have 1 to 2 words"));
        }
        if self.series[0] < 1 || self.series[1] > 5 {
            return Err(Error::config("series", "series count must lie in 1..=5"));
        }
        if self.groups[0] < 1 {
            return Err(Error::config("groups", "need at least one group"));
        }
        if self.slices[0] < 2 || self.slices[1] > 9 {
            return Err(Error::config("slices", "slice count must lie in 2..=9"));
        }
        if !(self.min_slice_fraction > 0.0 && self.min_slice_fraction * (self.slices[1] as f64) < 1.0) {
            return Err(Error::config("min_slice_fraction", "must be positive and leave room for every slice"));
        }
        if self.value_range[0] <= 0.0 {
            return Err(Error::config("value_range", "bar values must be positive"));
        }
        if self.tick_intervals[0] < 2 {
            return Err(Error::config("tick_intervals", "need at least 2 intervals"));
        }
        if self.x_tick_orientations_deg.is_empty() {
            return Err(Error::config("x_tick_orientations_deg", "need at least one orientation"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        GenConfig::default().validate().unwrap();
        GenConfig::simplified().validate().unwrap();
    }

    #[test]
    fn inverted_range_names_field() {
        let c = GenConfig {
            groups: [5, 2],
            ..Default::default()
        };
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "groups"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<GenConfig>(r#"{"serie": [1, 2]}"#).is_err());
        let c: GenConfig = serde_json::from_str(r#"{"series": [1, 2]}"#).unwrap();
        assert_eq!(c.series, [1, 2]);
        assert_eq!(c.slices, [2, 9]);
    }
}
