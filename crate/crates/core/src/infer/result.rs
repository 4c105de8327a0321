use std::path::Path;

use serde::{Deserialize, Serialize};

use super::decode::{parse_tick_value, percentages_from_angles, tick_bounds};
use crate::corpus::{AnnotationSet, ChartKind, ObjectClass, RelationKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarTuple {
    /// The x-tick label, or the legend label for charts with a legend.
    pub x_tick_label: String,
    pub value: f64,
    pub lower_tick_label: String,
    pub upper_tick_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieTuple {
    pub legend: String,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub class: ObjectClass,
    pub bbox: [f64; 4],
    pub confidence: f64,
    pub orientation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub chart_type: ChartKind,
    #[serde(default = "one")]
    pub chart_type_confidence: f64,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_axis_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_axis_label: Option<String>,
    #[serde(default)]
    pub bars: Vec<BarTuple>,
    #[serde(default)]
    pub slices: Vec<PieTuple>,
    #[serde(default)]
    pub detections: Vec<DetectionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn one() -> f64 {
    1.0
}

impl ExtractionResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// The result a perfect extractor would produce for an annotated chart.
    pub fn ground_truth(ann: &AnnotationSet) -> Result<Self> {
        let bad = |m: &str| Error::Input(format!("{}: {m}", ann.image));
        let text = |id: u32| -> Result<String> {
            ann.object(id)
                .and_then(|o| o.text.clone())
                .ok_or_else(|| bad(&format!("object {id} has no text")))
        };
        let mark_label = |mark: u32| -> Result<String> {
            let r = ann
                .relations_of(RelationKind::LegendMarkLabel)
                .find(|r| r.a == mark)
                .ok_or_else(|| bad(&format!("legend mark {mark} has no label")))?;
            text(r.b)
        };
        let title = ann.text_of(ObjectClass::Title).unwrap_or_default().to_string();
        let detections = ann
            .objects
            .iter()
            .map(|o| DetectionRecord {
                class: o.class,
                bbox: o.bbox,
                confidence: 1.0,
                orientation_deg: o.orientation_deg,
                text: o.text.clone(),
            })
            .collect();
        let mut out = ExtractionResult {
            chart_type: ann.kind,
            chart_type_confidence: 1.0,
            title,
            x_axis_label: None,
            y_axis_label: None,
            bars: Vec::new(),
            slices: Vec::new(),
            detections,
            flags: Vec::new(),
        };
        match ann.kind {
            ChartKind::Bar => {
                out.x_axis_label = Some(ann.text_of(ObjectClass::XAxisLabel).unwrap_or_default().to_string());
                out.y_axis_label = Some(ann.text_of(ObjectClass::YAxisLabel).unwrap_or_default().to_string());
                let ticks: Vec<(f64, String)> = ann
                    .of_class(ObjectClass::YTickLabel)
                    .filter_map(|o| {
                        let t = o.text.clone()?;
                        parse_tick_value(&t).map(|v| (v, t))
                    })
                    .collect();
                let mut bars: Vec<_> = ann.of_class(ObjectClass::Bar).collect();
                bars.sort_by(|a, b| a.bbox[0].total_cmp(&b.bbox[0]).then(a.id.cmp(&b.id)));
                for bar in bars {
                    let value = *ann
                        .bar_values
                        .get(&bar.id)
                        .ok_or_else(|| bad(&format!("bar {} has no value", bar.id)))?;
                    let rel = ann
                        .relations
                        .iter()
                        .find(|r| {
                            r.a == bar.id && matches!(r.kind, RelationKind::BarLegendMark | RelationKind::BarXTickLabel)
                        })
                        .ok_or_else(|| bad(&format!("bar {} has no label relation", bar.id)))?;
                    let x_tick_label = match rel.kind {
                        RelationKind::BarLegendMark => mark_label(rel.b)?,
                        _ => text(rel.b)?,
                    };
                    let (lower_tick_label, upper_tick_label) = tick_bounds(value, &ticks);
                    out.bars.push(BarTuple {
                        x_tick_label,
                        value,
                        lower_tick_label,
                        upper_tick_label,
                    });
                }
            }
            ChartKind::Pie => {
                let angles = ann
                    .slice_boundary_angles_deg
                    .as_ref()
                    .ok_or_else(|| bad("pie without boundary angles"))?;
                let pct = percentages_from_angles(angles);
                for (k, percentage) in pct.into_iter().enumerate() {
                    let legend = match ann.relations_of(RelationKind::SliceLegendMark).find(|r| r.a as usize == k) {
                        Some(r) => mark_label(r.b)?,
                        None => String::new(),
                    };
                    out.slices.push(PieTuple { legend, percentage });
                }
            }
        }
        Ok(out)
    }
}
