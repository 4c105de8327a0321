use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Bar,
    Pie,
}

impl ChartKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Bar => "bar",
            ChartKind::Pie => "pie",
        }
    }

    /// Detector class set for this chart kind, in output order (background excluded).
    pub fn classes(self) -> &'static [ObjectClass] {
        match self {
            ChartKind::Bar => &BAR_CLASSES,
            ChartKind::Pie => &PIE_CLASSES,
        }
    }

    pub fn class_index(self, class: ObjectClass) -> Option<usize> {
        self.classes().iter().position(|&c| c == class)
    }
}

impl std::str::FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bar" => Ok(ChartKind::Bar),
            "pie" => Ok(ChartKind::Pie),
            other => Err(Error::Input(format!("unknown chart kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Title,
    XAxisLabel,
    YAxisLabel,
    XTickLabel,
    YTickLabel,
    XTickLine,
    YTickLine,
    LegendLabel,
    LegendMark,
    Bar,
    Pie,
}

pub const BAR_CLASSES: [ObjectClass; 10] = [
    ObjectClass::Title,
    ObjectClass::XAxisLabel,
    ObjectClass::YAxisLabel,
    ObjectClass::XTickLabel,
    ObjectClass::YTickLabel,
    ObjectClass::XTickLine,
    ObjectClass::YTickLine,
    ObjectClass::LegendLabel,
    ObjectClass::LegendMark,
    ObjectClass::Bar,
];

pub const PIE_CLASSES: [ObjectClass; 4] = [
    ObjectClass::Title,
    ObjectClass::Pie,
    ObjectClass::LegendLabel,
    ObjectClass::LegendMark,
];

impl ObjectClass {
    pub fn is_text(self) -> bool {
        matches!(
            self,
            ObjectClass::Title
                | ObjectClass::XAxisLabel
                | ObjectClass::YAxisLabel
                | ObjectClass::XTickLabel
                | ObjectClass::YTickLabel
                | ObjectClass::LegendLabel
        )
    }

    /// Row name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ObjectClass::Title => "Title",
            ObjectClass::XAxisLabel => "X-axis label",
            ObjectClass::YAxisLabel => "Y-axis label",
            ObjectClass::XTickLabel => "X-tick label",
            ObjectClass::YTickLabel => "Y-tick label",
            ObjectClass::XTickLine => "X-tick line",
            ObjectClass::YTickLine => "Y-tick line",
            ObjectClass::LegendLabel => "legend label",
            ObjectClass::LegendMark => "legend mark",
            ObjectClass::Bar => "bar",
            ObjectClass::Pie => "Pie",
        }
    }
}

/// Relation kinds. Endpoint order is fixed per kind: `a` is the first named
/// element. For `SliceLegendMark`, `a` is the slice index in boundary order
/// rather than an object id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    BarLegendMark,
    BarXTickLabel,
    YTickLabelLine,
    LegendMarkLabel,
    SliceLegendMark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub a: u32,
    pub b: u32,
    pub kind: RelationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub id: u32,
    pub class: ObjectClass,
    /// `[x, y, w, h]` in pixels, top-left origin.
    pub bbox: [f64; 4],
    pub orientation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl AnnotatedObject {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }
}

/// Complete ground truth for one rendered chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub image: String,
    pub kind: ChartKind,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub objects: Vec<AnnotatedObject>,
    pub relations: Vec<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_boundary_angles_deg: Option<Vec<f64>>,
    #[serde(default)]
    pub bar_values: BTreeMap<u32, f64>,
}

impl AnnotationSet {
    pub fn object(&self, id: u32) -> Option<&AnnotatedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn of_class(&self, class: ObjectClass) -> impl Iterator<Item = &AnnotatedObject> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    pub fn relations_of(&self, kind: RelationKind) -> impl Iterator<Item = &Relation> {
        self.relations.iter().filter(move |r| r.kind == kind)
    }

    /// Text of the single object of `class`, if present.
    pub fn text_of(&self, class: ObjectClass) -> Option<&str> {
        self.of_class(class).next().and_then(|o| o.text.as_deref())
    }

    /// Checks class membership, relation endpoint types, closure rules and
    /// canvas containment.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(format!("{}: {m}", self.image)));
        let allowed = self.kind.classes();
        for o in &self.objects {
            if !allowed.contains(&o.class) {
                return bad(format!("class {:?} not allowed in a {} chart", o.class, self.kind.as_str()));
            }
            let b = o.bbox();
            if !b.is_valid() || b.x < 0.0 || b.y < 0.0 || b.x2() > self.width as f64 || b.y2() > self.height as f64 {
                return bad(format!("object {} bbox {:?} outside canvas", o.id, o.bbox));
            }
        }
        let class_of = |id: u32| self.object(id).map(|o| o.class);
        let n_slices = self.slice_boundary_angles_deg.as_ref().map_or(0, Vec::len);
        for r in &self.relations {
            let (ea, eb) = match r.kind {
                RelationKind::BarLegendMark => (Some(ObjectClass::Bar), ObjectClass::LegendMark),
                RelationKind::BarXTickLabel => (Some(ObjectClass::Bar), ObjectClass::XTickLabel),
                RelationKind::YTickLabelLine => (Some(ObjectClass::YTickLabel), ObjectClass::YTickLine),
                RelationKind::LegendMarkLabel => (Some(ObjectClass::LegendMark), ObjectClass::LegendLabel),
                RelationKind::SliceLegendMark => (None, ObjectClass::LegendMark),
            };
            let a_ok = match ea {
                Some(c) => class_of(r.a) == Some(c),
                None => (r.a as usize) < n_slices,
            };
            if !a_ok || class_of(r.b) != Some(eb) {
                return bad(format!("relation {r:?} joins wrong types"));
            }
        }
        for bar in self.of_class(ObjectClass::Bar) {
            let n = self
                .relations
                .iter()
                .filter(|r| {
                    r.a == bar.id && matches!(r.kind, RelationKind::BarLegendMark | RelationKind::BarXTickLabel)
                })
                .count();
            if n != 1 {
                return bad(format!("bar {} has {n} label relations", bar.id));
            }
            if !self.bar_values.contains_key(&bar.id) {
                return bad(format!("bar {} has no value", bar.id));
            }
        }
        for mark in self.of_class(ObjectClass::LegendMark) {
            let n = self
                .relations_of(RelationKind::LegendMarkLabel)
                .filter(|r| r.a == mark.id)
                .count();
            if n != 1 {
                return bad(format!("legend mark {} has {n} label relations", mark.id));
            }
        }
        match (self.kind, &self.slice_boundary_angles_deg) {
            (ChartKind::Pie, Some(a)) => {
                if a.len() < 2 || a.windows(2).any(|w| w[1] <= w[0]) || a[0] < 0.0 || a[a.len() - 1] >= 360.0 {
                    return bad("boundary angles not strictly increasing in [0, 360)".into());
                }
            }
            (ChartKind::Bar, None) => {}
            _ => return bad("boundary angles present iff pie".into()),
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_sets_have_table_sizes() {
        assert_eq!(ChartKind::Bar.classes().len(), 10);
        assert_eq!(ChartKind::Pie.classes().len(), 4);
        assert_eq!(ChartKind::Pie.class_index(ObjectClass::Pie), Some(1));
        assert_eq!(ChartKind::Bar.class_index(ObjectClass::Pie), None);
    }

    #[test]
    fn json_field_names() {
        let a = AnnotationSet {
            image: "images/c.png".into(),
            kind: ChartKind::Pie,
            width: 10,
            height: 10,
            seed: 3,
            objects: vec![AnnotatedObject {
                id: 0,
                class: ObjectClass::LegendMark,
                bbox: [1.0, 1.0, 2.0, 2.0],
                orientation_deg: 0.0,
                text: None,
            }],
            relations: vec![Relation {
                a: 0,
                b: 0,
                kind: RelationKind::SliceLegendMark,
            }],
            slice_boundary_angles_deg: Some(vec![0.0, 180.0]),
            bar_values: BTreeMap::new(),
        };
        let line = a.to_json_line().unwrap();
        assert!(line.contains("\"class\":\"legend_mark\""));
        assert!(line.contains("\"kind\":\"slice_legend_mark\""));
        assert_eq!(AnnotationSet::from_json_line(&line).unwrap(), a);
    }
}
