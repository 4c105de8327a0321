use std::collections::HashMap;

use super::{Detection, PairScore, Percept, Perception};
use crate::corpus::{AnnotationSet, ObjectClass, RelationKind, RgbImage};
use crate::error::{Error, Result};

/// Perception that reads ground truth instead of running networks: every
/// annotated object becomes a detection with confidence 1 and its true text,
/// relations score 1 and every other admissible pair 0, and pie angles are
/// the annotated boundaries.
#[derive(Debug, Clone)]
pub struct OraclePerception {
    ann: AnnotationSet,
}

impl OraclePerception {
    /// Oracle that answers every image with `ann`.
    pub fn new(ann: AnnotationSet) -> Self {
        OraclePerception { ann }
    }

    pub fn percept_for(ann: &AnnotationSet) -> Percept {
        let detections: Vec<Detection> = ann
            .objects
            .iter()
            .map(|o| Detection {
                class: o.class,
                bbox: o.bbox(),
                confidence: 1.0,
                orientation_deg: o.orientation_deg,
                text: o.text.clone(),
            })
            .collect();
        let index: HashMap<u32, usize> = ann.objects.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
        let idx_of = |class: ObjectClass| -> Vec<usize> {
            ann.objects
                .iter()
                .enumerate()
                .filter(|(_, o)| o.class == class)
                .map(|(i, _)| i)
                .collect()
        };
        let n_slices = ann.slice_boundary_angles_deg.as_ref().map_or(0, Vec::len);
        let mut pair_scores = Vec::new();
        for (kind, ca, cb) in [
            (RelationKind::BarLegendMark, Some(ObjectClass::Bar), ObjectClass::LegendMark),
            (RelationKind::BarXTickLabel, Some(ObjectClass::Bar), ObjectClass::XTickLabel),
            (RelationKind::YTickLabelLine, Some(ObjectClass::YTickLabel), ObjectClass::YTickLine),
            (RelationKind::LegendMarkLabel, Some(ObjectClass::LegendMark), ObjectClass::LegendLabel),
            (RelationKind::SliceLegendMark, None, ObjectClass::LegendMark),
        ] {
            let a_side: Vec<usize> = match ca {
                Some(c) => idx_of(c),
                None => (0..n_slices).collect(),
            };
            for &a in &a_side {
                for b in idx_of(cb) {
                    let a_id = match ca {
                        Some(_) => ann.objects[a].id,
                        None => a as u32,
                    };
                    let related = ann
                        .relations_of(kind)
                        .any(|r| r.a == a_id && index.get(&r.b) == Some(&b));
                    pair_scores.push(PairScore {
                        a,
                        b,
                        kind,
                        score: if related { 1.0 } else { 0.0 },
                    });
                }
            }
        }
        Percept {
            kind: ann.kind,
            kind_confidence: 1.0,
            detections,
            pair_scores,
            slice_angles_deg: ann.slice_boundary_angles_deg.clone().unwrap_or_default(),
            flags: Vec::new(),
        }
    }
}

impl Perception for OraclePerception {
    fn perceive(&self, image: &RgbImage) -> Result<Percept> {
        if (image.width, image.height) != (self.ann.width as usize, self.ann.height as usize) {
            return Err(Error::Input(format!(
                "image is {}x{} but the annotation describes {}x{}",
                image.width, image.height, self.ann.width, self.ann.height
            )));
        }
        Ok(Self::percept_for(&self.ann))
    }
}
